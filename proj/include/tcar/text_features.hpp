#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace tcar {

enum class Pos { Noun, Verb, Adj, Adv, Pron, Det, Adp, Num, Conj, Part, Other };

std::string_view to_string(Pos pos);
Pos parse_pos(std::string_view text);

struct Token {
  std::string surface;
  std::size_t index = 0;
  std::string lemma;
  Pos pos = Pos::Other;
  std::string shape;
};

using TokenSequence = std::vector<Token>;

struct Feature {
  std::string name;
  double value = 1.0;

  bool operator==(const Feature&) const = default;
};

// Activations for one token position, in generation order.
struct FeatureVector {
  std::vector<Feature> features;

  bool contains(std::string_view name) const;
  bool operator==(const FeatureVector&) const = default;
};

// Closed-class lexicon plus irregular inflections. Both resource files use
// one tab-separated `surface  lemma  POS` entry per line; `#` starts a
// comment. A surface may appear more than once with different tags.
class Lexicon {
 public:
  struct Entry {
    std::string lemma;
    Pos pos;
  };

  static Lexicon load(const std::string& lexicon_path, const std::string& irregular_path);
  // Loads `lexicon.tsv` and `irregular.tsv` from a resource directory.
  static Lexicon load_dir(const std::string& dir);

  void add(std::string surface, std::string lemma, Pos pos);
  void add_irregular(std::string surface, std::string lemma, Pos pos);

  const std::vector<Entry>* find(std::string_view lower) const;
  const Entry* find_irregular(std::string_view lower) const;
  bool is_verb_lemma(std::string_view lemma) const;

 private:
  std::unordered_map<std::string, std::vector<Entry>> entries_;
  std::unordered_map<std::string, Entry> irregular_;
  std::unordered_set<std::string> verb_lemmas_;
};

// Splits an utterance into word and punctuation tokens. Throws
// EmptyInputError on a blank utterance.
TokenSequence tokenize(std::string_view utterance);

std::string to_lower(std::string_view text);
std::string word_shape(std::string_view surface);

// Fills lemma, POS and shape. Stateless after construction.
class Analyzer {
 public:
  explicit Analyzer(Lexicon lexicon) : lexicon_(std::move(lexicon)) {}

  TokenSequence analyze(TokenSequence tokens) const;
  TokenSequence analyze(std::string_view utterance) const { return analyze(tokenize(utterance)); }

  const Lexicon& lexicon() const { return lexicon_; }

 private:
  std::string lemmatize(const std::string& lower, Pos pos) const;
  Pos fallback_pos(const std::string& lower, std::size_t index) const;

  Lexicon lexicon_;
};

// Window feature extraction. Offsets outside the sentence read as <BOS>/<EOS>.
class Featurizer {
 public:
  static constexpr std::string_view kVersion = "tcar-features/1";

  explicit Featurizer(int window = 2) : window_(window) {}

  FeatureVector featurize(const TokenSequence& tokens, std::size_t position) const;
  std::vector<FeatureVector> featurize_all(const TokenSequence& tokens) const;

  int window() const { return window_; }
  // Identifies the feature namespace; recorded in every model file.
  std::string version() const;

 private:
  int window_;
};

inline FeatureVector featurize(const TokenSequence& tokens, std::size_t position, int window = 2) {
  return Featurizer(window).featurize(tokens, position);
}

}  // namespace tcar
