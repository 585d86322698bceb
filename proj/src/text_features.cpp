#include "tcar/text_features.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <sstream>

#include "tcar/error.hpp"

namespace tcar {

namespace {

constexpr std::array<std::string_view, 11> kPosNames = {
    "NOUN", "VERB", "ADJ", "ADV", "PRON", "DET", "ADP", "NUM", "CONJ", "PART", "OTHER"};

bool is_punct_char(char c) {
  switch (c) {
    case '.': case ',': case '!': case '?': case ';': case ':':
    case '"': case '(': case ')': case '[': case ']':
      return true;
    default:
      return false;
  }
}

bool all_punct(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::ispunct(static_cast<unsigned char>(c)) != 0;
  });
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, '\t')) out.push_back(field);
  return out;
}

template <typename Fn>
void read_tsv(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open resource file: " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected surface<TAB>lemma<TAB>POS");
    }
    fn(fields[0], fields[1], parse_pos(fields[2]));
  }
}

std::string offset_tag(int k) {
  if (k > 0) return "+" + std::to_string(k);
  return std::to_string(k);
}

std::string distance_bin(std::size_t d) {
  return d >= 4 ? std::string("4+") : std::to_string(d);
}

}  // namespace

std::string_view to_string(Pos pos) { return kPosNames[static_cast<std::size_t>(pos)]; }

Pos parse_pos(std::string_view text) {
  for (std::size_t i = 0; i < kPosNames.size(); ++i) {
    if (kPosNames[i] == text) return static_cast<Pos>(i);
  }
  throw FormatError("unknown POS tag: " + std::string(text));
}

bool FeatureVector::contains(std::string_view name) const {
  return std::any_of(features.begin(), features.end(),
                     [&](const Feature& f) { return f.name == name; });
}

// ---------------------------------------------------------------------------
// Lexicon

Lexicon Lexicon::load(const std::string& lexicon_path, const std::string& irregular_path) {
  Lexicon lex;
  read_tsv(lexicon_path, [&](const std::string& s, const std::string& l, Pos p) { lex.add(s, l, p); });
  read_tsv(irregular_path,
           [&](const std::string& s, const std::string& l, Pos p) { lex.add_irregular(s, l, p); });
  return lex;
}

Lexicon Lexicon::load_dir(const std::string& dir) {
  return load(dir + "/lexicon.tsv", dir + "/irregular.tsv");
}

void Lexicon::add(std::string surface, std::string lemma, Pos pos) {
  if (pos == Pos::Verb) verb_lemmas_.insert(lemma);
  entries_[to_lower(surface)].push_back({to_lower(lemma), pos});
}

void Lexicon::add_irregular(std::string surface, std::string lemma, Pos pos) {
  if (pos == Pos::Verb) verb_lemmas_.insert(to_lower(lemma));
  irregular_[to_lower(surface)] = {to_lower(lemma), pos};
}

const std::vector<Lexicon::Entry>* Lexicon::find(std::string_view lower) const {
  auto it = entries_.find(std::string(lower));
  return it == entries_.end() ? nullptr : &it->second;
}

const Lexicon::Entry* Lexicon::find_irregular(std::string_view lower) const {
  auto it = irregular_.find(std::string(lower));
  return it == irregular_.end() ? nullptr : &it->second;
}

bool Lexicon::is_verb_lemma(std::string_view lemma) const {
  return verb_lemmas_.count(std::string(lemma)) != 0;
}

// ---------------------------------------------------------------------------
// Tokenizer

std::string to_lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string word_shape(std::string_view surface) {
  std::string shape;
  for (char ch : surface) {
    auto c = static_cast<unsigned char>(ch);
    char cls = std::isupper(c) ? 'X' : std::islower(c) ? 'x' : std::isdigit(c) ? 'd' : 'p';
    if (shape.empty() || shape.back() != cls) shape.push_back(cls);
  }
  return shape;
}

TokenSequence tokenize(std::string_view utterance) {
  TokenSequence tokens;
  auto push = [&](std::string_view s) {
    Token t;
    t.surface = std::string(s);
    t.index = tokens.size();
    tokens.push_back(std::move(t));
  };

  std::size_t i = 0;
  while (i < utterance.size()) {
    while (i < utterance.size() && std::isspace(static_cast<unsigned char>(utterance[i]))) ++i;
    std::size_t start = i;
    while (i < utterance.size() && !std::isspace(static_cast<unsigned char>(utterance[i]))) ++i;
    std::string_view chunk = utterance.substr(start, i - start);
    if (chunk.empty()) continue;

    std::size_t lead = 0;
    while (lead < chunk.size() && is_punct_char(chunk[lead])) ++lead;
    std::size_t trail = chunk.size();
    while (trail > lead && is_punct_char(chunk[trail - 1])) --trail;

    for (std::size_t k = 0; k < lead; ++k) push(chunk.substr(k, 1));
    if (trail > lead) {
      std::string_view word = chunk.substr(lead, trail - lead);
      if (word.size() > 2 && ends_with(to_lower(word), "'s")) {
        push(word.substr(0, word.size() - 2));
        push(word.substr(word.size() - 2));
      } else {
        push(word);
      }
    }
    for (std::size_t k = trail; k < chunk.size(); ++k) push(chunk.substr(k, 1));
  }
  if (tokens.empty()) throw EmptyInputError("utterance is blank");
  return tokens;
}

// ---------------------------------------------------------------------------
// Analyzer

std::string Analyzer::lemmatize(const std::string& lower, Pos pos) const {
  auto known = [&](const std::string& cand) {
    return lexicon_.find(cand) != nullptr || lexicon_.is_verb_lemma(cand);
  };
  std::vector<std::string> cands;
  if (pos == Pos::Verb) {
    if (ends_with(lower, "ing") && lower.size() > 4) {
      std::string base = lower.substr(0, lower.size() - 3);
      cands.push_back(base);
      cands.push_back(base + "e");
      if (base.size() > 2 && base[base.size() - 1] == base[base.size() - 2]) {
        cands.push_back(base.substr(0, base.size() - 1));
      }
    } else if (ends_with(lower, "ed") && lower.size() > 3) {
      std::string base = lower.substr(0, lower.size() - 2);
      cands.push_back(base);
      cands.push_back(lower.substr(0, lower.size() - 1));
      if (base.size() > 2 && base[base.size() - 1] == base[base.size() - 2]) {
        cands.push_back(base.substr(0, base.size() - 1));
      }
    } else if (ends_with(lower, "es") && lower.size() > 3) {
      cands.push_back(lower.substr(0, lower.size() - 2));
      cands.push_back(lower.substr(0, lower.size() - 1));
    } else if (ends_with(lower, "s") && !ends_with(lower, "ss") && lower.size() > 2) {
      cands.push_back(lower.substr(0, lower.size() - 1));
    }
  } else if (pos == Pos::Noun) {
    if (ends_with(lower, "ies") && lower.size() > 4) {
      cands.push_back(lower.substr(0, lower.size() - 3) + "y");
    } else if (ends_with(lower, "es") && lower.size() > 3) {
      cands.push_back(lower.substr(0, lower.size() - 2));
      cands.push_back(lower.substr(0, lower.size() - 1));
    } else if (ends_with(lower, "s") && !ends_with(lower, "ss") && lower.size() > 3) {
      cands.push_back(lower.substr(0, lower.size() - 1));
    }
  }
  for (const auto& c : cands) {
    if (known(c)) return c;
  }
  // Unknown stems: keep regular noun plurals stripped, everything else as-is.
  if (pos == Pos::Noun && !cands.empty() && !ends_with(lower, "es")) return cands.front();
  return lower;
}

Pos Analyzer::fallback_pos(const std::string& lower, std::size_t index) const {
  if (std::all_of(lower.begin(), lower.end(), [](unsigned char c) { return std::isdigit(c); })) {
    return Pos::Num;
  }
  if (all_punct(lower)) return Pos::Other;
  if (ends_with(lower, "ly") && lower.size() > 4) return Pos::Adv;
  if ((ends_with(lower, "ing") && lower.size() > 4) || (ends_with(lower, "ed") && lower.size() > 3)) {
    return Pos::Verb;
  }
  for (std::string_view suf : {"ous", "ful", "able", "ible", "ive", "less", "ish"}) {
    if (ends_with(lower, suf) && lower.size() > suf.size() + 2) return Pos::Adj;
  }
  // Bare unknown word opening an instruction: imperative reading.
  if (index == 0) return Pos::Verb;
  return Pos::Noun;
}

TokenSequence Analyzer::analyze(TokenSequence tokens) const {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    Token& tok = tokens[i];
    tok.index = i;
    tok.shape = word_shape(tok.surface);
    const std::string lower = to_lower(tok.surface);

    bool imperative = (i == 0);
    if (i > 0) {
      const Token& prev = tokens[i - 1];
      const std::string pl = to_lower(prev.surface);
      imperative = prev.pos == Pos::Conj || pl == "please" || pl == "then" || pl == "," ||
                   pl == ";" || pl == "and" || pl == "to";
    }

    if (all_punct(lower)) {
      tok.lemma = lower;
      tok.pos = Pos::Other;
      continue;
    }

    if (const auto* entries = lexicon_.find(lower)) {
      const Lexicon::Entry* chosen = &entries->front();
      auto verb = std::find_if(entries->begin(), entries->end(),
                               [](const Lexicon::Entry& e) { return e.pos == Pos::Verb; });
      auto other = std::find_if(entries->begin(), entries->end(),
                                [](const Lexicon::Entry& e) { return e.pos != Pos::Verb; });
      if (verb != entries->end() && (imperative || other == entries->end())) {
        chosen = &*verb;
      } else if (other != entries->end()) {
        chosen = &*other;
      }
      tok.lemma = chosen->lemma;
      tok.pos = chosen->pos;
      continue;
    }
    if (const auto* irr = lexicon_.find_irregular(lower)) {
      tok.lemma = irr->lemma;
      tok.pos = irr->pos;
      continue;
    }

    // Regular inflection of a known verb or noun.
    std::string verb_lemma = lemmatize(lower, Pos::Verb);
    if (verb_lemma != lower && lexicon_.is_verb_lemma(verb_lemma)) {
      tok.lemma = verb_lemma;
      tok.pos = Pos::Verb;
      continue;
    }
    std::string noun_lemma = lemmatize(lower, Pos::Noun);
    if (noun_lemma != lower) {
      if (lexicon_.find(noun_lemma) != nullptr) {
        tok.lemma = noun_lemma;
        tok.pos = Pos::Noun;
        continue;
      }
    }

    tok.pos = fallback_pos(lower, i);
    tok.lemma = lemmatize(lower, tok.pos);
    if (tok.lemma.empty()) tok.lemma = lower;
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// Featurizer

std::string Featurizer::version() const {
  return std::string(kVersion) + ";window=" + std::to_string(window_);
}

FeatureVector Featurizer::featurize(const TokenSequence& tokens, std::size_t position) const {
  if (position >= tokens.size()) {
    throw IndexOutOfRangeError("feature position " + std::to_string(position) +
                               " out of range for sentence of length " +
                               std::to_string(tokens.size()));
  }
  FeatureVector fv;
  auto add = [&](std::string name) { fv.features.push_back({std::move(name), 1.0}); };

  const auto n = static_cast<long>(tokens.size());
  const auto pos = static_cast<long>(position);
  auto lemma_at = [&](long j) -> std::string {
    if (j < 0) return "<BOS>";
    if (j >= n) return "<EOS>";
    return tokens[static_cast<std::size_t>(j)].lemma;
  };

  add("bias");
  for (int k = -window_; k <= window_; ++k) {
    const long j = pos + k;
    const std::string tag = offset_tag(k);
    if (j < 0 || j >= n) {
      const char* marker = j < 0 ? "<BOS>" : "<EOS>";
      add("w[" + tag + "]=" + marker);
      add("p[" + tag + "]=" + marker);
      add("s[" + tag + "]=" + marker);
    } else {
      const Token& t = tokens[static_cast<std::size_t>(j)];
      add("w[" + tag + "]=" + t.lemma);
      add("p[" + tag + "]=" + std::string(to_string(t.pos)));
      add("s[" + tag + "]=" + t.shape);
    }
  }
  add(std::string("first=") + (pos == 0 ? "1" : "0"));
  add(std::string("last=") + (pos == n - 1 ? "1" : "0"));
  add("w[-1]|w[0]=" + lemma_at(pos - 1) + "|" + lemma_at(pos));
  add("w[0]|w[+1]=" + lemma_at(pos) + "|" + lemma_at(pos + 1));

  // Stand-in for syntactic head: nearest preceding verb and its distance.
  long v = pos - 1;
  while (v >= 0 && tokens[static_cast<std::size_t>(v)].pos != Pos::Verb) --v;
  if (v >= 0) {
    add("pv=" + tokens[static_cast<std::size_t>(v)].lemma);
    add("pvd=" + distance_bin(static_cast<std::size_t>(pos - v)));
  } else {
    add("pv=<NONE>");
    add("pvd=<NONE>");
  }
  return fv;
}

std::vector<FeatureVector> Featurizer::featurize_all(const TokenSequence& tokens) const {
  std::vector<FeatureVector> out;
  out.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) out.push_back(featurize(tokens, i));
  return out;
}

}  // namespace tcar
