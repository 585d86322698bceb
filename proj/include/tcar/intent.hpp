#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace tcar {

enum class Intent {
  WelcomeGreetings,
  QuestionOnSelf,
  WhGeneral,
  Instruction,
  QuestionOwnLocation,
  ByeGreetings,
};

inline constexpr std::array<Intent, 6> kAllIntents = {
    Intent::WelcomeGreetings, Intent::QuestionOnSelf,      Intent::WhGeneral,
    Intent::Instruction,      Intent::QuestionOwnLocation, Intent::ByeGreetings};

std::string_view to_string(Intent intent);
Intent parse_intent(std::string_view name);

struct IntentHyperParams {
  int epochs = 40;
  double learning_rate = 0.1;
  double l2 = 1e-4;
  std::uint64_t seed = 1;
  std::vector<int> ngram_orders = {1, 2};
};

struct IntentPrediction {
  Intent intent = Intent::WhGeneral;
  std::array<double, 6> distribution{};  // indexed like kAllIntents
  // No known n-gram fired; distribution is uniform.
  bool low_confidence = false;

  double probability() const { return distribution[static_cast<std::size_t>(intent)]; }
};

struct IntentExample {
  std::string utterance;
  Intent intent;
};

// Lowercased, punctuation-stripped word n-gram features (`n1=`, `n2=` ...).
std::vector<std::string> intent_features(std::string_view utterance, const std::vector<int>& orders);

// Multinomial logistic regression over word n-grams.
class IntentModel {
 public:
  IntentModel() = default;

  IntentPrediction classify(std::string_view utterance) const;
  bool empty() const { return weights_.empty() && bias_ == std::array<double, 6>{}; }

  const std::vector<int>& ngram_orders() const { return orders_; }
  std::size_t num_features() const { return features_.size(); }
  double weight(std::string_view feature, Intent intent) const;

  std::string serialize() const;
  static IntentModel deserialize(const std::string& text);
  void save(const std::string& path) const;
  static IntentModel load(const std::string& path);

 private:
  friend IntentModel train_intents(const std::vector<IntentExample>&, const IntentHyperParams&);

  std::vector<int> orders_ = {1, 2};
  std::vector<std::string> features_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> weights_;  // feature * 6 + intent
  std::array<double, 6> bias_{};
  IntentHyperParams hyper_;
};

// Throws InsufficientExamplesError when an intent has fewer than three examples.
IntentModel train_intents(const std::vector<IntentExample>& corpus, const IntentHyperParams& hyper = {});

// `utterance<TAB>intent` per line.
std::vector<IntentExample> load_intent_corpus(const std::string& path);

}  // namespace tcar
