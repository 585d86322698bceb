#include "tcar/intent.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "tcar/error.hpp"

namespace tcar {

namespace {

constexpr std::array<std::string_view, 6> kIntentNames = {
    "welcome_greetings", "question_on_self",      "wh_general",
    "instruction",       "question_own_location", "bye_greetings"};

constexpr std::size_t K = 6;

std::array<double, K> softmax(const std::array<double, K>& scores) {
  const double m = *std::max_element(scores.begin(), scores.end());
  std::array<double, K> p{};
  double z = 0.0;
  for (std::size_t k = 0; k < K; ++k) z += (p[k] = std::exp(scores[k] - m));
  for (auto& v : p) v /= z;
  return p;
}

}  // namespace

std::string_view to_string(Intent intent) { return kIntentNames[static_cast<std::size_t>(intent)]; }

Intent parse_intent(std::string_view name) {
  for (std::size_t i = 0; i < K; ++i) {
    if (kIntentNames[i] == name) return static_cast<Intent>(i);
  }
  throw UnknownLabelError("unknown intent: " + std::string(name));
}

std::vector<std::string> intent_features(std::string_view utterance, const std::vector<int>& orders) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : utterance) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || ch == '\'' || ch == '-') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));

  std::vector<std::string> feats;
  for (int n : orders) {
    if (n <= 0 || static_cast<std::size_t>(n) > words.size()) continue;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= words.size(); ++i) {
      std::string f = "n" + std::to_string(n) + "=";
      for (int k = 0; k < n; ++k) {
        if (k) f += '_';
        f += words[i + static_cast<std::size_t>(k)];
      }
      feats.push_back(std::move(f));
    }
  }
  return feats;
}

double IntentModel::weight(std::string_view feature, Intent intent) const {
  auto it = index_.find(std::string(feature));
  if (it == index_.end()) return 0.0;
  return weights_[it->second * K + static_cast<std::size_t>(intent)];
}

IntentPrediction IntentModel::classify(std::string_view utterance) const {
  IntentPrediction out;
  std::array<double, K> scores = bias_;
  bool any = false;
  for (const auto& f : intent_features(utterance, orders_)) {
    auto it = index_.find(f);
    if (it == index_.end()) continue;
    any = true;
    for (std::size_t k = 0; k < K; ++k) scores[k] += weights_[it->second * K + k];
  }
  if (!any) {
    out.intent = Intent::WhGeneral;
    out.distribution.fill(1.0 / K);
    out.low_confidence = true;
    return out;
  }
  out.distribution = softmax(scores);
  std::size_t best = 0;
  for (std::size_t k = 1; k < K; ++k) {
    if (out.distribution[k] > out.distribution[best]) best = k;
  }
  out.intent = static_cast<Intent>(best);
  return out;
}

IntentModel train_intents(const std::vector<IntentExample>& corpus, const IntentHyperParams& hyper) {
  std::array<int, K> counts{};
  for (const auto& ex : corpus) ++counts[static_cast<std::size_t>(ex.intent)];
  for (std::size_t k = 0; k < K; ++k) {
    if (counts[k] < 3) {
      throw InsufficientExamplesError("intent '" + std::string(kIntentNames[k]) + "' has " +
                                      std::to_string(counts[k]) + " examples; at least 3 required");
    }
  }

  IntentModel m;
  m.orders_ = hyper.ngram_orders;
  m.hyper_ = hyper;
  std::vector<std::vector<std::size_t>> feats(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (const auto& f : intent_features(corpus[i].utterance, m.orders_)) {
      auto [it, inserted] = m.index_.emplace(f, m.features_.size());
      if (inserted) m.features_.push_back(f);
      feats[i].push_back(it->second);
    }
  }
  m.weights_.assign(m.features_.size() * K, 0.0);

  std::mt19937_64 rng(hyper.seed);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  const double n = static_cast<double>(corpus.size());
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    const double rate = hyper.learning_rate / std::sqrt(static_cast<double>(epoch));
    const double decay = 1.0 - rate * hyper.l2 / n;
    for (std::size_t idx : order) {
      std::array<double, K> scores = m.bias_;
      for (auto f : feats[idx]) {
        for (std::size_t k = 0; k < K; ++k) scores[k] += m.weights_[f * K + k];
      }
      const auto p = softmax(scores);
      const auto y = static_cast<std::size_t>(corpus[idx].intent);
      for (auto& w : m.weights_) w *= decay;
      for (std::size_t k = 0; k < K; ++k) {
        const double g = (k == y ? 1.0 : 0.0) - p[k];
        m.bias_[k] += rate * g;
        for (auto f : feats[idx]) m.weights_[f * K + k] += rate * g;
      }
    }
  }
  return m;
}

std::string IntentModel::serialize() const {
  using nlohmann::json;
  json j;
  j["format"] = "tcar-intent";
  j["version"] = 1;
  j["intents"] = std::vector<std::string>(kIntentNames.begin(), kIntentNames.end());
  j["ngram_orders"] = orders_;
  j["features"] = features_;
  j["weights"] = weights_;
  j["bias"] = bias_;
  j["training"] = {{"epochs", hyper_.epochs},
                   {"learning_rate", hyper_.learning_rate},
                   {"l2", hyper_.l2},
                   {"seed", hyper_.seed}};
  return j.dump(1) + "\n";
}

IntentModel IntentModel::deserialize(const std::string& text) {
  using nlohmann::json;
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != "tcar-intent" || j.at("version").get<int>() != 1) {
      throw ModelFormatError("not a version-1 intent model");
    }
    const auto names = j.at("intents").get<std::vector<std::string>>();
    if (names != std::vector<std::string>(kIntentNames.begin(), kIntentNames.end())) {
      throw ModelFormatError("intent alphabet mismatch");
    }
    IntentModel m;
    m.orders_ = j.at("ngram_orders").get<std::vector<int>>();
    m.features_ = j.at("features").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < m.features_.size(); ++i) m.index_.emplace(m.features_[i], i);
    m.weights_ = j.at("weights").get<std::vector<double>>();
    if (m.weights_.size() != m.features_.size() * K) throw ModelFormatError("intent weight block size mismatch");
    m.bias_ = j.at("bias").get<std::array<double, K>>();
    const auto& t = j.at("training");
    m.hyper_.epochs = t.at("epochs").get<int>();
    m.hyper_.learning_rate = t.at("learning_rate").get<double>();
    m.hyper_.l2 = t.at("l2").get<double>();
    m.hyper_.seed = t.at("seed").get<std::uint64_t>();
    m.hyper_.ngram_orders = m.orders_;
    return m;
  } catch (const json::exception& e) {
    throw ModelFormatError(std::string("malformed intent model: ") + e.what());
  }
}

void IntentModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file: " + path);
  out << serialize();
}

IntentModel IntentModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

std::vector<IntentExample> load_intent_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open intent corpus: " + path);
  std::vector<IntentExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected utterance<TAB>intent");
    }
    out.push_back({line.substr(0, tab), parse_intent(line.substr(tab + 1))});
  }
  return out;
}

}  // namespace tcar
