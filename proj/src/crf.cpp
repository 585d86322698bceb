#include "tcar/crf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "tcar/error.hpp"

namespace tcar {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kFormatVersion = 1;

double log_sum_exp(std::span<const double> xs) {
  double m = kNegInf;
  for (double x : xs) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

// Dense per-position lattice quantities for one sequence.
struct Lattice {
  std::size_t n = 0;
  std::size_t labels = 0;
  std::vector<double> emit;   // n * L
  std::vector<double> alpha;  // n * L
  std::vector<double> beta;   // n * L
  double log_z = 0.0;

  double& e(std::size_t i, std::size_t y) { return emit[i * labels + y]; }
  double& a(std::size_t i, std::size_t y) { return alpha[i * labels + y]; }
  double& b(std::size_t i, std::size_t y) { return beta[i * labels + y]; }
};

void compute_emissions(const CrfModel& model, const CompiledSequence& seq, Lattice& lat) {
  const std::size_t L = model.num_labels();
  const auto params = model.parameters();
  lat.n = seq.items.size();
  lat.labels = L;
  lat.emit.assign(lat.n * L, 0.0);
  for (std::size_t i = 0; i < lat.n; ++i) {
    for (const auto& [f, v] : seq.items[i].attributes) {
      const double* row = &params[model.emission_offset(f, 0)];
      for (std::size_t y = 0; y < L; ++y) lat.e(i, y) += v * row[y];
    }
  }
}

void forward_backward(const CrfModel& model, Lattice& lat) {
  const std::size_t L = lat.labels;
  const std::size_t n = lat.n;
  const auto params = model.parameters();
  lat.alpha.assign(n * L, kNegInf);
  lat.beta.assign(n * L, 0.0);
  std::vector<double> buf(L);

  for (std::size_t y = 0; y < L; ++y) lat.a(0, y) = params[model.start_offset(y)] + lat.e(0, y);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t y = 0; y < L; ++y) {
      for (std::size_t p = 0; p < L; ++p) buf[p] = lat.a(i - 1, p) + params[model.transition_offset(p, y)];
      lat.a(i, y) = log_sum_exp(buf) + lat.e(i, y);
    }
  }
  lat.log_z = log_sum_exp(std::span<const double>(&lat.alpha[(n - 1) * L], L));

  for (std::size_t i = n - 1; i-- > 0;) {
    for (std::size_t p = 0; p < L; ++p) {
      for (std::size_t y = 0; y < L; ++y) {
        buf[y] = params[model.transition_offset(p, y)] + lat.e(i + 1, y) + lat.b(i + 1, y);
      }
      lat.b(i, p) = log_sum_exp(buf);
    }
  }
}

std::vector<std::size_t> resolve_labels(const CrfModel& model, const std::vector<std::string>& labels) {
  std::vector<std::size_t> ids;
  ids.reserve(labels.size());
  for (const auto& l : labels) ids.push_back(model.require_label(l));
  return ids;
}

// Adds scale * (empirical - expected) feature counts into `out`.
void accumulate_gradient(const CrfModel& model, const CompiledSequence& seq,
                         std::span<const std::size_t> gold, Lattice& lat, double scale,
                         std::span<double> out) {
  const std::size_t L = lat.labels;
  const std::size_t n = lat.n;
  // `out` may alias the model parameters, so read transitions from a copy.
  std::vector<double> trans(L * L);
  for (std::size_t p = 0; p < L; ++p) {
    for (std::size_t y = 0; y < L; ++y) trans[p * L + y] = model.parameters()[model.transition_offset(p, y)];
  }
  std::vector<double> marg(L);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t y = 0; y < L; ++y) marg[y] = std::exp(lat.a(i, y) + lat.b(i, y) - lat.log_z);
    for (const auto& [f, v] : seq.items[i].attributes) {
      double* row = &out[model.emission_offset(f, 0)];
      for (std::size_t y = 0; y < L; ++y) row[y] -= scale * v * marg[y];
      row[gold[i]] += scale * v;
    }
    if (i == 0) {
      for (std::size_t y = 0; y < L; ++y) out[model.start_offset(y)] -= scale * marg[y];
      out[model.start_offset(gold[0])] += scale;
    } else {
      for (std::size_t p = 0; p < L; ++p) {
        for (std::size_t y = 0; y < L; ++y) {
          const double pm = std::exp(lat.a(i - 1, p) + trans[p * L + y] +
                                     lat.e(i, y) + lat.b(i, y) - lat.log_z);
          out[model.transition_offset(p, y)] -= scale * pm;
        }
      }
      out[model.transition_offset(gold[i - 1], gold[i])] += scale;
    }
  }
}

std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  // Portable across standard libraries, unlike uniform_int_distribution.
  return rng() % bound;
}

}  // namespace

// ---------------------------------------------------------------------------
// CrfModel

CrfModel::CrfModel(std::vector<std::string> labels, std::string featurizer_version)
    : labels_(std::move(labels)), featurizer_version_(std::move(featurizer_version)) {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!label_index_.emplace(labels_[i], i).second) {
      throw FormatError("duplicate label in alphabet: " + labels_[i]);
    }
  }
  params_.assign(labels_.size() + labels_.size() * labels_.size(), 0.0);
}

std::optional<std::size_t> CrfModel::label_index(std::string_view label) const {
  auto it = label_index_.find(std::string(label));
  if (it == label_index_.end()) return std::nullopt;
  return it->second;
}

std::size_t CrfModel::require_label(std::string_view label) const {
  auto id = label_index(label);
  if (!id) throw UnknownLabelError("label not in alphabet: " + std::string(label));
  return *id;
}

std::optional<std::size_t> CrfModel::feature_index(std::string_view name) const {
  auto it = feature_index_.find(std::string(name));
  if (it == feature_index_.end()) return std::nullopt;
  return it->second;
}

std::size_t CrfModel::intern_feature(const std::string& name) {
  auto [it, inserted] = feature_index_.emplace(name, features_.size());
  if (inserted) {
    const std::size_t L = labels_.size();
    features_.push_back(name);
    // Emission block grows at the front of the transition block.
    params_.insert(params_.begin() + static_cast<std::ptrdiff_t>((features_.size() - 1) * L), L, 0.0);
  }
  return it->second;
}

double CrfModel::emission_weight(std::string_view feature, std::string_view label) const {
  auto f = feature_index(feature);
  if (!f) return 0.0;
  return params_[emission_offset(*f, require_label(label))];
}

double CrfModel::start_weight(std::string_view label) const {
  return params_[start_offset(require_label(label))];
}

double CrfModel::transition_weight(std::string_view prev, std::string_view label) const {
  return params_[transition_offset(require_label(prev), require_label(label))];
}

CompiledSequence CrfModel::compile(const std::vector<FeatureVector>& items) const {
  CompiledSequence seq;
  seq.items.resize(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (const auto& feat : items[i].features) {
      if (auto id = feature_index(feat.name)) seq.items[i].attributes.emplace_back(*id, feat.value);
    }
  }
  return seq;
}

std::string CrfModel::serialize() const {
  using nlohmann::json;
  json j;
  j["format"] = "tcar-crf";
  j["version"] = kFormatVersion;
  j["featurizer_version"] = featurizer_version_;
  j["labels"] = labels_;
  j["features"] = features_;
  j["l2"] = l2_;
  j["training"] = {{"epochs", meta_.epochs},
                   {"seed", meta_.seed},
                   {"learning_rate", meta_.learning_rate},
                   {"objective", meta_.objective},
                   {"rejected_epochs", meta_.rejected_epochs}};
  json emission = json::array();
  const std::size_t L = labels_.size();
  for (std::size_t f = 0; f < features_.size(); ++f) {
    for (std::size_t y = 0; y < L; ++y) {
      const double w = params_[emission_offset(f, y)];
      if (w != 0.0) emission.push_back(json::array({f, y, w}));
    }
  }
  j["emission"] = std::move(emission);
  std::vector<double> start(L), trans(L * L);
  for (std::size_t y = 0; y < L; ++y) start[y] = params_[start_offset(y)];
  for (std::size_t p = 0; p < L; ++p) {
    for (std::size_t y = 0; y < L; ++y) trans[p * L + y] = params_[transition_offset(p, y)];
  }
  j["start"] = start;
  j["transition"] = trans;
  return j.dump(1) + "\n";
}

CrfModel CrfModel::deserialize(const std::string& text, const std::string& expected_featurizer_version) {
  using nlohmann::json;
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != "tcar-crf") throw ModelFormatError("not a CRF model file");
    if (j.at("version").get<int>() != kFormatVersion) {
      throw ModelFormatError("unsupported CRF model version " + std::to_string(j.at("version").get<int>()));
    }
    const auto fv = j.at("featurizer_version").get<std::string>();
    if (!expected_featurizer_version.empty() && fv != expected_featurizer_version) {
      throw ModelFormatError("featurizer version mismatch: model has '" + fv + "', expected '" +
                             expected_featurizer_version + "'");
    }
    CrfModel m(j.at("labels").get<std::vector<std::string>>(), fv);
    const auto feats = j.at("features").get<std::vector<std::string>>();
    const std::size_t L = m.labels_.size();
    m.features_ = feats;
    for (std::size_t f = 0; f < feats.size(); ++f) {
      if (!m.feature_index_.emplace(feats[f], f).second) throw ModelFormatError("duplicate feature " + feats[f]);
    }
    m.params_.assign(feats.size() * L + L + L * L, 0.0);
    for (const auto& e : j.at("emission")) {
      const auto f = e.at(0).get<std::size_t>();
      const auto y = e.at(1).get<std::size_t>();
      if (f >= feats.size() || y >= L) throw ModelFormatError("emission index out of range");
      m.params_[m.emission_offset(f, y)] = e.at(2).get<double>();
    }
    const auto start = j.at("start").get<std::vector<double>>();
    const auto trans = j.at("transition").get<std::vector<double>>();
    if (start.size() != L || trans.size() != L * L) throw ModelFormatError("transition block size mismatch");
    for (std::size_t y = 0; y < L; ++y) m.params_[m.start_offset(y)] = start[y];
    for (std::size_t p = 0; p < L; ++p) {
      for (std::size_t y = 0; y < L; ++y) m.params_[m.transition_offset(p, y)] = trans[p * L + y];
    }
    m.l2_ = j.at("l2").get<double>();
    const auto& t = j.at("training");
    m.meta_.epochs = t.at("epochs").get<int>();
    m.meta_.seed = t.at("seed").get<std::uint64_t>();
    m.meta_.learning_rate = t.at("learning_rate").get<double>();
    m.meta_.objective = t.at("objective").get<std::vector<double>>();
    m.meta_.rejected_epochs = t.at("rejected_epochs").get<int>();
    return m;
  } catch (const json::exception& e) {
    throw ModelFormatError(std::string("malformed CRF model: ") + e.what());
  }
}

void CrfModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file: " + path);
  out << serialize();
  if (!out) throw IoError("failed writing model file: " + path);
}

CrfModel CrfModel::load(const std::string& path, const std::string& expected_featurizer_version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str(), expected_featurizer_version);
}

// ---------------------------------------------------------------------------
// Inference

double sequence_score(const CrfModel& model, const CompiledSequence& seq,
                      std::span<const std::size_t> labels) {
  if (labels.size() != seq.items.size()) throw LengthMismatchError("label count differs from token count");
  const auto params = model.parameters();
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (const auto& [f, v] : seq.items[i].attributes) s += v * params[model.emission_offset(f, labels[i])];
    s += i == 0 ? params[model.start_offset(labels[0])]
                : params[model.transition_offset(labels[i - 1], labels[i])];
  }
  return s;
}

double log_partition(const CrfModel& model, const CompiledSequence& seq) {
  if (seq.items.empty()) return 0.0;
  Lattice lat;
  compute_emissions(model, seq, lat);
  forward_backward(model, lat);
  return lat.log_z;
}

LabeledSequence decode(const CrfModel& model, const CompiledSequence& seq) {
  if (model.empty()) throw ModelNotLoadedError("CRF model has no labels");
  LabeledSequence out;
  const std::size_t n = seq.items.size();
  if (n == 0) {
    out.confidence = 1.0;
    return out;
  }
  const std::size_t L = model.num_labels();
  const auto params = model.parameters();
  Lattice lat;
  compute_emissions(model, seq, lat);

  std::vector<double> delta(n * L, kNegInf);
  std::vector<std::size_t> back(n * L, 0);
  for (std::size_t y = 0; y < L; ++y) delta[y] = params[model.start_offset(y)] + lat.e(0, y);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t y = 0; y < L; ++y) {
      double best = kNegInf;
      std::size_t arg = 0;
      for (std::size_t p = 0; p < L; ++p) {
        const double s = delta[(i - 1) * L + p] + params[model.transition_offset(p, y)];
        if (s > best) {  // strict: lowest label index wins ties
          best = s;
          arg = p;
        }
      }
      delta[i * L + y] = best + lat.e(i, y);
      back[i * L + y] = arg;
    }
  }
  std::size_t last = 0;
  for (std::size_t y = 1; y < L; ++y) {
    if (delta[(n - 1) * L + y] > delta[(n - 1) * L + last]) last = y;
  }
  const double best_score = delta[(n - 1) * L + last];
  std::vector<std::size_t> path(n);
  path[n - 1] = last;
  for (std::size_t i = n - 1; i > 0; --i) path[i - 1] = back[i * L + path[i]];

  forward_backward(model, lat);
  out.confidence = std::exp(best_score - lat.log_z);
  out.labels.reserve(n);
  for (auto y : path) out.labels.push_back(model.labels()[y]);
  return out;
}

LabeledSequence decode(const CrfModel& model, const std::vector<FeatureVector>& items) {
  return decode(model, model.compile(items));
}

double sequence_probability(const CrfModel& model, const std::vector<FeatureVector>& items,
                            const std::vector<std::string>& labels) {
  if (labels.size() != items.size()) throw LengthMismatchError("label count differs from token count");
  const auto ids = resolve_labels(model, labels);
  if (items.empty()) return 1.0;
  const auto seq = model.compile(items);
  return std::exp(sequence_score(model, seq, ids) - log_partition(model, seq));
}

std::vector<std::vector<double>> label_marginals(const CrfModel& model, const CompiledSequence& seq) {
  std::vector<std::vector<double>> out;
  if (seq.items.empty()) return out;
  Lattice lat;
  compute_emissions(model, seq, lat);
  forward_backward(model, lat);
  out.assign(lat.n, std::vector<double>(lat.labels));
  for (std::size_t i = 0; i < lat.n; ++i) {
    for (std::size_t y = 0; y < lat.labels; ++y) out[i][y] = std::exp(lat.a(i, y) + lat.b(i, y) - lat.log_z);
  }
  return out;
}

LikelihoodGradient log_likelihood_gradient(const CrfModel& model, const CompiledSequence& seq,
                                           std::span<const std::size_t> labels) {
  if (labels.size() != seq.items.size()) throw LengthMismatchError("label count differs from token count");
  LikelihoodGradient out;
  out.gradient.assign(model.num_parameters(), 0.0);
  if (labels.empty()) return out;
  Lattice lat;
  compute_emissions(model, seq, lat);
  forward_backward(model, lat);
  out.log_likelihood = sequence_score(model, seq, labels) - lat.log_z;
  accumulate_gradient(model, seq, labels, lat, 1.0, out.gradient);
  return out;
}

double regularized_objective(const CrfModel& model, const std::vector<CrfTrainingSequence>& corpus, double l2) {
  double nll = 0.0;
  for (const auto& s : corpus) {
    const auto seq = model.compile(s.items);
    const auto ids = resolve_labels(model, s.labels);
    nll -= sequence_score(model, seq, ids) - log_partition(model, seq);
  }
  double norm = 0.0;
  for (double w : model.parameters()) norm += w * w;
  return nll + 0.5 * l2 * norm;
}

// ---------------------------------------------------------------------------
// Training

CrfModel train_crf(const std::vector<CrfTrainingSequence>& corpus, std::vector<std::string> labels,
                   std::string featurizer_version, const CrfHyperParams& hyper) {
  if (corpus.empty()) throw EmptyCorpusError("CRF training corpus is empty");
  CrfModel model(std::move(labels), std::move(featurizer_version));

  std::vector<CompiledSequence> compiled;
  std::vector<std::vector<std::size_t>> gold;
  compiled.reserve(corpus.size());
  for (const auto& s : corpus) {
    if (s.items.empty()) throw EmptyInputError("training sequence has no tokens");
    if (s.items.size() != s.labels.size()) throw LengthMismatchError("training sequence label count mismatch");
    gold.push_back(resolve_labels(model, s.labels));
    for (const auto& item : s.items) {
      for (const auto& f : item.features) model.intern_feature(f.name);
    }
  }
  for (const auto& s : corpus) compiled.push_back(model.compile(s.items));

  auto objective = [&] {
    double nll = 0.0;
    for (std::size_t k = 0; k < compiled.size(); ++k) {
      nll -= sequence_score(model, compiled[k], gold[k]) - log_partition(model, compiled[k]);
    }
    double norm = 0.0;
    for (double w : model.params_) norm += w * w;
    return nll + 0.5 * hyper.l2 * norm;
  };

  model.l2_ = hyper.l2;
  model.meta_.epochs = hyper.epochs;
  model.meta_.seed = hyper.seed;
  model.meta_.learning_rate = hyper.learning_rate;

  std::mt19937_64 rng(hyper.seed);
  std::vector<std::size_t> order(compiled.size());
  std::iota(order.begin(), order.end(), 0);
  const double n = static_cast<double>(compiled.size());
  double base_rate = hyper.learning_rate;
  double prev = objective();
  std::vector<double> saved;
  Lattice lat;

  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[bounded(rng, i)]);
    const double rate = base_rate / std::sqrt(static_cast<double>(epoch));
    const double decay = 1.0 - rate * hyper.l2 / n;
    saved = model.params_;
    for (std::size_t k : order) {
      compute_emissions(model, compiled[k], lat);
      forward_backward(model, lat);
      // w <- decay * w + rate * g, with g taken at the pre-update weights.
      accumulate_gradient(model, compiled[k], gold[k], lat, rate / decay, model.params_);
      if (decay != 1.0) {
        for (double& w : model.params_) w *= decay;
      }
    }
    const double obj = objective();
    if (obj > prev) {
      model.params_ = saved;
      base_rate *= 0.5;
      ++model.meta_.rejected_epochs;
      continue;
    }
    prev = obj;
    model.meta_.objective.push_back(obj);
  }
  return model;
}

}  // namespace tcar
