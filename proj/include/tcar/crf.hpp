#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tcar/text_features.hpp"

namespace tcar {

struct CrfHyperParams {
  int epochs = 50;
  double learning_rate = 0.1;  // decays as 1/sqrt(epoch)
  double l2 = 1e-4;
  std::uint64_t seed = 1;
};

struct CrfTrainingMeta {
  int epochs = 0;
  std::uint64_t seed = 0;
  double learning_rate = 0.0;
  // Regularized negative log-likelihood after each accepted epoch.
  std::vector<double> objective;
  // Epochs whose update raised the objective; they were rolled back and the
  // step size halved.
  int rejected_epochs = 0;
};

struct CrfTrainingSequence {
  std::vector<FeatureVector> items;
  std::vector<std::string> labels;
};

struct LabeledSequence {
  std::vector<std::string> labels;
  double confidence = 0.0;  // exact probability of `labels`
};

// Feature ids resolved against a model alphabet; unseen names are dropped.
struct CompiledSequence {
  struct Item {
    std::vector<std::pair<std::size_t, double>> attributes;
  };
  std::vector<Item> items;
};

// Linear-chain CRF: emission weights over (feature, label), label-bigram
// transitions, and a start transition per label. All parameters live in one
// flat vector: emissions [feature * L + label], then start [L], then
// transitions [prev * L + label].
class CrfModel {
 public:
  CrfModel() = default;
  CrfModel(std::vector<std::string> labels, std::string featurizer_version);

  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t num_labels() const { return labels_.size(); }
  std::optional<std::size_t> label_index(std::string_view label) const;
  std::size_t require_label(std::string_view label) const;

  const std::vector<std::string>& feature_names() const { return features_; }
  std::size_t num_features() const { return features_.size(); }
  std::optional<std::size_t> feature_index(std::string_view name) const;
  std::size_t intern_feature(const std::string& name);

  const std::string& featurizer_version() const { return featurizer_version_; }
  double l2() const { return l2_; }
  const CrfTrainingMeta& training_meta() const { return meta_; }
  bool empty() const { return labels_.empty(); }

  std::size_t num_parameters() const { return params_.size(); }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  std::size_t emission_offset(std::size_t feature, std::size_t label) const {
    return feature * labels_.size() + label;
  }
  std::size_t start_offset(std::size_t label) const {
    return features_.size() * labels_.size() + label;
  }
  std::size_t transition_offset(std::size_t prev, std::size_t label) const {
    return features_.size() * labels_.size() + labels_.size() + prev * labels_.size() + label;
  }

  double emission_weight(std::string_view feature, std::string_view label) const;
  double start_weight(std::string_view label) const;
  double transition_weight(std::string_view prev, std::string_view label) const;

  CompiledSequence compile(const std::vector<FeatureVector>& items) const;

  std::string serialize() const;
  // Throws ModelFormatError on malformed input or when the stored featurizer
  // version differs from `expected_featurizer_version` (empty = accept any).
  static CrfModel deserialize(const std::string& text, const std::string& expected_featurizer_version = {});
  void save(const std::string& path) const;
  static CrfModel load(const std::string& path, const std::string& expected_featurizer_version = {});

 private:
  friend CrfModel train_crf(const std::vector<CrfTrainingSequence>&, std::vector<std::string>,
                            std::string, const CrfHyperParams&);

  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::size_t> label_index_;
  std::vector<std::string> features_;
  std::unordered_map<std::string, std::size_t> feature_index_;
  std::vector<double> params_;
  std::string featurizer_version_;
  double l2_ = 0.0;
  CrfTrainingMeta meta_;
};

// SGD on the L2-regularized conditional log-likelihood. The label alphabet is
// declared up front; gold labels outside it raise UnknownLabelError.
CrfModel train_crf(const std::vector<CrfTrainingSequence>& corpus, std::vector<std::string> labels,
                   std::string featurizer_version, const CrfHyperParams& hyper = {});

// Viterbi labeling plus the exact probability of the returned sequence.
LabeledSequence decode(const CrfModel& model, const std::vector<FeatureVector>& items);
LabeledSequence decode(const CrfModel& model, const CompiledSequence& seq);

double sequence_score(const CrfModel& model, const CompiledSequence& seq,
                      std::span<const std::size_t> labels);
double log_partition(const CrfModel& model, const CompiledSequence& seq);

// P(labels | items); throws UnknownLabelError / LengthMismatchError.
double sequence_probability(const CrfModel& model, const std::vector<FeatureVector>& items,
                            const std::vector<std::string>& labels);

struct LikelihoodGradient {
  double log_likelihood = 0.0;
  std::vector<double> gradient;  // d log P(labels|items) / d parameters
};

LikelihoodGradient log_likelihood_gradient(const CrfModel& model, const CompiledSequence& seq,
                                           std::span<const std::size_t> labels);

// Per-position label marginals, rows indexed by token.
std::vector<std::vector<double>> label_marginals(const CrfModel& model, const CompiledSequence& seq);

// Sum of negative log-likelihoods plus (l2 / 2) * ||w||^2.
double regularized_objective(const CrfModel& model, const std::vector<CrfTrainingSequence>& corpus,
                             double l2);

}  // namespace tcar
