#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tcar/corpus.hpp"
#include "tcar/crf.hpp"
#include "tcar/text_features.hpp"

namespace tcar {

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  bool operator==(const Span&) const = default;
};

struct ArgumentValue {
  std::string surface;  // user's own words, for question templates
  std::string lemma;    // lemmatized, for grounding
  Span span;
  // Set once a pronoun has been replaced by its antecedent.
  std::string resolved_from;

  bool is_pronoun() const;
  bool operator==(const ArgumentValue&) const = default;
};

struct TaskFrame {
  std::string task_type;
  std::map<std::string, ArgumentValue> arguments;
  double confidence = 0.0;
  Span source_span;
  // Grounded world entity per argument type, filled by the dialogue layer.
  std::map<std::string, std::string> entities;

  const ArgumentValue* argument(const std::string& type) const;
  bool operator==(const TaskFrame&) const = default;
};

struct ArgumentEvidence {
  std::set<std::string> types_present;
};

bool is_pronoun_lemma(const std::string& lemma);

// Nearest task label at j > i when token i is not task-labeled; the null
// marker when it is. With no later task label the nearest earlier one is
// used.
std::vector<std::string> task_association(const std::vector<std::string>& task_labels);
inline constexpr const char* kNullAssociation = "<NULL>";

// Featurizer output plus the task-association features.
std::vector<FeatureVector> argument_features(const std::vector<FeatureVector>& base,
                                             const std::vector<std::string>& task_labels,
                                             const TokenSequence& tokens);

// Clause spans, one per task-labeled verb group, in surface order. Each
// token belongs to the nearest preceding verb; leading tokens go to the
// first span.
struct ClauseSpan {
  Span span;
  std::size_t verb = 0;
  std::string task_type;
};
std::vector<ClauseSpan> split_multi_task(const TokenSequence& tokens, const std::vector<std::string>& task_labels);

// Maximal same-label runs inside `span`; the first run of each type wins.
std::map<std::string, ArgumentValue> collect_arguments(const TokenSequence& tokens,
                                                       const std::vector<std::string>& argument_labels, Span span);

// Replaces pronoun values with the most recent compatible antecedent from
// earlier frames, then from `history` (most recent last).
std::vector<TaskFrame> resolve_coreference(std::vector<TaskFrame> frames, const std::vector<TaskFrame>& history);

struct InterpreterModels {
  CrfModel task;
  CrfModel argument;
  CrfModel argument_free;
};

struct Interpretation {
  TokenSequence tokens;
  LabeledSequence task;
  LabeledSequence arguments;
  std::vector<TaskFrame> frames;
};

class TaskInterpreter {
 public:
  TaskInterpreter(const Analyzer* analyzer, Featurizer featurizer, InterpreterModels models);

  TokenSequence analyze(std::string_view utterance) const;

  LabeledSequence predict_task_types(const TokenSequence& tokens) const;
  LabeledSequence extract_arguments(const TokenSequence& tokens, const std::vector<std::string>& task_labels) const;
  ArgumentEvidence predict_arguments_taskfree(const TokenSequence& tokens) const;

  // Task decode, argument decode, clause split. No coreference.
  Interpretation interpret(const TokenSequence& tokens) const;
  Interpretation interpret(std::string_view utterance) const { return interpret(analyze(utterance)); }

  // Single frame over the whole utterance with every task label forced to
  // `task_type`; used for confirmation questions under a hypothesis.
  TaskFrame frame_for_hypothesis(const TokenSequence& tokens, const std::vector<std::string>& task_labels,
                                 const std::string& task_type, double confidence) const;

  const Analyzer& analyzer() const { return *analyzer_; }
  const Featurizer& featurizer() const { return featurizer_; }
  const InterpreterModels& models() const { return models_; }

 private:
  const Analyzer* analyzer_;
  Featurizer featurizer_;
  InterpreterModels models_;
};

TokenSequence analyze_tokens(const Analyzer& analyzer, const std::vector<std::string>& surfaces);

struct InterpreterTrainingSets {
  std::vector<CrfTrainingSequence> task;
  std::vector<CrfTrainingSequence> argument;
  std::vector<CrfTrainingSequence> argument_free;
};

InterpreterTrainingSets build_training_sets(const std::vector<AnnotatedInstruction>& corpus,
                                            const Analyzer& analyzer, const Featurizer& featurizer);

InterpreterModels train_interpreter(const std::vector<AnnotatedInstruction>& corpus, const Analyzer& analyzer,
                                    const Featurizer& featurizer, const CrfHyperParams& hyper);

// (task type, argument-type set) pairs used as disambiguation evidence.
struct EvidenceRecord {
  std::string task_type;
  std::set<std::string> argument_types;
  bool operator==(const EvidenceRecord&) const = default;
};
std::vector<EvidenceRecord> evidence_from_corpus(const std::vector<AnnotatedInstruction>& corpus);

// Token-level precision/recall/F1 over non-outside labels (micro average).
struct LabelScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};
LabelScores score_labels(const std::vector<std::vector<std::string>>& gold,
                         const std::vector<std::vector<std::string>>& predicted);

struct InterpreterMetrics {
  LabelScores task;
  LabelScores argument;
  LabelScores argument_free;
};
// Argument scores condition on gold task labels, as in training.
InterpreterMetrics evaluate_interpreter(const TaskInterpreter& interpreter,
                                        const std::vector<AnnotatedInstruction>& test);

}  // namespace tcar
