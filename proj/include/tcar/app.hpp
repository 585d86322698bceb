#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tcar/corpus.hpp"
#include "tcar/dialogue.hpp"
#include "tcar/intent.hpp"
#include "tcar/interpreter.hpp"
#include "tcar/planner.hpp"
#include "tcar/templates.hpp"
#include "tcar/text_features.hpp"
#include "tcar/world.hpp"

// Wiring shared by the command-line tool, the service and the tests.
namespace tcar {

// TCAR_DATA_DIR when set, else the directory configured at build time.
std::string default_data_dir();

// Lexicon, task library and templates from a data directory.
struct Resources {
  std::string data_dir;
  std::unique_ptr<Analyzer> analyzer;
  Featurizer featurizer;
  TaskLibrary tasks;
  Templates templates;

  static Resources load(const std::string& data_dir);
};

// The four trained models plus the type/argument evidence of their
// training corpus.
struct ModelBundle {
  InterpreterModels interpreter;
  IntentModel intents;
  std::vector<EvidenceRecord> evidence;

  // task.crf argument.crf argument-free.crf intent.model evidence.jsonl
  void save(const std::string& dir) const;
  static ModelBundle load(const std::string& dir, const Featurizer& featurizer);
};

struct TrainOptions {
  CrfHyperParams crf;
  IntentHyperParams intent;
  // Instructions from the task corpus added to the intent examples.
  std::size_t intent_instruction_examples = 150;
};

ModelBundle train_models(const std::vector<AnnotatedInstruction>& corpus, const std::vector<IntentExample>& intents,
                         const Resources& resources, const TrainOptions& options = {});

// Interpreter + engine bound to one bundle. Not copyable; the engine keeps
// pointers into it.
class Agent {
 public:
  Agent(const Resources& resources, const ModelBundle& models, InteractionHistory* history, DialogueConfig config);
  Agent(const Agent&) = delete;
  Agent& operator=(const Agent&) = delete;

  const TaskInterpreter& interpreter() const { return interpreter_; }
  const DialogueEngine& engine() const { return engine_; }

 private:
  TaskInterpreter interpreter_;
  DialogueEngine engine_;
};

std::string format_metrics_table(const InterpreterMetrics& m);

std::vector<EvidenceRecord> parse_evidence(const std::string& text);
std::string format_evidence(const std::vector<EvidenceRecord>& evidence);

}  // namespace tcar
