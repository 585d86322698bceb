#include "tcar/app.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tcar/error.hpp"

namespace tcar {

namespace fs = std::filesystem;

std::string default_data_dir() {
  if (const char* env = std::getenv("TCAR_DATA_DIR"); env && *env) return env;
  return TCAR_DEFAULT_DATA_DIR;
}

Resources Resources::load(const std::string& data_dir) {
  Resources r;
  r.data_dir = data_dir;
  r.analyzer = std::make_unique<Analyzer>(Lexicon::load_dir(data_dir));
  r.tasks = TaskLibrary::load((fs::path(data_dir) / "tasks.txt").string());
  r.templates = Templates::load((fs::path(data_dir) / "templates.txt").string());
  return r;
}

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("cannot write " + p.string());
}

}  // namespace

std::vector<EvidenceRecord> parse_evidence(const std::string& text) {
  std::vector<EvidenceRecord> out;
  std::istringstream in(text);
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      EvidenceRecord r;
      r.task_type = j.at("task").get<std::string>();
      for (const auto& a : j.at("arguments")) r.argument_types.insert(a.get<std::string>());
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ModelFormatError("evidence line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string format_evidence(const std::vector<EvidenceRecord>& evidence) {
  std::string out;
  for (const auto& r : evidence) {
    nlohmann::ordered_json j;
    j["task"] = r.task_type;
    j["arguments"] = r.argument_types;
    out += j.dump() + "\n";
  }
  return out;
}

void ModelBundle::save(const std::string& dir) const {
  fs::create_directories(dir);
  interpreter.task.save((fs::path(dir) / "task.crf").string());
  interpreter.argument.save((fs::path(dir) / "argument.crf").string());
  interpreter.argument_free.save((fs::path(dir) / "argument-free.crf").string());
  intents.save((fs::path(dir) / "intent.model").string());
  write_file(fs::path(dir) / "evidence.jsonl", format_evidence(evidence));
}

ModelBundle ModelBundle::load(const std::string& dir, const Featurizer& featurizer) {
  const fs::path d(dir);
  if (!fs::exists(d / "task.crf")) throw ModelNotLoadedError("no trained models in " + dir);
  ModelBundle b;
  const std::string v = featurizer.version();
  b.interpreter.task = CrfModel::load((d / "task.crf").string(), v);
  b.interpreter.argument = CrfModel::load((d / "argument.crf").string(), v);
  b.interpreter.argument_free = CrfModel::load((d / "argument-free.crf").string(), v);
  b.intents = IntentModel::load((d / "intent.model").string());
  b.evidence = parse_evidence(read_file(d / "evidence.jsonl"));
  return b;
}

ModelBundle train_models(const std::vector<AnnotatedInstruction>& corpus, const std::vector<IntentExample>& intents,
                         const Resources& resources, const TrainOptions& options) {
  if (corpus.empty()) throw EmptyCorpusError("training corpus is empty");
  ModelBundle b;
  b.interpreter = train_interpreter(corpus, *resources.analyzer, resources.featurizer, options.crf);
  std::vector<IntentExample> examples = intents;
  // evenly spaced, so the choice does not depend on corpus order quirks
  const std::size_t k = std::min(options.intent_instruction_examples, corpus.size());
  for (std::size_t i = 0; i < k; ++i) examples.push_back({corpus[i * corpus.size() / k].text, Intent::Instruction});
  b.intents = train_intents(examples, options.intent);
  b.evidence = evidence_from_corpus(corpus);
  return b;
}

Agent::Agent(const Resources& resources, const ModelBundle& models, InteractionHistory* history,
             DialogueConfig config)
    : interpreter_(resources.analyzer.get(), resources.featurizer, models.interpreter),
      engine_(&interpreter_, &models.intents, &resources.tasks, &resources.templates, models.evidence, history,
              config) {}

std::string format_metrics_table(const InterpreterMetrics& m) {
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-24s %9s %7s %7s\n", "Model", "Precision", "Recall", "F1");
  out += buf;
  auto row = [&](const char* name, const LabelScores& s) {
    std::snprintf(buf, sizeof buf, "%-24s %9.4f %7.4f %7.4f\n", name, s.precision, s.recall, s.f1);
    out += buf;
  };
  row("Task type prediction", m.task);
  row("Argument prediction", m.argument);
  row("Argument-only", m.argument_free);
  return out;
}

}  // namespace tcar
