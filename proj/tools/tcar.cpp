// Command-line entry points: train, gen-corpus, eval, chat, plan, serve, import.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "tcar/app.hpp"
#include "tcar/error.hpp"
#include "tcar/service.hpp"
#include "tcar/sim.hpp"

namespace fs = std::filesystem;
using namespace tcar;

namespace {

enum Exit { kOk = 0, kArgs = 2, kIo = 3, kParse = 4, kGrounding = 5, kUnsolvable = 6 };

struct Common {
  std::string data_dir;
  std::string models;
  std::string world;
  double threshold = 0.6;
};

std::string in_data(const Common& c, const std::string& rel) { return (fs::path(c.data_dir) / rel).string(); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

int cmd_train(const Common& c, const std::string& corpus_path, const std::string& intents_path,
              const std::string& out_dir, std::uint64_t seed, int epochs, double split) {
  const Resources res = Resources::load(c.data_dir);
  const auto corpus = load_corpus(corpus_path);
  if (corpus.empty()) throw EmptyCorpusError(corpus_path + " contains no instructions");
  const auto intents = load_intent_corpus(intents_path.empty() ? in_data(c, "intents.tsv") : intents_path);
  std::vector<AnnotatedInstruction> train, test;
  split_corpus(corpus, split, seed, train, test);
  if (test.empty()) test = train;

  TrainOptions opt;
  opt.crf.seed = seed;
  opt.crf.epochs = epochs;
  opt.intent.seed = seed;
  const ModelBundle models = train_models(train, intents, res, opt);
  models.save(out_dir);

  const TaskInterpreter interp(res.analyzer.get(), res.featurizer, models.interpreter);
  const auto m = evaluate_interpreter(interp, test);
  std::cout << "trained on " << train.size() << " instructions, evaluated on " << test.size() << "\n\n"
            << format_metrics_table(m) << "\nmodels written to " << out_dir << "\n";
  return kOk;
}

int cmd_gen(const Common& c, std::size_t n, std::uint64_t seed, const std::string& out, const GeneratorConfig& g) {
  const WorldModel world = load_world(c.world.empty() ? in_data(c, "worlds/home.world") : c.world);
  const auto corpus = generate_corpus(world, n, seed, g);
  if (out.empty() || out == "-") {
    std::cout << format_corpus(corpus);
  } else {
    save_corpus(corpus, out);
    std::cerr << "wrote " << corpus.size() << " instructions to " << out << "\n";
  }
  return kOk;
}

DialogueConfig config_for(const Common& c, EvalMode mode) {
  DialogueConfig cfg;
  cfg.confidence_threshold = c.threshold;
  cfg.policy = policy_for(mode);
  return cfg;
}

int cmd_eval(const Common& c, const std::string& corpus_path, const std::string& mode, const std::string& report,
             unsigned threads) {
  const Resources res = Resources::load(c.data_dir);
  const ModelBundle models = ModelBundle::load(c.models, res.featurizer);
  const WorldModel world = load_world(c.world.empty() ? in_data(c, "worlds/home.world") : c.world);
  const auto corpus = load_corpus(corpus_path);
  if (corpus.empty()) throw EmptyCorpusError(corpus_path + " contains no instructions");

  std::vector<EvalMode> modes;
  if (mode == "all") {
    modes = {EvalMode::ND, EvalMode::AD, EvalMode::TCAR};
  } else {
    modes = {parse_eval_mode(mode)};
  }
  EvalReport rep;
  for (EvalMode m : modes) {
    const Agent agent(res, models, nullptr, config_for(c, m));
    rep.rows.push_back(run_eval(agent.engine(), std::string(to_string(m)), corpus, world, threads));
  }
  std::cout << rep.to_table();
  if (!report.empty()) write_text(report, rep.to_json());
  return kOk;
}

void print_execution(const ExecutionRequest& ex, const WorldModel& before, WorldModel& after, std::uint64_t& seq) {
  WorldModel w = before;
  for (std::size_t i = 0; i < ex.plans.size(); ++i) {
    std::cout << "  plan " << ex.frames[i].task_type << ": " << ex.plans[i].cost() << " step"
              << (ex.plans[i].cost() == 1 ? "" : "s") << "\n";
    const Execution run = execute(ex.plans[i].steps, w, seq);
    for (const auto& e : run.events) {
      std::cout << "    [" << e.seq << "] " << to_string(e.kind);
      for (const auto& a : e.args) std::cout << " " << a;
      std::cout << "\n";
    }
    seq = run.events.back().seq + 1;
    w = run.world;
  }
  after = w;
}

int cmd_chat(const Common& c, const std::string& history_path) {
  const Resources res = Resources::load(c.data_dir);
  const ModelBundle models = ModelBundle::load(c.models, res.featurizer);
  WorldModel world = load_world(c.world.empty() ? in_data(c, "worlds/home.world") : c.world);
  std::unique_ptr<InteractionHistory> history;
  if (!history_path.empty()) history = std::make_unique<InteractionHistory>(history_path);
  const Agent agent(res, models, history.get(), config_for(c, EvalMode::TCAR));
  const DialogueEngine& engine = agent.engine();

  std::uint64_t salt = 0, seq = 1;
  std::string greeting;
  DialogueSession s = engine.start_session(&greeting, salt++);
  std::cout << "robot: " << greeting << "\n";
  for (std::string line; std::getline(std::cin, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::cout << "you: " << line << "\n";
    const StepResult r = engine.step(s, line, world);
    std::cout << "robot: " << r.response << "\n";
    if (r.execution) print_execution(*r.execution, world, world, seq);
    if (!s.warning.empty()) std::cerr << "warning: " << s.warning << "\n";
    if (s.terminal()) {
      if (s.termination == Termination::Bye) return kOk;
      s = engine.start_session(nullptr, salt++);
    }
  }
  return kOk;
}

int cmd_plan(const Common& c, const std::string& instruction, const std::string& emit_dir) {
  if (instruction.find_first_not_of(" \t") == std::string::npos) {
    std::cerr << "error: the instruction is empty\n";
    return kArgs;
  }
  const Resources res = Resources::load(c.data_dir);
  const ModelBundle models = ModelBundle::load(c.models, res.featurizer);
  const WorldModel world = load_world(c.world.empty() ? in_data(c, "worlds/home.world") : c.world);
  const Agent agent(res, models, nullptr, config_for(c, EvalMode::ND));

  if (agent.interpreter().interpret(instruction).frames.empty()) {
    std::cerr << "parse: no task found in the instruction\n";
    return kParse;
  }
  DialogueSession s = agent.engine().start_session();
  const StepResult r = agent.engine().dispatch(s, Intent::Instruction, false, instruction, world);
  if (!r.execution) {
    const bool planning = s.failure_stage == "planning";
    std::cerr << (planning ? "unsolvable: " : "grounding: ") << (s.failure.empty() ? r.response : s.failure)
              << "\n";
    return planning ? kUnsolvable : kGrounding;
  }
  const ExecutionRequest& ex = *r.execution;
  for (std::size_t i = 0; i < ex.plans.size(); ++i) {
    if (ex.plans.size() > 1) std::cout << "; " << ex.frames[i].task_type << "\n";
    std::cout << format_plan(ex.plans[i]);
  }
  if (!emit_dir.empty()) {
    fs::create_directories(emit_dir);
    write_text((fs::path(emit_dir) / "domain.pddl").string(), emit_domain(ex.problems.front().domain));
    for (std::size_t i = 0; i < ex.problems.size(); ++i) {
      const std::string name = ex.problems.size() == 1 ? "problem.pddl" : "problem-" + std::to_string(i + 1) + ".pddl";
      write_text((fs::path(emit_dir) / name).string(), emit_problem(ex.problems[i].problem));
    }
  }
  return kOk;
}

int cmd_import(const std::string& conll, const std::string& out) {
  const auto corpus = import_conll(conll);
  save_corpus(corpus, out);
  std::cerr << "imported " << corpus.size() << " instructions\n";
  return kOk;
}

int cmd_serve(const Common& c, const std::string& config_path, int port) {
  ServiceConfig cfg = config_path.empty() ? ServiceConfig{} : ServiceConfig::load(config_path);
  if (cfg.data_dir.empty()) cfg.data_dir = c.data_dir;
  if (!c.models.empty()) cfg.models_dir = c.models;
  if (!c.world.empty()) cfg.worlds = {c.world};
  if (port >= 0) cfg.port = port;
  Service service(cfg);
  SocketServer server(service, cfg.port);
  std::cerr << "listening on 127.0.0.1:" << server.port() << "\n";
  server.run();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Task-conversational robot agent"};
  app.require_subcommand(1);
  Common c;
  c.data_dir = default_data_dir();
  app.add_option("--data-dir", c.data_dir, "Resource directory (lexicon, tasks, templates, worlds)");

  auto add_models = [&](CLI::App* sub) { sub->add_option("--models", c.models, "Model directory")->required(); };
  auto add_world = [&](CLI::App* sub) { sub->add_option("--world", c.world, "World file"); };
  auto add_threshold = [&](CLI::App* sub) {
    sub->add_option("--threshold", c.threshold, "Task confidence threshold")->check(CLI::Range(0.0, 1.0));
  };

  std::string corpus, intents, out, mode = "all", report, instruction, emit, history, config, conll;
  std::uint64_t seed = 7;
  int epochs = 50, port = -1;
  double split = 0.75;
  std::size_t n = 500;
  unsigned threads = 1;
  GeneratorConfig gen;

  auto* train = app.add_subcommand("train", "Train the task, argument, argument-only and intent models");
  train->add_option("--corpus", corpus, "Annotated corpus (JSON lines)")->required();
  train->add_option("--intents", intents, "Intent examples (utterance<TAB>intent)");
  train->add_option("--out", out, "Output model directory")->required();
  train->add_option("--seed", seed, "Shuffle and split seed");
  train->add_option("--epochs", epochs, "Training epochs")->check(CLI::PositiveNumber);
  train->add_option("--split", split, "Training fraction")->check(CLI::Range(0.0, 1.0));

  auto* gencmd = app.add_subcommand("gen-corpus", "Generate a synthetic annotated corpus");
  add_world(gencmd);
  gencmd->add_option("--n", n, "Number of instructions")->check(CLI::PositiveNumber);
  gencmd->add_option("--seed", seed, "Generator seed");
  gencmd->add_option("--out", out, "Output file (default stdout)");
  gencmd->add_option("--missing", gen.missing_argument_rate, "Missing-argument share")->check(CLI::Range(0.0, 1.0));
  gencmd->add_option("--pronoun", gen.multi_task_pronoun_rate, "Multi-task pronoun share")->check(CLI::Range(0.0, 1.0));
  gencmd->add_option("--ambiguous", gen.ambiguous_verb_rate, "Ambiguous-verb share")->check(CLI::Range(0.0, 1.0));
  gencmd->add_option("--multi", gen.multi_task_rate, "Multi-task share")->check(CLI::Range(0.0, 1.0));

  auto* eval = app.add_subcommand("eval", "Compare the baselines and the full agent on a corpus");
  eval->add_option("--corpus", corpus, "Evaluation corpus")->required();
  add_models(eval);
  add_world(eval);
  add_threshold(eval);
  eval->add_option("--mode", mode, "nd, ad, tcar or all")->check(CLI::IsMember({"nd", "ad", "tcar", "all"}));
  eval->add_option("--report", report, "Write a JSON report here");
  eval->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  auto* chat = app.add_subcommand("chat", "Talk to the agent on stdin");
  add_models(chat);
  add_world(chat);
  add_threshold(chat);
  chat->add_option("--history", history, "Interaction history file");

  auto* plan = app.add_subcommand("plan", "Plan one instruction without dialogue");
  plan->add_option("instruction", instruction, "Instruction text")->required();
  add_models(plan);
  add_world(plan);
  plan->add_option("--emit-pddl", emit, "Write domain.pddl and problem.pddl here");

  auto* serve = app.add_subcommand("serve", "Run the chat service");
  serve->add_option("--config", config, "Service config file (JSON)");
  serve->add_option("--models", c.models, "Model directory");
  add_world(serve);
  serve->add_option("--port", port, "TCP port (0 picks a free one)");

  auto* imp = app.add_subcommand("import", "Convert a column-format annotated file to JSON lines");
  imp->add_option("--conll", conll, "Input file")->required();
  imp->add_option("--out", out, "Output corpus")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kArgs;
  }

  try {
    if (*train) return cmd_train(c, corpus, intents, out, seed, epochs, split);
    if (*gencmd) return cmd_gen(c, n, seed, out, gen);
    if (*eval) return cmd_eval(c, corpus, mode, report, threads);
    if (*chat) return cmd_chat(c, history);
    if (*plan) return cmd_plan(c, instruction, emit);
    if (*serve) return cmd_serve(c, config, port);
    if (*imp) return cmd_import(conll, out);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const ModelNotLoadedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const EmptyCorpusError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kParse;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kParse;
  }
  return kArgs;
}
