// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <iostream>

#include "support.hpp"
#include "tcar/error.hpp"

using namespace tcar;
using namespace tcar::testing;

namespace {

// Tolerances and limits.
constexpr double kGradientRelTol = 1e-4;
constexpr double kNormalizationTol = 1e-9;
constexpr double kCrfSeconds = 30.0;
constexpr double kQualityF1 = 0.85;
constexpr double kQualitySeconds = 300.0;
constexpr double kTcarRate = 0.85;
constexpr double kPlannerSeconds = 60.0;
constexpr std::uint64_t kEvalSeed = 8;

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

void crf_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240601);
  double worst_grad = 0.0;
  for (int i = 0; i < 50; ++i) {
    SmallCrf c = random_crf(rng, 5, 3);
    const auto seq = c.model.compile(c.items);
    const auto analytic = log_likelihood_gradient(c.model, seq, c.gold).gradient;
    worst_grad = std::max(worst_grad, relative_error(analytic, numeric_gradient(c.model, c.items, c.gold)));
  }
  int viterbi_mismatch = 0;
  double worst_norm = 0.0;
  for (int i = 0; i < 100; ++i) {
    SmallCrf c = random_crf(rng, 6, 4);
    const auto decoded = decode(c.model, c.items);
    std::vector<std::size_t> ids;
    for (const auto& l : decoded.labels) ids.push_back(*c.model.label_index(l));
    if (ids != naive_argmax(c.model, c.items)) ++viterbi_mismatch;
    const auto seq = c.model.compile(c.items);
    const double log_z = log_partition(c.model, seq);
    double total = 0.0;
    for_each_labeling(c.items.size(), c.model.num_labels(),
                      [&](const auto& y) { total += std::exp(naive_score(c.model, c.items, y) - log_z); });
    worst_norm = std::max(worst_norm, std::abs(total - 1.0));
  }
  const double secs = seconds_since(t0);
  report(worst_grad <= kGradientRelTol && viterbi_mismatch == 0 && worst_norm <= kNormalizationTol &&
             secs < kCrfSeconds,
         "crf-correctness",
         fmt("max gradient rel err %.2e, viterbi mismatches %.0f/100, max |sum P - 1| %.2e, %.1fs", worst_grad,
             viterbi_mismatch, worst_norm, secs));
}

void model_quality() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& models = reference_models();
  const TaskInterpreter interp(resources().analyzer.get(), resources().featurizer, models.interpreter);
  const auto m = evaluate_interpreter(interp, reference_corpus().test);
  const double secs = seconds_since(t0);
  report(m.task.f1 >= kQualityF1 && m.argument.f1 >= kQualityF1 && m.argument_free.f1 < m.argument.f1 &&
             secs < kQualitySeconds,
         "model-quality",
         fmt("task F1 %.4f, argument F1 %.4f, argument-only F1 %.4f, %.1fs", m.task.f1, m.argument.f1,
             m.argument_free.f1, secs));
}

void plan_generation() {
  const WorldModel world = home_world();
  const auto corpus = generate_corpus(world, kCorpusSize, kEvalSeed);
  std::map<EvalMode, EvalRow> rows;
  for (EvalMode mode : {EvalMode::ND, EvalMode::AD, EvalMode::TCAR}) {
    DialogueConfig cfg;
    cfg.policy = policy_for(mode);
    const Agent agent(resources(), reference_models(), nullptr, cfg);
    rows[mode] = run_eval(agent.engine(), std::string(to_string(mode)), corpus, world, 4);
  }
  auto rate = [&](EvalMode m) { return rows[m].percentage() / 100.0; };
  const auto pron = rows[EvalMode::ND].by_category[kCategoryPronoun];
  report(rate(EvalMode::TCAR) > rate(EvalMode::AD) && rate(EvalMode::AD) > rate(EvalMode::ND) &&
             rate(EvalMode::TCAR) >= kTcarRate && pron.second > 0 && pron.first == 0,
         "plan-generation-ordering",
         fmt("TCAR %.3f > AD %.3f > ND %.3f; ND pronoun cases succeeded %.0f", rate(EvalMode::TCAR),
             rate(EvalMode::AD), rate(EvalMode::ND), pron.first) +
             " of " + std::to_string(pron.second));
}

void disambiguation() {
  const auto& models = scenario_models();
  DialogueSession s;
  const std::string accepted = run_script(models, {"Put on the display", "no"}, {}, nullptr, &s);
  const auto& t = s.transcript;
  const bool s4 = t.size() >= 3 && t[2].second == "Do you want me to turn on the display?";
  const bool placing = t.size() >= 5 && t[4].second.find("put the display in somewhere") != std::string::npos;

  const std::vector<std::string> no(8, "no");
  std::vector<std::string> turns = {"Put on the display"};
  turns.insert(turns.end(), no.begin(), no.end());
  DialogueSession r;
  const std::string rejected = run_script(models, turns, {}, nullptr, &r);
  const std::size_t expected = kTaskTypes.size() - 1;
  const bool incapable = r.termination == Termination::Incapable && r.alternative_questions == expected;
  const bool golden =
      matches_golden("disambiguation-no.txt", accepted) && matches_golden("disambiguation-all-no.txt", rejected);
  report(s4 && placing && incapable && golden, "disambiguation",
         std::string("S4 text ") + (s4 ? "ok" : "wrong") + ", Placing question " + (placing ? "ok" : "wrong") +
             ", " + std::to_string(r.alternative_questions) + " alternatives then " +
             std::string(to_string(r.termination)) + ", golden " + (golden ? "match" : "differ"));
}

void continuation() {
  DialogueSession a, b;
  const std::string display = run_script(scenario_models(), {"Put on the display", "Turn it on"}, {}, nullptr, &a);
  const std::string pen = run_script(reference_models(), {"take the pen", "take it from table"}, {}, nullptr, &b);
  auto entity = [](const DialogueSession& s, const std::string& type) -> std::string {
    if (s.completed.empty()) return "";
    const auto it = s.completed.back().entities.find(type);
    return it == s.completed.back().entities.end() ? "" : it->second;
  };
  const bool ok_a = a.termination == Termination::TaskExecuted && entity(a, "device") == "display";
  const bool ok_b = b.termination == Termination::TaskExecuted && entity(b, "source-location") == "table" &&
                    entity(b, "object") == "red-pen";
  const bool golden = matches_golden("continuation-display.txt", display) && matches_golden("continuation-take.txt", pen);
  report(ok_a && ok_b && golden, "session-continuation",
         "turn-it-on device=" + entity(a, "device") + ", take-it-from-table object=" + entity(b, "object") +
             " source=" + entity(b, "source-location") + ", golden " + (golden ? "match" : "differ"));
}

void planner_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t n = 0, optimal = 0, valid = 0, round_trip = 0, empty_ok = 0, satisfied = 0;
  const Domain domain = load_bundled(bundled_problems().front()).domain;
  const bool domain_rt = parse_domain(emit_domain(domain)) == domain;
  for (const auto& p : bundled_problems()) {
    const PlanningProblem pp = load_bundled(p);
    ++n;
    // default options: these sizes fall under the exhaustive strategy
    const auto res = solve(pp);
    const auto best = bfs_optimum(pp);
    if (res.solved() && validate(res.plan, pp).ok) ++valid;
    if (res.solved() && best && res.plan.cost() == *best) ++optimal;
    if (parse_problem(emit_problem(pp.problem)) == pp.problem) ++round_trip;
    if (best && *best == 0) {
      ++satisfied;
      if (res.solved() && res.plan.steps.empty()) ++empty_ok;
    }
  }
  const double secs = seconds_since(t0);
  report(n > 0 && valid == n && optimal == n && round_trip == n && domain_rt && satisfied > 0 && empty_ok == satisfied &&
             secs < kPlannerSeconds,
         "planner-suite",
         std::to_string(n) + " problems: " + std::to_string(valid) + " valid, " + std::to_string(optimal) +
             " optimal, " + std::to_string(round_trip) + " round-trip, " + std::to_string(empty_ok) + "/" +
             std::to_string(satisfied) + " satisfied-goal empty, domain round-trip " + (domain_rt ? "ok" : "broken") +
             fmt(", %.1fs", secs));
}

void history_learning() {
  // "stash" never occurs in the generated corpus.
  const std::string utterance = "stash the keys in the office";
  const std::string learned = "Placing";
  auto position = [&](const std::vector<RankedTask>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (r[i].task_type == learned) return std::make_pair(i, r[i]);
    }
    return std::make_pair(r.size(), RankedTask{});
  };
  std::map<double, double> delta;
  bool improved = true;
  std::size_t before_pos = 0, after_pos = 0;
  for (double w : {1.0, 2.0}) {
    DialogueConfig cfg;
    cfg.history_weight = w;
    InteractionHistory history;
    const Agent agent(resources(), reference_models(), &history, cfg);
    const auto tokens = agent.interpreter().analyze(utterance);
    const auto before = position(agent.engine().rank_alternatives(tokens, {}));
    TaskFrame f = agent.interpreter().frame_for_hypothesis(
        tokens, agent.interpreter().predict_task_types(tokens).labels, learned, 1.0);
    agent.engine().record_success({f}, utterance, tokens);
    const auto after = position(agent.engine().rank_alternatives(tokens, {}));
    delta[w] = after.second.count - before.second.count;
    if (w == 2.0) {
      before_pos = before.first;
      after_pos = after.first;
      improved = after.first < before.first || after.first == 0;
      improved = improved && after.second.probability > before.second.probability;
    }
  }
  const bool doubled = std::abs(delta[2.0] - 2.0 * delta[1.0]) < 1e-12 && delta[1.0] > 0;
  report(improved && doubled, "history-learning",
         "rank " + std::to_string(before_pos) + " -> " + std::to_string(after_pos) +
             fmt(", count delta w=1 %.1f, w=2 %.1f", delta[1.0], delta[2.0]));
}

void determinism() {
  const fs::path root = scratch_dir("determinism");
  const std::string cli = TCAR_CLI_PATH;
  auto run = [&](const std::string& args) {
    return std::system((cli + " " + args + " > /dev/null 2>&1").c_str());
  };
  bool ok = run("gen-corpus --n 500 --seed 7 --out " + (root / "corpus.jsonl").string()) == 0;
  for (const char* tag : {"a", "b"}) {
    const fs::path d = root / tag;
    ok = ok && run("train --corpus " + (root / "corpus.jsonl").string() + " --seed 7 --out " + (d / "models").string()) == 0;
    ok = ok && run("eval --corpus " + (root / "corpus.jsonl").string() + " --models " + (d / "models").string() +
                   " --mode all --threads 4 --report " + (d / "report.json").string()) == 0;
  }
  std::size_t compared = 0, differ = 0;
  for (const char* f : {"models/task.crf", "models/argument.crf", "models/argument-free.crf", "models/intent.model",
                        "models/evidence.jsonl", "report.json"}) {
    ++compared;
    const std::string a = read_text((root / "a" / f).string()), b = read_text((root / "b" / f).string());
    if (a.empty() || a != b) ++differ;
  }
  fs::remove_all(root);
  report(ok && differ == 0, "end-to-end-determinism",
         std::to_string(compared - differ) + "/" + std::to_string(compared) + " files byte-identical" +
             (ok ? "" : " (a command failed)"));
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, void (*)()>> checks = {
      {"crf-correctness", crf_suite},
      {"model-quality", model_quality},
      {"plan-generation-ordering", plan_generation},
      {"disambiguation", disambiguation},
      {"session-continuation", continuation},
      {"planner-suite", planner_suite},
      {"history-learning", history_learning},
      {"end-to-end-determinism", determinism},
  };
  for (const auto& [name, fn] : checks) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(false, name, std::string("exception: ") + e.what());
    }
  }
  return failures == 0 ? 0 : 1;
}
