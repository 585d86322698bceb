#pragma once

// Shared fixtures and reference implementations for the unit tests and the
// acceptance runner. Everything here is deliberately naive.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tcar/app.hpp"
#include "tcar/crf.hpp"
#include "tcar/planner.hpp"
#include "tcar/sim.hpp"

namespace tcar::testing {

namespace fs = std::filesystem;

inline std::string test_data(const std::string& name) { return (fs::path(TCAR_TEST_DATA_DIR) / name).string(); }
inline std::string golden_path(const std::string& name) {
  return (fs::path(TCAR_TEST_DATA_DIR) / "golden" / name).string();
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Fresh scratch directory under the system temp dir.
inline fs::path scratch_dir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  fs::path p = fs::temp_directory_path() / ("tcar-" + tag + "-" + std::to_string(rng() % 1000000000ULL));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

inline const Resources& resources() {
  static const Resources r = Resources::load(default_data_dir());
  return r;
}

inline WorldModel home_world() { return load_world(default_data_dir() + "/worlds/home.world"); }

inline const std::vector<IntentExample>& intent_examples() {
  static const auto v = load_intent_corpus(default_data_dir() + "/intents.tsv");
  return v;
}

// The reference setup: 500 generated instructions, seed 7, 75/25 split.
inline constexpr std::uint64_t kSeed = 7;
inline constexpr std::size_t kCorpusSize = 500;
inline constexpr double kTrainFraction = 0.75;

struct SplitCorpus {
  std::vector<AnnotatedInstruction> all, train, test;
};

inline const SplitCorpus& reference_corpus() {
  static const SplitCorpus c = [] {
    SplitCorpus s;
    s.all = generate_corpus(home_world(), kCorpusSize, kSeed);
    split_corpus(s.all, kTrainFraction, kSeed, s.train, s.test);
    return s;
  }();
  return c;
}

inline TrainOptions reference_options() {
  TrainOptions o;
  o.crf.seed = kSeed;
  o.intent.seed = kSeed;
  return o;
}

inline const ModelBundle& reference_models() {
  static const ModelBundle m =
      train_models(reference_corpus().train, intent_examples(), resources(), reference_options());
  return m;
}

// Small hand-labelled corpus for the "put on the display" scenario.
inline const ModelBundle& scenario_models() {
  static const ModelBundle m =
      train_models(load_corpus(test_data("disambiguation.jsonl")), intent_examples(), resources(), reference_options());
  return m;
}

// Runs scripted user turns through one session and renders the exchange the
// way the chat command does. Stops early when the session ends.
inline std::string run_script(const ModelBundle& models, const std::vector<std::string>& turns,
                              DialogueConfig config = {}, InteractionHistory* history = nullptr,
                              DialogueSession* out = nullptr) {
  const Agent agent(resources(), models, history, config);
  WorldModel world = home_world();
  std::string greeting;
  DialogueSession s = agent.engine().start_session(&greeting);
  std::ostringstream o;
  o << "agent: " << greeting << "\n";
  std::uint64_t seq = 1;
  for (const auto& t : turns) {
    if (s.terminal()) break;
    o << "user: " << t << "\n";
    const StepResult r = agent.engine().step(s, t, world);
    o << "agent: " << r.response << "\n";
    if (!r.execution) continue;
    for (std::size_t i = 0; i < r.execution->plans.size(); ++i) {
      o << "  plan " << r.execution->frames[i].task_type << ":";
      for (const auto& [type, v] : r.execution->frames[i].entities) o << " " << type << "=" << v;
      o << "\n";
      const Execution run = execute(r.execution->plans[i].steps, world, seq);
      for (const auto& e : run.events) {
        o << "    [" << e.seq << "] " << to_string(e.kind);
        for (const auto& a : e.args) o << " " << a;
        o << "\n";
      }
      seq = run.events.back().seq + 1;
      world = run.world;
    }
  }
  o << "end: " << to_string(s.termination) << "\n";
  if (out) *out = s;
  return o.str();
}

// Compares against tests/data/golden/<name>; TCAR_UPDATE_GOLDEN=1 rewrites.
inline bool matches_golden(const std::string& name, const std::string& actual) {
  const std::string path = golden_path(name);
  if (const char* u = std::getenv("TCAR_UPDATE_GOLDEN"); u && std::string(u) == "1") {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream(path, std::ios::binary) << actual;
    return true;
  }
  return fs::exists(path) && read_text(path) == actual;
}

// ---------------------------------------------------------------------------
// CRF by enumeration

struct SmallCrf {
  CrfModel model;
  std::vector<FeatureVector> items;
  std::vector<std::size_t> gold;
};

inline SmallCrf random_crf(std::mt19937_64& rng, std::size_t max_tokens, std::size_t max_labels) {
  std::uniform_int_distribution<std::size_t> n_tok(1, max_tokens), n_lab(2, max_labels), n_feat(2, 6);
  std::normal_distribution<double> w(0.0, 1.0);
  std::uniform_real_distribution<double> val(0.25, 1.5);
  const std::size_t T = n_tok(rng), L = n_lab(rng), F = n_feat(rng);
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < L; ++i) labels.push_back("y" + std::to_string(i));
  SmallCrf c{CrfModel(labels, "test"), {}, {}};
  for (std::size_t f = 0; f < F; ++f) c.model.intern_feature("f" + std::to_string(f));
  for (double& p : c.model.parameters()) p = w(rng);
  std::bernoulli_distribution on(0.5);
  for (std::size_t t = 0; t < T; ++t) {
    FeatureVector fv;
    for (std::size_t f = 0; f < F; ++f) {
      if (on(rng)) fv.features.push_back({"f" + std::to_string(f), val(rng)});
    }
    c.items.push_back(std::move(fv));
    c.gold.push_back(std::uniform_int_distribution<std::size_t>(0, L - 1)(rng));
  }
  return c;
}

// Score straight from the parameter layout, without the library's scorer.
inline double naive_score(const CrfModel& m, const std::vector<FeatureVector>& items,
                          const std::vector<std::size_t>& y) {
  const auto p = m.parameters();
  double s = p[m.start_offset(y[0])];
  for (std::size_t t = 0; t < items.size(); ++t) {
    for (const auto& f : items[t].features) {
      if (auto k = m.feature_index(f.name)) s += f.value * p[m.emission_offset(*k, y[t])];
    }
    if (t > 0) s += p[m.transition_offset(y[t - 1], y[t])];
  }
  return s;
}

template <class F>
void for_each_labeling(std::size_t T, std::size_t L, F&& f) {
  std::vector<std::size_t> y(T, 0);
  while (true) {
    f(y);
    std::size_t i = 0;
    while (i < T && ++y[i] == L) y[i++] = 0;
    if (i == T) return;
  }
}

inline double naive_log_z(const CrfModel& m, const std::vector<FeatureVector>& items) {
  std::vector<double> scores;
  for_each_labeling(items.size(), m.num_labels(), [&](const auto& y) { scores.push_back(naive_score(m, items, y)); });
  const double mx = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double s : scores) z += std::exp(s - mx);
  return mx + std::log(z);
}

inline std::vector<std::size_t> naive_argmax(const CrfModel& m, const std::vector<FeatureVector>& items) {
  std::vector<std::size_t> best;
  double best_score = -INFINITY;
  for_each_labeling(items.size(), m.num_labels(), [&](const auto& y) {
    const double s = naive_score(m, items, y);
    if (s > best_score) {
      best_score = s;
      best = y;
    }
  });
  return best;
}

inline double naive_log_likelihood(const CrfModel& m, const std::vector<FeatureVector>& items,
                                   const std::vector<std::size_t>& y) {
  return naive_score(m, items, y) - naive_log_z(m, items);
}

// Norm-wise relative error ||a - b|| / max(||a||, ||b||, eps).
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

// Central differences of the enumerated log-likelihood.
inline std::vector<double> numeric_gradient(CrfModel m, const std::vector<FeatureVector>& items,
                                            const std::vector<std::size_t>& y, double h = 1e-5) {
  std::vector<double> g(m.num_parameters());
  auto p = m.parameters();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = naive_log_likelihood(m, items, y);
    p[i] = keep - h;
    const double down = naive_log_likelihood(m, items, y);
    p[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Planning by exhaustive breadth-first search over ground states

inline std::optional<std::size_t> bfs_optimum(const PlanningProblem& pp, std::size_t limit = 2000000) {
  using State = std::set<Atom>;
  std::map<std::string, std::vector<std::string>> by_type;
  for (const auto& o : pp.problem.objects) by_type[o.type].push_back(o.name);

  struct Ground {
    std::vector<Atom> pre, add, del;
  };
  std::vector<Ground> actions;
  for (const auto& a : pp.domain.actions) {
    std::vector<std::string> binding(a.parameters.size());
    std::function<void(std::size_t)> rec = [&](std::size_t i) {
      if (i == a.parameters.size()) {
        auto subst = [&](const std::vector<Atom>& atoms) {
          std::vector<Atom> out;
          for (auto at : atoms) {
            for (auto& arg : at.args) {
              for (std::size_t k = 0; k < a.parameters.size(); ++k) {
                if (arg == a.parameters[k].name) arg = binding[k];
              }
            }
            out.push_back(at);
          }
          return out;
        };
        actions.push_back({subst(a.precondition), subst(a.add_effects), subst(a.del_effects)});
        return;
      }
      for (const auto& o : by_type[a.parameters[i].type]) {
        binding[i] = o;
        rec(i + 1);
      }
    };
    rec(0);
  }

  auto holds = [](const State& s, const std::vector<Atom>& atoms) {
    return std::all_of(atoms.begin(), atoms.end(), [&](const Atom& a) { return s.count(a) > 0; });
  };
  State init(pp.problem.init.begin(), pp.problem.init.end());
  std::set<State> seen{init};
  std::deque<std::pair<State, std::size_t>> q{{init, 0}};
  while (!q.empty()) {
    auto [s, d] = q.front();
    q.pop_front();
    if (holds(s, pp.problem.goal)) return d;
    for (const auto& g : actions) {
      if (!holds(s, g.pre)) continue;
      State n = s;
      for (const auto& x : g.del) n.erase(x);
      for (const auto& x : g.add) n.insert(x);
      if (seen.insert(n).second) {
        if (seen.size() > limit) return std::nullopt;
        q.push_back({std::move(n), d + 1});
      }
    }
  }
  return std::nullopt;
}

inline std::vector<fs::path> bundled_problems() {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(fs::path(default_data_dir()) / "problems")) {
    if (e.path().extension() == ".pddl" && e.path().filename() != "domain.pddl") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline PlanningProblem load_bundled(const fs::path& problem) {
  return {parse_domain(read_text((fs::path(default_data_dir()) / "problems" / "domain.pddl").string())),
          parse_problem(read_text(problem.string()))};
}

}  // namespace tcar::testing
