#include "tcar/planner.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "tcar/error.hpp"

namespace tcar {

// ---------------------------------------------------------------------------
// Task templates

std::vector<std::string> TaskSpec::slots() const { return order; }

bool TaskSpec::has_slot(const std::string& slot) const {
  return std::find(order.begin(), order.end(), slot) != order.end() ||
         std::find(optional.begin(), optional.end(), slot) != optional.end();
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

Atom parse_goal_atom(const std::string& text, std::size_t lineno) {
  std::string t = trim(text);
  if (t.size() < 2 || t.front() != '(' || t.back() != ')') {
    throw FormatError("task file line " + std::to_string(lineno) + ": goal must be a parenthesized atom");
  }
  std::istringstream in(t.substr(1, t.size() - 2));
  Atom a;
  in >> a.predicate;
  std::string arg;
  while (in >> arg) a.args.push_back(arg);
  return a;
}

}  // namespace

TaskLibrary TaskLibrary::parse(std::string_view text) {
  TaskLibrary lib;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;
  TaskSpec* cur = nullptr;
  while (std::getline(in, raw)) {
    ++lineno;
    if (auto h = raw.find('#'); h != std::string::npos) raw.erase(h);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw FormatError("task file line " + std::to_string(lineno) + ": bad header");
      lib.tasks_.push_back({});
      cur = &lib.tasks_.back();
      cur->name = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (!cur || eq == std::string::npos) {
      throw FormatError("task file line " + std::to_string(lineno) + ": expected key = value inside a block");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "verb") {
      cur->verb = val;
    } else if (key == "require") {
      cur->required.push_back(val);
      cur->order.push_back(val);
    } else if (key == "infer") {
      cur->inferable.push_back(val);
      cur->order.push_back(val);
    } else if (key == "optional") {
      cur->optional.push_back(val);
    } else if (key == "alias") {
      const auto arrow = val.find("->");
      if (arrow == std::string::npos) throw FormatError("task file line " + std::to_string(lineno) + ": alias needs ->");
      cur->aliases[trim(val.substr(0, arrow))] = trim(val.substr(arrow + 2));
    } else if (key == "goal") {
      cur->goal.push_back(parse_goal_atom(val, lineno));
    } else {
      throw FormatError("task file line " + std::to_string(lineno) + ": unknown key " + key);
    }
  }
  return lib;
}

TaskLibrary TaskLibrary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open task file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const TaskSpec* TaskLibrary::find(std::string_view task_type) const {
  for (const auto& t : tasks_) {
    if (t.name == task_type) return &t;
  }
  return nullptr;
}

const TaskSpec& TaskLibrary::require(std::string_view task_type) const {
  if (const TaskSpec* t = find(task_type)) return *t;
  throw UnknownLabelError("no planning template for task type " + std::string(task_type));
}

std::optional<std::string> slot_entity(const TaskSpec& spec, const TaskFrame& frame, const WorldModel& world,
                                       const std::string& slot) {
  if (auto it = frame.entities.find(slot); it != frame.entities.end()) {
    if (const Person* p = world.find_person(it->second)) return p->location;
    return it->second;
  }
  for (const auto& [from, to] : spec.aliases) {
    if (to != slot) continue;
    auto it = frame.entities.find(from);
    if (it == frame.entities.end()) continue;
    if (const Person* p = world.find_person(it->second)) return p->location;
    return it->second;
  }
  return std::nullopt;
}

PlanningProblem problem_from_world(const WorldModel& world, std::vector<Atom> goal, std::string name) {
  PlanningProblem pp;
  pp.domain = robot_domain();
  Problem& p = pp.problem;
  p.name = std::move(name);
  p.domain = pp.domain.name;

  auto sorted_names = [](auto const& list) {
    std::vector<std::string> names;
    for (const auto& e : list) names.push_back(e.name);
    std::sort(names.begin(), names.end());
    return names;
  };
  for (const auto& n : sorted_names(world.locations)) p.objects.push_back({n, "location"});
  for (const auto& n : sorted_names(world.objects)) p.objects.push_back({n, "item"});
  for (const auto& n : sorted_names(world.devices)) p.objects.push_back({n, "device"});

  p.init.push_back({"robot-at", {world.robot.location}});
  if (world.robot.holding) {
    p.init.push_back({"holding", {*world.robot.holding}});
  } else {
    p.init.push_back({"hand-empty", {}});
  }
  for (const auto& [a, b] : world.adjacency) {
    p.init.push_back({"adjacent", {a, b}});
    p.init.push_back({"adjacent", {b, a}});
  }
  for (const auto& o : world.objects) {
    if (!o.location.empty()) p.init.push_back({"at", {o.name, o.location}});
    if (o.holdable) p.init.push_back({"holdable", {o.name}});
  }
  for (const auto& d : world.devices) {
    p.init.push_back({"device-at", {d.name, d.location}});
    p.init.push_back({d.on ? "is-on" : "is-off", {d.name}});
  }
  p.goal = std::move(goal);
  return pp;
}

PlanningProblem generate_problem(const TaskFrame& frame, const WorldModel& world, const TaskLibrary& library) {
  const TaskSpec& spec = library.require(frame.task_type);
  std::set<std::string> constants;
  for (const auto& l : world.locations) constants.insert(l.name);
  for (const auto& o : world.objects) constants.insert(o.name);
  for (const auto& d : world.devices) constants.insert(d.name);

  auto value_of = [&](const std::string& slot) {
    auto v = slot_entity(spec, frame, world, slot);
    if (!v) throw MissingSlotError("task " + spec.name + " has no grounded " + slot);
    return *v;
  };
  auto substitute = [&](const std::string& tmpl, bool constant) {
    std::string out;
    for (std::size_t i = 0; i < tmpl.size();) {
      if (tmpl[i] != '$') {
        out.push_back(tmpl[i++]);
        continue;
      }
      std::size_t j = i + 1;
      while (j < tmpl.size() && (std::isalnum(static_cast<unsigned char>(tmpl[j])) || tmpl[j] == '-')) ++j;
      out += value_of(tmpl.substr(i + 1, j - i - 1));
      i = j;
    }
    if (constant && !constants.count(out)) throw UnknownConstantError("unknown world entity '" + out + "'");
    return out;
  };

  std::vector<Atom> goal;
  for (const auto& g : spec.goal) {
    Atom a;
    a.predicate = substitute(g.predicate, false);
    for (const auto& arg : g.args) a.args.push_back(substitute(arg, true));
    goal.push_back(std::move(a));
  }
  for (const auto& a : goal) {
    const bool known = std::any_of(robot_domain().predicates.begin(), robot_domain().predicates.end(),
                                   [&](const PredicateDecl& p) { return p.name == a.predicate; });
    if (!known) throw UnknownConstantError("goal predicate '" + a.predicate + "' is not in the domain");
  }
  std::string name = spec.name;
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  return problem_from_world(world, std::move(goal), name);
}

// ---------------------------------------------------------------------------
// Grounding to STRIPS

namespace {

struct GroundOp {
  GroundAction action;
  std::vector<std::size_t> pre, add, del;
};

struct Task {
  std::vector<GroundOp> ops;
  std::vector<std::size_t> init;
  std::vector<std::size_t> goal;
  std::size_t num_facts = 0;
  bool goal_unreachable = false;  // some goal fact is never producible
};

class FactTable {
 public:
  std::optional<std::size_t> find(const Atom& a) const {
    auto it = index_.find(a);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t intern(const Atom& a) {
    auto [it, inserted] = index_.emplace(a, index_.size());
    return it->second;
  }
  std::size_t size() const { return index_.size(); }

 private:
  std::map<Atom, std::size_t> index_;
};

Atom bind_atom(const Atom& a, const std::map<std::string, std::string>& sub) {
  Atom out{a.predicate, {}};
  for (const auto& x : a.args) {
    auto it = sub.find(x);
    out.args.push_back(it == sub.end() ? x : it->second);
  }
  return out;
}

bool is_subtype(const Domain& d, std::string t, const std::string& of) {
  for (int guard = 0; guard < 64; ++guard) {
    if (t == of) return true;
    auto it = std::find_if(d.types.begin(), d.types.end(), [&](const TypedName& x) { return x.name == t; });
    if (it == d.types.end() || it->type.empty()) return of == "object";
    t = it->type;
  }
  return false;
}

std::vector<std::string> objects_of_type(const PlanningProblem& pp, const std::string& type) {
  std::vector<std::string> out;
  for (const auto& o : pp.problem.objects) {
    if (type.empty() || is_subtype(pp.domain, o.type, type)) out.push_back(o.name);
  }
  return out;
}

Task ground_task(const PlanningProblem& pp) {
  const Domain& d = pp.domain;
  std::set<std::string> fluent;
  for (const auto& a : d.actions) {
    for (const auto& e : a.add_effects) fluent.insert(e.predicate);
    for (const auto& e : a.del_effects) fluent.insert(e.predicate);
  }
  const std::set<Atom> init_set(pp.problem.init.begin(), pp.problem.init.end());

  FactTable facts;
  Task task;
  for (const auto& a : pp.problem.init) {
    if (fluent.count(a.predicate)) task.init.push_back(facts.intern(a));
  }

  struct Candidate {
    GroundAction action;
    std::vector<Atom> pre, add, del;
  };
  std::vector<Candidate> cands;
  for (const auto& schema : d.actions) {
    std::vector<std::vector<std::string>> domains;
    for (const auto& p : schema.parameters) domains.push_back(objects_of_type(pp, p.type));
    std::vector<std::size_t> idx(domains.size(), 0);
    if (std::any_of(domains.begin(), domains.end(), [](const auto& v) { return v.empty(); })) continue;
    for (bool done = false; !done;) {
      std::map<std::string, std::string> sub;
      GroundAction ga{schema.name, {}};
      for (std::size_t k = 0; k < idx.size(); ++k) {
        sub[schema.parameters[k].name] = domains[k][idx[k]];
        ga.args.push_back(domains[k][idx[k]]);
      }
      bool ok = true;
      Candidate c{ga, {}, {}, {}};
      for (const auto& pre : schema.precondition) {
        Atom b = bind_atom(pre, sub);
        if (!fluent.count(b.predicate)) {
          if (!init_set.count(b)) {
            ok = false;
            break;
          }
          continue;
        }
        c.pre.push_back(std::move(b));
      }
      if (ok) {
        for (const auto& e : schema.add_effects) c.add.push_back(bind_atom(e, sub));
        for (const auto& e : schema.del_effects) c.del.push_back(bind_atom(e, sub));
        cands.push_back(std::move(c));
      }
      // odometer increment
      done = true;
      for (std::size_t k = idx.size(); k-- > 0;) {
        if (++idx[k] < domains[k].size()) {
          done = false;
          break;
        }
        idx[k] = 0;
      }
      if (idx.empty()) done = true;
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.action.name, a.action.args) < std::tie(b.action.name, b.action.args);
  });
  for (auto& c : cands) {
    GroundOp op;
    op.action = std::move(c.action);
    for (const auto& a : c.pre) op.pre.push_back(facts.intern(a));
    for (const auto& a : c.add) op.add.push_back(facts.intern(a));
    for (const auto& a : c.del) op.del.push_back(facts.intern(a));
    task.ops.push_back(std::move(op));
  }
  for (const auto& g : pp.problem.goal) {
    if (!fluent.count(g.predicate)) {
      if (!init_set.count(g)) task.goal_unreachable = true;
      continue;
    }
    auto id = facts.find(g);
    if (!id) {
      task.goal_unreachable = true;
      continue;
    }
    task.goal.push_back(*id);
  }
  task.num_facts = facts.size();
  return task;
}

// Bitset state.
struct State {
  std::vector<std::uint64_t> bits;
  bool test(std::size_t f) const { return (bits[f / 64] >> (f % 64)) & 1u; }
  void set(std::size_t f) { bits[f / 64] |= std::uint64_t{1} << (f % 64); }
  void reset(std::size_t f) { bits[f / 64] &= ~(std::uint64_t{1} << (f % 64)); }
  bool operator==(const State&) const = default;
};

struct StateHash {
  std::size_t operator()(const State& s) const {
    std::size_t h = 1469598103934665603ull;
    for (auto w : s.bits) h = (h ^ w) * 1099511628211ull;
    return h;
  }
};

bool holds_all(const State& s, const std::vector<std::size_t>& fs) {
  return std::all_of(fs.begin(), fs.end(), [&](std::size_t f) { return s.test(f); });
}

State apply_op(const State& s, const GroundOp& op) {
  State n = s;
  for (auto f : op.del) n.reset(f);
  for (auto f : op.add) n.set(f);
  return n;
}

constexpr std::size_t kInf = std::numeric_limits<std::size_t>::max();

// FF relaxed-plan length; kInf when the goal is relaxed-unreachable.
std::size_t relaxed_plan_length(const Task& task, const State& s) {
  std::vector<std::size_t> level(task.num_facts, kInf);
  std::vector<std::size_t> achiever(task.num_facts, kInf);
  std::vector<std::size_t> op_level(task.ops.size(), kInf);
  for (std::size_t f = 0; f < task.num_facts; ++f) {
    if (s.test(f)) level[f] = 0;
  }
  auto goal_reached = [&] {
    return std::all_of(task.goal.begin(), task.goal.end(), [&](std::size_t g) { return level[g] != kInf; });
  };
  for (std::size_t layer = 0; !goal_reached(); ++layer) {
    bool changed = false;
    for (std::size_t o = 0; o < task.ops.size(); ++o) {
      if (op_level[o] != kInf) continue;
      const auto& op = task.ops[o];
      if (!std::all_of(op.pre.begin(), op.pre.end(), [&](std::size_t f) { return level[f] <= layer; })) continue;
      op_level[o] = layer;
      for (auto f : op.add) {
        if (level[f] == kInf) {
          level[f] = layer + 1;
          achiever[f] = o;
          changed = true;
        }
      }
    }
    if (!changed) return kInf;
  }
  std::set<std::size_t> chosen;
  std::vector<std::size_t> open(task.goal.begin(), task.goal.end());
  std::vector<bool> seen(task.num_facts, false);
  while (!open.empty()) {
    const std::size_t f = open.back();
    open.pop_back();
    if (seen[f] || level[f] == 0) continue;
    seen[f] = true;
    const std::size_t o = achiever[f];
    if (chosen.insert(o).second) {
      for (auto p : task.ops[o].pre) open.push_back(p);
    }
  }
  return chosen.size();
}

struct Node {
  State state;
  std::size_t parent;
  std::size_t op;
};

Plan extract(const std::vector<Node>& nodes, std::size_t i, const Task& task) {
  Plan p;
  while (nodes[i].parent != kInf) {
    p.steps.push_back(task.ops[nodes[i].op].action);
    i = nodes[i].parent;
  }
  std::reverse(p.steps.begin(), p.steps.end());
  return p;
}

SolveResult search(const Task& task, const SolveOptions& opt, bool greedy) {
  SolveResult r;
  State init{std::vector<std::uint64_t>((task.num_facts + 63) / 64 + 1, 0)};
  for (auto f : task.init) init.set(f);
  if (holds_all(init, task.goal) && !task.goal_unreachable) {
    r.status = SolveResult::Status::Solved;
    return r;
  }
  if (task.goal_unreachable) return r;

  std::vector<Node> nodes;
  std::unordered_map<State, std::size_t, StateHash> seen;
  nodes.push_back({init, kInf, kInf});
  seen.emplace(init, 0);

  // (h, insertion order) for greedy; insertion order alone for BFS.
  using Entry = std::pair<std::size_t, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  std::deque<std::size_t> fifo;
  if (greedy) {
    const auto h = relaxed_plan_length(task, init);
    if (h == kInf) return r;
    open.push({h, 0});
  } else {
    fifo.push_back(0);
  }

  while (greedy ? !open.empty() : !fifo.empty()) {
    std::size_t cur;
    if (greedy) {
      cur = open.top().second;
      open.pop();
    } else {
      cur = fifo.front();
      fifo.pop_front();
    }
    if (r.expanded >= opt.budget) {
      throw BudgetExhaustedError("planner expansion budget of " + std::to_string(opt.budget) + " exhausted");
    }
    ++r.expanded;
    for (std::size_t o = 0; o < task.ops.size(); ++o) {
      const auto& op = task.ops[o];
      if (!holds_all(nodes[cur].state, op.pre)) continue;
      State next = apply_op(nodes[cur].state, op);
      if (seen.count(next)) continue;
      const std::size_t id = nodes.size();
      nodes.push_back({std::move(next), cur, o});
      seen.emplace(nodes[id].state, id);
      if (holds_all(nodes[id].state, task.goal)) {
        r.status = SolveResult::Status::Solved;
        r.plan = extract(nodes, id, task);
        return r;
      }
      if (greedy) {
        const auto h = relaxed_plan_length(task, nodes[id].state);
        if (h != kInf) open.push({h, id});
      } else {
        fifo.push_back(id);
      }
    }
  }
  return r;
}

}  // namespace

SolveResult solve(const PlanningProblem& problem, const SolveOptions& options) {
  const Task task = ground_task(problem);
  bool greedy = options.strategy == SearchStrategy::GreedyBestFirst;
  if (options.strategy == SearchStrategy::Auto) {
    const auto items = objects_of_type(problem, "item").size();
    const auto locations = objects_of_type(problem, "location").size();
    greedy = !(items <= 8 && locations <= 4);
  }
  return search(task, options, greedy);
}

SolveResult solve_external(const PlanningProblem& problem, const std::string& command, const std::string& workdir) {
  namespace fs = std::filesystem;
  fs::create_directories(workdir);
  const auto domain_path = (fs::path(workdir) / "domain.pddl").string();
  const auto problem_path = (fs::path(workdir) / "problem.pddl").string();
  {
    std::ofstream d(domain_path), p(problem_path);
    if (!d || !p) throw IoError("cannot write PDDL files in " + workdir);
    d << emit_domain(problem.domain);
    p << emit_problem(problem.problem);
  }
  const std::string cmd = command + " '" + domain_path + "' '" + problem_path + "'";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw IoError("cannot run external planner: " + command);
  std::string output;
  std::array<char, 4096> buf{};
  while (std::size_t n = fread(buf.data(), 1, buf.size(), pipe)) output.append(buf.data(), n);
  const int status = pclose(pipe);
  SolveResult r;
  if (status != 0) return r;
  // Keep only lines that look like actions.
  std::string actions;
  std::istringstream in(output);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find('(') != std::string::npos) actions += line + "\n";
  }
  r.plan = parse_plan(actions);
  r.status = validate(r.plan, problem).ok ? SolveResult::Status::Solved : SolveResult::Status::Unsolvable;
  return r;
}

ValidationResult validate(const Plan& plan, const PlanningProblem& problem) {
  ValidationResult r;
  std::set<Atom> state(problem.problem.init.begin(), problem.problem.init.end());
  std::map<std::string, std::string> type_of;
  for (const auto& o : problem.problem.objects) type_of[o.name] = o.type;

  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const auto& step = plan.steps[i];
    auto fail = [&](const std::string& why) {
      r.ok = false;
      r.failing_step = i;
      r.reason = "step " + std::to_string(i) + " " + step.to_string() + ": " + why;
      return r;
    };
    auto schema = std::find_if(problem.domain.actions.begin(), problem.domain.actions.end(),
                               [&](const ActionSchema& a) { return a.name == step.name; });
    if (schema == problem.domain.actions.end()) return fail("unknown action");
    if (schema->parameters.size() != step.args.size()) return fail("wrong number of arguments");
    std::map<std::string, std::string> sub;
    for (std::size_t k = 0; k < step.args.size(); ++k) {
      auto t = type_of.find(step.args[k]);
      if (t == type_of.end()) return fail("unknown constant " + step.args[k]);
      if (!schema->parameters[k].type.empty() && !is_subtype(problem.domain, t->second, schema->parameters[k].type)) {
        return fail(step.args[k] + " is not a " + schema->parameters[k].type);
      }
      sub[schema->parameters[k].name] = step.args[k];
    }
    for (const auto& pre : schema->precondition) {
      const Atom b = bind_atom(pre, sub);
      if (!state.count(b)) return fail("precondition " + b.to_string() + " does not hold");
    }
    for (const auto& e : schema->del_effects) state.erase(bind_atom(e, sub));
    for (const auto& e : schema->add_effects) state.insert(bind_atom(e, sub));
  }
  for (const auto& g : problem.problem.goal) {
    if (!state.count(g)) {
      r.ok = false;
      r.reason = "goal " + g.to_string() + " is not satisfied";
      return r;
    }
  }
  r.ok = true;
  return r;
}

}  // namespace tcar
