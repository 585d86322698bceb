#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tcar/interpreter.hpp"
#include "tcar/world.hpp"

namespace tcar {

struct Atom {
  std::string predicate;
  std::vector<std::string> args;

  std::string to_string() const;  // "(at mug table)"
  auto operator<=>(const Atom&) const = default;
};

struct TypedName {
  std::string name;
  std::string type;  // empty: untyped / no parent
  bool operator==(const TypedName&) const = default;
};

struct PredicateDecl {
  std::string name;
  std::vector<TypedName> params;
  bool operator==(const PredicateDecl&) const = default;
};

struct ActionSchema {
  std::string name;
  std::vector<TypedName> parameters;  // names include the leading '?'
  std::vector<Atom> precondition;
  std::vector<Atom> add_effects;
  std::vector<Atom> del_effects;
  bool operator==(const ActionSchema&) const = default;
};

struct Domain {
  std::string name;
  std::vector<std::string> requirements;  // e.g. ":strips"
  std::vector<TypedName> types;           // type and optional parent
  std::vector<PredicateDecl> predicates;
  std::vector<ActionSchema> actions;
  bool operator==(const Domain&) const = default;
};

struct Problem {
  std::string name;
  std::string domain;
  std::vector<TypedName> objects;
  std::vector<Atom> init;
  std::vector<Atom> goal;
  bool operator==(const Problem&) const = default;
};

struct PlanningProblem {
  Domain domain;
  Problem problem;
  bool operator==(const PlanningProblem&) const = default;
};

struct Plan {
  std::vector<GroundAction> steps;
  std::size_t cost() const { return steps.size(); }
  bool operator==(const Plan&) const = default;
};

// move / pick / place / toggle-on / toggle-off over location, item, device.
const Domain& robot_domain();

std::string emit_domain(const Domain& domain);
std::string emit_problem(const Problem& problem);

using PddlDocument = std::variant<Domain, Problem>;
// STRIPS + :typing subset. Throws SyntaxError (with line/column) or
// UnsupportedRequirementError.
PddlDocument parse_pddl(std::string_view text);
Domain parse_domain(std::string_view text);
Problem parse_problem(std::string_view text);

// One action per line, "(move hall kitchen)"; "move(hall,kitchen)" is also accepted.
std::string format_plan(const Plan& plan);
Plan parse_plan(std::string_view text);

// Per-task planning template, loaded from the task file.
struct TaskSpec {
  std::string name;
  std::string verb;                    // used in generic questions
  std::vector<std::string> required;   // must be given or elicited
  std::vector<std::string> inferable;  // may be filled from the world model
  std::vector<std::string> optional;
  std::vector<std::string> order;      // required + inferable, file order
  std::map<std::string, std::string> aliases;  // slot -> slot it can stand for
  std::vector<Atom> goal;                      // `$slot` placeholders

  // Required and inferable slots in declaration order.
  std::vector<std::string> slots() const;
  bool has_slot(const std::string& slot) const;
};

class TaskLibrary {
 public:
  static TaskLibrary parse(std::string_view text);
  static TaskLibrary load(const std::string& path);

  const TaskSpec* find(std::string_view task_type) const;
  const TaskSpec& require(std::string_view task_type) const;
  const std::vector<TaskSpec>& tasks() const { return tasks_; }

 private:
  std::vector<TaskSpec> tasks_;
};

// Entity to use for `slot`, following aliases; person entities standing for
// a location resolve to the person's location.
std::optional<std::string> slot_entity(const TaskSpec& spec, const TaskFrame& frame, const WorldModel& world,
                                       const std::string& slot);

// Grounds the task's goal template with `frame.entities` and emits the
// initial state from `world`. Throws MissingSlotError / UnknownConstantError.
PlanningProblem generate_problem(const TaskFrame& frame, const WorldModel& world, const TaskLibrary& library);
// Initial state only, with the given goal.
PlanningProblem problem_from_world(const WorldModel& world, std::vector<Atom> goal, std::string name = "task");

enum class SearchStrategy { Auto, BreadthFirst, GreedyBestFirst };

struct SolveOptions {
  std::size_t budget = 100000;  // node expansions
  SearchStrategy strategy = SearchStrategy::Auto;
};

struct SolveResult {
  enum class Status { Solved, Unsolvable };
  Status status = Status::Unsolvable;
  Plan plan;
  std::size_t expanded = 0;
  bool solved() const { return status == Status::Solved; }
};

// Auto runs breadth-first search on instances with at most 8 items and 4
// locations and greedy best-first search on the relaxed-plan heuristic
// otherwise. Throws BudgetExhaustedError when the expansion budget runs out.
SolveResult solve(const PlanningProblem& problem, const SolveOptions& options = {});

// Writes domain.pddl / problem.pddl to `workdir`, runs `command` with those
// two paths appended, and parses a plan from its stdout.
SolveResult solve_external(const PlanningProblem& problem, const std::string& command, const std::string& workdir);

struct ValidationResult {
  bool ok = false;
  std::optional<std::size_t> failing_step;  // unset: steps fine, goal unmet (or ok)
  std::string reason;
};

ValidationResult validate(const Plan& plan, const PlanningProblem& problem);

}  // namespace tcar
