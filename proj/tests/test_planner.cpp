#include <gtest/gtest.h>

#include "support.hpp"
#include "tcar/error.hpp"

using namespace tcar;
using namespace tcar::testing;

namespace {

// Random small instance over a line of `nl` locations.
PlanningProblem random_problem(std::mt19937_64& rng, int nl, int ni) {
  WorldModel w;
  for (int i = 0; i < nl; ++i) w.locations.push_back({"l" + std::to_string(i), {}});
  for (int i = 0; i + 1 < nl; ++i) w.adjacency.push_back({"l" + std::to_string(i), "l" + std::to_string(i + 1)});
  std::uniform_int_distribution<int> loc(0, nl - 1);
  for (int i = 0; i < ni; ++i) w.objects.push_back({"o" + std::to_string(i), "l" + std::to_string(loc(rng)), true, {}});
  w.devices.push_back({"d", "l" + std::to_string(loc(rng)), false, {}});
  w.robot.location = "l" + std::to_string(loc(rng));
  std::vector<Atom> goal = {{"at", {"o0", "l" + std::to_string(loc(rng))}}, {"is-on", {"d"}}};
  if (ni > 1) goal.push_back({"at", {"o1", "l" + std::to_string(loc(rng))}});
  return problem_from_world(w, goal, "rnd");
}

}  // namespace

TEST(Planner, BreadthFirstIsOptimalOnRandomInstances) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 25; ++i) {
    const auto pp = random_problem(rng, 2 + i % 3, 1 + i % 3);
    const auto res = solve(pp);
    const auto best = bfs_optimum(pp);
    ASSERT_TRUE(best.has_value());
    ASSERT_TRUE(res.solved());
    EXPECT_EQ(res.plan.cost(), *best);
    EXPECT_TRUE(validate(res.plan, pp).ok);
  }
}

TEST(Planner, GreedySearchOnLargerWorldGivesValidPlan) {
  const WorldModel w = home_world();  // 13 locations: above the breadth-first limit
  const auto pp = problem_from_world(w, {{"at", {"book", "table"}}, {"is-on", {"lamp"}}});
  const auto res = solve(pp);
  ASSERT_TRUE(res.solved());
  EXPECT_TRUE(validate(res.plan, pp).ok);
  SolveOptions bfs;
  bfs.strategy = SearchStrategy::BreadthFirst;
  EXPECT_LE(solve(pp, bfs).plan.cost(), res.plan.cost());
}

TEST(Planner, SatisfiedGoalGivesEmptyPlan) {
  const auto pp = problem_from_world(home_world(), {{"robot-at", {"hall"}}});
  const auto res = solve(pp);
  ASSERT_TRUE(res.solved());
  EXPECT_TRUE(res.plan.steps.empty());
}

TEST(Planner, UnsolvableAndBudget) {
  WorldModel w = home_world();
  w.objects.push_back({"piano", "hall", false, {}});
  const auto stuck = problem_from_world(w, {{"holding", {"piano"}}});
  EXPECT_FALSE(solve(stuck).solved());
  SolveOptions tiny;
  tiny.budget = 3;
  tiny.strategy = SearchStrategy::BreadthFirst;
  EXPECT_THROW(solve(problem_from_world(home_world(), {{"at", {"keys", "table"}}}), tiny), BudgetExhaustedError);
}

TEST(Validate, PinpointsTheFailingStep) {
  const auto pp = problem_from_world(home_world(), {{"robot-at", {"kitchen"}}});
  Plan bad{{{"move", {"hall", "kitchen"}}, {"move", {"hall", "office"}}}};
  auto v = validate(bad, pp);
  EXPECT_FALSE(v.ok);
  EXPECT_EQ(v.failing_step, 1u);
  Plan short_plan{{{"move", {"hall", "office"}}}};
  v = validate(short_plan, pp);
  EXPECT_FALSE(v.ok);
  EXPECT_FALSE(v.failing_step.has_value());
  EXPECT_TRUE(validate(Plan{{{"move", {"hall", "kitchen"}}}}, pp).ok);
}

TEST(Pddl, EmitParseRoundTrip) {
  EXPECT_EQ(parse_domain(emit_domain(robot_domain())), robot_domain());
  const auto pp = problem_from_world(home_world(), {{"at", {"mug", "sofa"}}});
  EXPECT_EQ(parse_problem(emit_problem(pp.problem)), pp.problem);
  const auto doc = parse_pddl(emit_problem(pp.problem));
  EXPECT_TRUE(std::holds_alternative<Problem>(doc));
  for (const auto& p : bundled_problems()) {
    const auto b = load_bundled(p);
    EXPECT_EQ(parse_problem(emit_problem(b.problem)), b.problem) << p;
  }
}

TEST(Pddl, SyntaxErrorsCarryPosition) {
  try {
    parse_problem("(define (problem p)\n  (:domain robot)\n  (:init (robot-at hall)");
    FAIL() << "expected a syntax error";
  } catch (const SyntaxError& e) {
    EXPECT_GE(e.line(), 3u);
  }
  try {
    parse_domain("(define (domain d)\n  (:requirements :strips :conditional-effects))");
    FAIL() << "expected an unsupported requirement";
  } catch (const UnsupportedRequirementError&) {
  }
  EXPECT_THROW(parse_domain("(define (domain d) (:predicates (p ?x)) ) )"), SyntaxError);
}

TEST(PlanText, FormatParseRoundTrip) {
  const Plan p{{{"move", {"hall", "kitchen"}}, {"pick", {"mug", "kitchen"}}}};
  EXPECT_EQ(parse_plan(format_plan(p)), p);
  EXPECT_EQ(parse_plan("move(hall,kitchen)\npick(mug,kitchen)\n"), p);
}

TEST(ProblemGeneration, GoalFromTaskTemplate) {
  const WorldModel w = home_world();
  TaskFrame f;
  f.task_type = "Bringing";
  f.entities = {{"object", "mug"}, {"goal-location", "user"}, {"source-location", "table"}};
  const auto pp = generate_problem(f, w, resources().tasks);
  // a person goal resolves to where the person is
  EXPECT_EQ(pp.problem.goal, (std::vector<Atom>{{"at", {"mug", "living-room"}}}));
  f.entities.erase("object");
  EXPECT_THROW(generate_problem(f, w, resources().tasks), MissingSlotError);
  f.entities["object"] = "unicorn";
  EXPECT_THROW(generate_problem(f, w, resources().tasks), UnknownConstantError);
}

TEST(TaskLibrary, ParsesBlocks) {
  const auto& lib = resources().tasks;
  const TaskSpec& b = lib.require("Bringing");
  EXPECT_EQ(b.verb, "bring");
  EXPECT_TRUE(b.has_slot("source-location"));
  EXPECT_EQ(b.aliases.at("person"), "goal-location");
  EXPECT_EQ(lib.find("Dancing"), nullptr);
  EXPECT_THROW(TaskLibrary::parse("[X]\nnonsense line\n"), FormatError);
}
