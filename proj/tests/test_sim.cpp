#include <gtest/gtest.h>

#include <algorithm>

#include "json.hpp"
#include "support.hpp"
#include "tcar/error.hpp"
#include "tcar/sim.hpp"

using namespace tcar;
using namespace tcar::testing;

TEST(Execute, OneEventPerStepPlusSuccess) {
  const WorldModel w = home_world();
  const std::vector<GroundAction> plan = {
      {"move", {"hall", "kitchen"}}, {"move", {"kitchen", "table"}}, {"pick", {"mug", "table"}}};
  const Execution e = execute(plan, w, 10);
  ASSERT_EQ(e.events.size(), 4u);
  EXPECT_EQ(e.events[0], (SimEvent{10, SimEventKind::Move, {"hall", "kitchen"}}));
  EXPECT_EQ(e.events[2], (SimEvent{12, SimEventKind::Pick, {"mug", "table"}}));
  EXPECT_EQ(e.events[3].kind, SimEventKind::Success);
  EXPECT_EQ(e.events[3].seq, 13u);
  EXPECT_EQ(e.world.robot.holding, std::optional<std::string>("mug"));
  EXPECT_EQ(e.world.robot.location, "table");
  EXPECT_EQ(fold_events(w, e.events), e.world);
}

TEST(Execute, InapplicablePlanThrowsFirst) {
  const WorldModel w = home_world();
  // second step picks from a location the robot is not at
  const std::vector<GroundAction> plan = {{"move", {"hall", "kitchen"}}, {"pick", {"mug", "table"}}};
  EXPECT_THROW(execute(plan, w), InconsistentEffectError);
}

TEST(Execute, ToggleAndSpeakEvents) {
  const WorldModel w = home_world();
  const auto e = execute({{"move", {"hall", "living-room"}}, {"toggle-on", {"display", "living-room"}}}, w);
  EXPECT_EQ(e.events[1], (SimEvent{2, SimEventKind::Toggle, {"display", "on", "living-room"}}));
  EXPECT_TRUE(e.world.find_device("display")->on);
  // speak events never touch the world
  std::vector<SimEvent> with_speech = e.events;
  with_speech.insert(with_speech.begin(), SimEvent{0, SimEventKind::Speak, {"OK"}});
  EXPECT_EQ(fold_events(w, with_speech), e.world);
  for (auto k : {SimEventKind::Move, SimEventKind::Pick, SimEventKind::Place, SimEventKind::Toggle,
                 SimEventKind::Speak, SimEventKind::Success}) {
    EXPECT_EQ(parse_sim_event_kind(to_string(k)), k);
  }
}

TEST(Generator, DeterministicPerSeed) {
  const WorldModel w = home_world();
  const auto a = generate_corpus(w, 120, 3);
  const auto b = generate_corpus(w, 120, 3);
  const auto c = generate_corpus(w, 120, 4);
  EXPECT_EQ(format_corpus(a), format_corpus(b));
  EXPECT_NE(format_corpus(a), format_corpus(c));
}

TEST(Generator, CategoryCountsAreExact) {
  const WorldModel w = home_world();
  for (std::size_t n : {20u, 200u, 333u}) {
    const auto corpus = generate_corpus(w, n, 11);
    ASSERT_EQ(corpus.size(), n);
    std::map<std::string, std::size_t> count;
    for (const auto& r : corpus) ++count[r.category];
    EXPECT_EQ(count[kCategoryMissing], std::size_t(std::llround(0.20 * n)));
    EXPECT_EQ(count[kCategoryPronoun], std::size_t(std::llround(0.15 * n)));
    EXPECT_EQ(count[kCategoryAmbiguous], std::size_t(std::llround(0.10 * n)));
    EXPECT_EQ(count[kCategoryMulti], std::size_t(std::llround(0.05 * n)));
  }
  EXPECT_THROW(generate_corpus(w, 0, 1), EmptyCorpusError);
}

TEST(Generator, RecordsAreConsistent) {
  const WorldModel w = home_world();
  const auto& tasks = resources().tasks;
  for (const auto& r : generate_corpus(w, 300, 5)) {
    ASSERT_EQ(r.tokens.size(), r.task_labels.size()) << r.text;
    ASSERT_EQ(r.tokens.size(), r.argument_labels.size()) << r.text;
    ASSERT_FALSE(r.frames.empty()) << r.text;
    std::size_t task_spans = 0;
    for (std::size_t i = 0; i < r.task_labels.size(); ++i) {
      if (r.task_labels[i] != kOutside && (i == 0 || r.task_labels[i - 1] != r.task_labels[i])) ++task_spans;
    }
    EXPECT_EQ(task_spans, r.frames.size()) << r.text;
    if (r.category == kCategoryPronoun) {
      const bool pronoun = std::any_of(r.tokens.begin(), r.tokens.end(),
                                       [](const std::string& t) { return t == "it" || t == "them"; });
      EXPECT_TRUE(pronoun) << r.text;
      EXPECT_GE(r.frames.size(), 2u);
    }
    if (r.category == kCategoryMissing) {
      EXPECT_TRUE(std::any_of(r.frames.begin(), r.frames.end(), [](const GoldFrame& f) {
        return std::any_of(f.slots.begin(), f.slots.end(), [](const GoldSlot& s) { return !s.mentioned; });
      })) << r.text;
    }
    for (const auto& f : r.frames) {
      EXPECT_TRUE(is_task_type(f.task_type));
      // every gold frame describes a reachable goal on the world
      EXPECT_FALSE(gold_goal(f, w, tasks).empty()) << r.text << " " << f.task_type;
    }
  }
  // the text round-trips through the corpus format
  const auto c = generate_corpus(w, 50, 9);
  EXPECT_EQ(format_corpus(parse_corpus(format_corpus(c))), format_corpus(c));
}

TEST(SimulatedUser, AnswersFromGold) {
  const WorldModel w = home_world();
  GoldFrame g{"Bringing", {{"object", "mug", "the mug", true}, {"person", "user", "me", false}}};
  PendingQuestion q;
  q.kind = PendingKind::ConfirmTask;
  q.subject = "Bringing";
  EXPECT_EQ(simulated_user(g, q, w), "yes");
  q.subject = "Taking";
  EXPECT_EQ(simulated_user(g, q, w), "no");
  q.kind = PendingKind::ElicitArgument;
  q.subject = "goal-location";
  EXPECT_EQ(simulated_user(g, q, w), "me");
  q.subject = "source-location";
  EXPECT_EQ(simulated_user(g, q, w), "the table");
  q.subject = "search-area";
  EXPECT_EQ(simulated_user(g, q, w), "I do not know");
  q.kind = PendingKind::DisambiguateGrounding;
  q.subject = "object";
  EXPECT_EQ(simulated_user(g, q, w), "mug");
}

TEST(Eval, ReportFormats) {
  EvalRow r;
  r.system = "TCAR";
  r.instructions = 4;
  r.instructions_succeeded = 3;
  r.tasks_given = 5;
  r.plans_generated = 4;
  r.failures["incapable"] = 1;
  r.by_category["complete"] = {3, 4};
  EvalReport rep{{r}};
  const auto j = nlohmann::json::parse(rep.to_json());
  ASSERT_EQ(j.size(), 1u);
  EXPECT_EQ(j[0]["system"], "TCAR");
  EXPECT_EQ(j[0]["percentage"], "80.0");
  EXPECT_EQ(j[0]["failures"]["incapable"], 1);
  EXPECT_EQ(j[0]["categories"]["complete"]["total"], 4);
  EXPECT_NE(rep.to_table().find("80.0%"), std::string::npos);
  EXPECT_DOUBLE_EQ(r.success_rate(), 0.75);
  for (auto m : {EvalMode::ND, EvalMode::AD, EvalMode::TCAR}) EXPECT_EQ(parse_eval_mode(to_string(m)), m);
  EXPECT_THROW(parse_eval_mode("xx"), FormatError);
}

TEST(Eval, ParallelRunMatchesSerial) {
  const auto& m = reference_models();
  const Agent agent(resources(), m, nullptr, {});
  const auto corpus = generate_corpus(home_world(), 40, 21);
  const EvalRow a = run_eval(agent.engine(), "TCAR", corpus, home_world(), 1);
  const EvalRow b = run_eval(agent.engine(), "TCAR", corpus, home_world(), 4);
  EXPECT_EQ(a.plans_generated, b.plans_generated);
  EXPECT_EQ(a.instructions_succeeded, b.instructions_succeeded);
  EXPECT_EQ(a.failures, b.failures);
  EXPECT_EQ(a.instructions, 40u);
  std::size_t gold = 0;
  for (const auto& r : corpus) gold += r.frames.size();
  EXPECT_EQ(a.tasks_given, gold);
}
