#include <gtest/gtest.h>

#include "support.hpp"
#include "tcar/error.hpp"

using namespace tcar;
using namespace tcar::testing;

namespace {

struct Run {
  std::string text;
  DialogueSession session;
};

Run run(const std::vector<std::string>& turns, DialogueConfig cfg = {}, InteractionHistory* h = nullptr) {
  Run r;
  r.text = run_script(reference_models(), turns, cfg, h, &r.session);
  return r;
}

std::string last_agent(const DialogueSession& s) {
  for (auto it = s.transcript.rbegin(); it != s.transcript.rend(); ++it) {
    if (it->first == "agent") return it->second;
  }
  return "";
}

}  // namespace

TEST(Dialogue, ConversationalTurnsGolden) {
  const auto r = run({"hello", "where are you?", "what can you do?", "bye"});
  EXPECT_EQ(r.session.termination, Termination::Bye);
  EXPECT_TRUE(matches_golden("chat-conversational.txt", r.text)) << r.text;
}

TEST(Dialogue, CompleteInstructionExecutesWithoutQuestions) {
  const auto r = run({"bring me the mug from the table"});
  EXPECT_EQ(r.session.termination, Termination::TaskExecuted);
  EXPECT_EQ(r.session.questions, 0u);
  ASSERT_EQ(r.session.plans.size(), 1u);
  EXPECT_TRUE(validate(r.session.plans[0], r.session.problems[0]).ok);
  EXPECT_TRUE(matches_golden("bring-complete.txt", r.text)) << r.text;
}

TEST(Dialogue, MissingGoalIsElicited) {
  const auto r = run({"bring the mug", "to me"});
  ASSERT_GE(r.session.transcript.size(), 3u);
  EXPECT_EQ(r.session.transcript[2].second, "Where should I bring it?");
  EXPECT_EQ(r.session.termination, Termination::TaskExecuted);
  EXPECT_EQ(r.session.completed.back().entities.at("goal-location"), "user");
}

TEST(Dialogue, SourceInferredFromKnowledgeBase) {
  const auto r = run({"take the book"});
  EXPECT_EQ(r.session.termination, Termination::TaskExecuted);
  EXPECT_EQ(r.session.completed.back().entities.at("source-location"), "shelf");
}

TEST(Dialogue, AmbiguousObjectAsksForSourceThenChoice) {
  auto r = run({"bring me the pen", "the desk"});
  EXPECT_EQ(r.session.transcript[2].second, "From where do I bring it?");
  EXPECT_EQ(r.session.completed.back().entities.at("object"), "blue-pen");

  r = run({"put the pen on the sofa", "the red one"});
  EXPECT_EQ(r.session.transcript[2].second, "Which pen do you mean: the blue pen or the red pen?");
  EXPECT_EQ(r.session.termination, Termination::TaskExecuted);
  EXPECT_EQ(r.session.completed.back().entities.at("object"), "red-pen");
  EXPECT_EQ(last_agent(r.session), "OK, putting the red pen in the sofa.");
}

TEST(Dialogue, UnknownArgumentIsReported) {
  const auto r = run({"take the spaceship", "the book"});
  EXPECT_EQ(r.session.transcript[2].second, "I could not find the spaceship. What should I take?");
  EXPECT_EQ(r.session.completed.back().entities.at("object"), "book");
}

TEST(Dialogue, StateElicitation) {
  const auto r = run({"turn the lamp", "on"});
  EXPECT_EQ(r.session.transcript[2].second, "Should I turn the lamp on or off?");
  EXPECT_EQ(r.session.completed.back().entities.at("intended-state"), "on");
}

TEST(Dialogue, MultiTaskWithPronounAfterConfirmation) {
  const auto r = run({"take the mug from the table and bring it to me", "yes"});
  EXPECT_EQ(r.session.termination, Termination::TaskExecuted);
  ASSERT_EQ(r.session.completed.size(), 2u);
  EXPECT_EQ(r.session.completed[1].entities.at("object"), "mug");
  EXPECT_EQ(r.session.completed[1].arguments.at("object").resolved_from, "it");
  EXPECT_TRUE(matches_golden("multi-task-pronoun.txt", r.text)) << r.text;
}

TEST(Dialogue, GibberishIsNotUnderstood) {
  const auto r = run({"asdf qwer"});
  EXPECT_EQ(r.session.termination, Termination::NotUnderstood);
}

TEST(Dialogue, TerminatedSessionRejectsInput) {
  const Agent agent(resources(), reference_models(), nullptr, {});
  DialogueSession s = agent.engine().start_session();
  const WorldModel w = home_world();
  agent.engine().step(s, "bye", w);
  ASSERT_TRUE(s.terminal());
  EXPECT_THROW(agent.engine().step(s, "hello", w), SessionTerminatedError);
}

TEST(Dialogue, BaselinePoliciesAskNothing) {
  DialogueConfig nd;
  nd.policy = DialoguePolicy::none();
  auto r = run({"take the book"}, nd);
  EXPECT_EQ(r.session.termination, Termination::Incapable);
  EXPECT_EQ(r.session.questions, 0u);

  DialogueConfig ad;
  ad.policy = DialoguePolicy::arguments();
  // no knowledge-base inference: the source is asked for too
  r = run({"bring the mug", "the table", "to me"}, ad);
  EXPECT_EQ(r.session.transcript[2].second, "From where do I bring it?");
  EXPECT_EQ(r.session.termination, Termination::TaskExecuted) << r.text;
  r = run({"find the keys in the bedroom and bring them to me"}, ad);
  EXPECT_EQ(r.session.termination, Termination::Incapable);
}

TEST(Ranking, EmptyEvidenceIsUniformAndExcludedTypesDrop) {
  const Agent agent(resources(), reference_models(), nullptr, {});
  // punctuation only: no argument evidence at all
  const auto tokens = agent.interpreter().analyze("?");
  const auto r = agent.engine().rank_alternatives(tokens, {"Motion"});
  ASSERT_EQ(r.size(), kTaskTypes.size() - 1);
  for (const auto& x : r) {
    EXPECT_NE(x.task_type, "Motion");
    EXPECT_NEAR(x.probability, 1.0 / r.size(), 1e-12);
  }
  // alphabet order on ties
  EXPECT_EQ(r.front().task_type, "Taking");
}

TEST(Ranking, CountsAreSubsetMatchesAndSoftmaxed) {
  InteractionHistory h;
  DialogueConfig cfg;
  const Agent agent(resources(), reference_models(), &h, cfg);
  const auto tokens = agent.interpreter().analyze("stash the keys in the office");
  const auto ev = agent.interpreter().predict_arguments_taskfree(tokens).types_present;
  ASSERT_FALSE(ev.empty());
  const auto r = agent.engine().rank_alternatives(tokens, {});
  double sum = 0, mx = 0;
  for (const auto& x : r) {
    double n = 0;
    for (const auto& e : reference_models().evidence) {
      if (e.task_type == x.task_type &&
          std::includes(e.argument_types.begin(), e.argument_types.end(), ev.begin(), ev.end()))
        ++n;
    }
    EXPECT_EQ(x.count, n) << x.task_type;
    sum += x.probability;
    mx = std::max(mx, n);
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  double z = 0;
  for (const auto& x : r) z += std::exp(x.count - mx);
  for (const auto& x : r) EXPECT_NEAR(x.probability, std::exp(x.count - mx) / z, 1e-12);
  for (std::size_t i = 1; i < r.size(); ++i) EXPECT_GE(r[i - 1].probability, r[i].probability);
}

TEST(History, WeightScalesContribution) {
  for (double w : {1.0, 2.0, 3.5}) {
    InteractionHistory h;
    DialogueConfig cfg;
    cfg.history_weight = w;
    const Agent agent(resources(), reference_models(), &h, cfg);
    const auto tokens = agent.interpreter().analyze("stash the keys in the office");
    auto count = [&] {
      for (const auto& x : agent.engine().rank_alternatives(tokens, {})) {
        if (x.task_type == "Placing") return x.count;
      }
      return -1.0;
    };
    const double before = count();
    TaskFrame f;
    f.task_type = "Placing";
    agent.engine().record_success({f}, "stash the keys in the office", tokens);
    EXPECT_DOUBLE_EQ(count() - before, w);
    ASSERT_EQ(h.size(), 1u);
    EXPECT_EQ(h.records()[0].weight, w);
  }
}

TEST(History, SuccessfulSessionsAreRecordedAndPersisted) {
  const fs::path dir = scratch_dir("history");
  const std::string path = (dir / "history.jsonl").string();
  {
    InteractionHistory h(path);
    const auto r = run({"bring me the mug from the table"}, {}, &h);
    ASSERT_EQ(r.session.termination, Termination::TaskExecuted);
    EXPECT_EQ(h.size(), 1u);
  }
  InteractionHistory reloaded(path);
  ASSERT_EQ(reloaded.size(), 1u);
  const auto rec = reloaded.records()[0];
  EXPECT_EQ(rec.task_type, "Bringing");
  EXPECT_EQ(rec.utterance, "bring me the mug from the table");
  EXPECT_TRUE(rec.argument_types.count("object"));
  EXPECT_DOUBLE_EQ(rec.weight, 2.0);
  fs::remove_all(dir);
}

TEST(History, WriteFailureIsAWarningNotAnError) {
  InteractionHistory h("/nonexistent-dir/history.jsonl");
  const auto r = run({"bring me the mug from the table"}, {}, &h);
  EXPECT_EQ(r.session.termination, Termination::TaskExecuted);
  EXPECT_FALSE(r.session.warning.empty());
  EXPECT_THROW(h.append({"x", "Motion", {}, 1.0}), IoError);
}

TEST(Templates, RenderingRules) {
  const Templates& t = resources().templates;
  EXPECT_EQ(t.confirm("Placing", {{"object", {"the display", "the display"}}}, "put"),
            "Do you want me to put the display in somewhere?");
  EXPECT_EQ(t.confirm("Bringing", {{"object", {"mug", "mug"}}, {"goal-location", {"me", "me"}}}, "bring"),
            "Should I bring the mug to you?");
  EXPECT_EQ(t.elicit("Taking", "source-location", {}, "take"), "From where do I take it?");
  EXPECT_EQ(t.elicit("Motion", "goal-location", {}, "go"), "Where should I go?");
  EXPECT_EQ(t.choice("pen", {"blue pen", "red pen"}), "Which pen do you mean: the blue pen or the red pen?");
  EXPECT_EQ(join_choices({"a", "b", "c"}), "a, b or c");
  EXPECT_EQ(noun_phrase("me"), "you");
  EXPECT_EQ(noun_phrase("my mug"), "my mug");
  EXPECT_THROW(t.render("{nonexistent}", {}), FormatError);
  EXPECT_THROW(Templates::parse("no section\nkey = value\n"), FormatError);
}
