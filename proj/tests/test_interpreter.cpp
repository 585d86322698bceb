#include <gtest/gtest.h>

#include "support.hpp"
#include "tcar/error.hpp"

using namespace tcar;
using namespace tcar::testing;

namespace {

TokenSequence toks(const std::string& s) { return resources().analyzer->analyze(s); }

ArgumentValue value(const std::string& surface, std::size_t begin) {
  ArgumentValue v;
  v.surface = v.lemma = surface;
  v.span = {begin, begin + 1};
  return v;
}

}  // namespace

TEST(TaskAssociation, NearestFollowingElsePreceding) {
  const std::vector<std::string> labels = {"o", "Taking", "o", "o", "Bringing", "o"};
  const auto g = task_association(labels);
  EXPECT_EQ(g, (std::vector<std::string>{"Taking", kNullAssociation, "Bringing", "Bringing", kNullAssociation,
                                         "Bringing"}));
  EXPECT_EQ(task_association({"o", "o"}), (std::vector<std::string>{kNullAssociation, kNullAssociation}));
}

TEST(SplitMultiTask, OneSpanPerVerbGroup) {
  const auto t = toks("please take the mug and bring it to me");
  const std::vector<std::string> labels = {"o", "Taking", "o", "o", "o", "Bringing", "o", "o", "o"};
  const auto spans = split_multi_task(t, labels);
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(spans[0].span, (Span{0, 5}));
  EXPECT_EQ(spans[1].span, (Span{5, 9}));
  EXPECT_EQ(spans[1].task_type, "Bringing");
  EXPECT_THROW(split_multi_task(t, {"o"}), LengthMismatchError);
}

TEST(CollectArguments, FirstRunOfEachTypeWins) {
  const auto t = toks("put the red mug on the table");
  const std::vector<std::string> a = {"o", "object", "object", "object", "o", "goal-location", "goal-location"};
  const auto args = collect_arguments(t, a, {0, t.size()});
  ASSERT_EQ(args.size(), 2u);
  EXPECT_EQ(args.at("object").surface, "the red mug");
  EXPECT_EQ(args.at("goal-location").span, (Span{5, 7}));
}

TEST(Coreference, CurrentInstructionThenHistory) {
  TaskFrame take, bring;
  take.task_type = "Taking";
  take.arguments["object"] = value("the mug", 1);
  bring.task_type = "Bringing";
  bring.arguments["object"] = value("it", 5);
  bring.arguments["person"] = value("me", 7);
  auto out = resolve_coreference({take, bring}, {});
  EXPECT_EQ(out[1].arguments.at("object").surface, "the mug");
  EXPECT_EQ(out[1].arguments.at("object").resolved_from, "it");

  TaskFrame earlier;
  earlier.task_type = "Change-state";
  earlier.arguments["device"] = value("the display", 3);
  TaskFrame now;
  now.task_type = "Change-state";
  now.arguments["device"] = value("it", 1);
  out = resolve_coreference({now}, {earlier});
  EXPECT_EQ(out[0].arguments.at("device").surface, "the display");

  // nothing compatible: pronoun stays
  out = resolve_coreference({now}, {});
  EXPECT_TRUE(out[0].arguments.at("device").is_pronoun());
}

TEST(Evidence, OneRecordPerFrame) {
  const auto& corpus = reference_corpus().all;
  const auto ev = evidence_from_corpus(corpus);
  std::size_t frames = 0;
  for (const auto& r : corpus) frames += r.frames.size();
  EXPECT_EQ(ev.size(), frames);
  for (const auto& e : ev) EXPECT_TRUE(std::find(kTaskTypes.begin(), kTaskTypes.end(), e.task_type) != kTaskTypes.end());
}

TEST(ScoreLabels, MicroAverageIgnoresOutside) {
  const std::vector<std::vector<std::string>> gold = {{"A", "o", "B"}, {"A"}};
  const std::vector<std::vector<std::string>> pred = {{"A", "B", "o"}, {"A"}};
  const auto s = score_labels(gold, pred);
  // tp 2, predicted 3, gold 3
  EXPECT_NEAR(s.precision, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.recall, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.f1, 2.0 / 3.0, 1e-12);
}

TEST(Interpreter, ReferenceModelReadsCompleteInstruction) {
  const TaskInterpreter ti(resources().analyzer.get(), resources().featurizer, reference_models().interpreter);
  const auto in = ti.interpret("bring me the mug from the table");
  ASSERT_EQ(in.frames.size(), 1u);
  const auto& f = in.frames[0];
  EXPECT_EQ(f.task_type, "Bringing");
  EXPECT_EQ(f.argument("person")->surface, "me");
  EXPECT_EQ(f.argument("object")->surface, "the mug");
  EXPECT_EQ(f.argument("source-location")->surface, "the table");
  EXPECT_GT(f.confidence, 0.6);
}

TEST(Interpreter, ReferenceModelSplitsPronounInstruction) {
  const TaskInterpreter ti(resources().analyzer.get(), resources().featurizer, reference_models().interpreter);
  const auto in = ti.interpret("find the keys in the bedroom and bring them to me");
  ASSERT_EQ(in.frames.size(), 2u);
  EXPECT_EQ(in.frames[0].task_type, "Searching");
  EXPECT_EQ(in.frames[1].task_type, "Bringing");
  EXPECT_TRUE(in.frames[1].argument("object")->is_pronoun());
  const auto resolved = resolve_coreference(in.frames, {});
  EXPECT_EQ(resolved[1].argument("object")->surface, "the keys");
}

TEST(ModelBundle, SaveLoadRoundTrip) {
  const fs::path dir = scratch_dir("bundle");
  reference_models().save(dir.string());
  const ModelBundle back = ModelBundle::load(dir.string(), resources().featurizer);
  EXPECT_EQ(back.interpreter.task.serialize(), reference_models().interpreter.task.serialize());
  EXPECT_EQ(back.intents.serialize(), reference_models().intents.serialize());
  EXPECT_EQ(back.evidence, reference_models().evidence);
  EXPECT_THROW(ModelBundle::load((dir / "missing").string(), resources().featurizer), ModelNotLoadedError);
  fs::remove_all(dir);
}

TEST(Corpus, JsonRoundTripAndErrors) {
  const auto& corpus = reference_corpus().all;
  const auto back = parse_corpus(format_corpus(corpus));
  ASSERT_EQ(back.size(), corpus.size());
  EXPECT_EQ(format_corpus(back), format_corpus(corpus));
  EXPECT_THROW(parse_corpus("{\"text\": 1}\n"), FormatError);
  EXPECT_THROW(parse_corpus("{\"text\":\"a b\",\"tokens\":[\"a\",\"b\"],\"task_labels\":[\"o\"],\"argument_labels\":[\"o\",\"o\"]}\n"),
               FormatError);
}

TEST(Corpus, ConllImport) {
  const fs::path dir = scratch_dir("conll");
  std::ofstream(dir / "a.conll") << "take\tB-Taking\tO\nthe\tO\tB-object\nmug\tO\tI-object\n\n"
                                 << "go\tMotion\to\nhome\to\tgoal-location\n";
  const auto c = import_conll((dir / "a.conll").string());
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].tokens, (std::vector<std::string>{"take", "the", "mug"}));
  EXPECT_EQ(c[0].task_labels, (std::vector<std::string>{"Taking", "o", "o"}));
  EXPECT_EQ(c[0].argument_labels, (std::vector<std::string>{"o", "object", "object"}));
  EXPECT_EQ(c[1].argument_labels[1], "goal-location");
  fs::remove_all(dir);
}

TEST(Corpus, SplitIsDeterministicAndDisjoint) {
  const auto& corpus = reference_corpus().all;
  std::vector<AnnotatedInstruction> a, b, c, d;
  split_corpus(corpus, 0.75, 7, a, b);
  split_corpus(corpus, 0.75, 7, c, d);
  EXPECT_EQ(format_corpus(a), format_corpus(c));
  EXPECT_EQ(a.size(), 375u);
  EXPECT_EQ(a.size() + b.size(), corpus.size());
}
