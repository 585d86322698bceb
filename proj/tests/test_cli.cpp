#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "json.hpp"
#include "support.hpp"

using namespace tcar;
using namespace tcar::testing;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

// Runs the tool with `args`, stdin from `input`.
CliRun cli(const std::string& args, const std::string& input = "") {
  static const fs::path dir = scratch_dir("cli-io");
  {
    std::ofstream(dir / "stdin.txt", std::ios::binary) << input;
  }
  const std::string cmd = std::string("'") + TCAR_CLI_PATH + "' " + args + " < '" + (dir / "stdin.txt").string() +
                          "' > '" + (dir / "stdout.txt").string() + "' 2> '" + (dir / "stderr.txt").string() + "'";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_text((dir / "stdout.txt").string());
  r.err = read_text((dir / "stderr.txt").string());
  return r;
}

const std::string& models_dir() {
  static const std::string dir = [] {
    const fs::path p = scratch_dir("cli-models");
    reference_models().save(p.string());
    return p.string();
  }();
  return dir;
}

}  // namespace

TEST(Cli, ArgumentErrorsExitTwo) {
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
  EXPECT_EQ(cli("train --out x").code, 2);
  EXPECT_EQ(cli("gen-corpus --n 0").code, 2);
}

TEST(Cli, FileErrorsExitThree) {
  EXPECT_EQ(cli("train --corpus /nonexistent/c.jsonl --out /tmp/x").code, 3);
  EXPECT_EQ(cli("chat --models /nonexistent/models").code, 3);
  EXPECT_EQ(cli("plan --models " + models_dir() + " --world /nonexistent.world 'go to the kitchen'").code, 3);
}

TEST(Cli, MalformedInputExitsFour) {
  const fs::path dir = scratch_dir("cli-bad");
  {
    std::ofstream(dir / "bad.jsonl") << "{\"text\": broken\n";
    std::ofstream(dir / "bad.world") << "[locations]\nhall\n[robot]\nnowhere\n";
  }
  const auto r = cli("train --corpus " + (dir / "bad.jsonl").string() + " --out " + (dir / "m").string());
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("line 1"), std::string::npos) << r.err;
  EXPECT_EQ(cli("plan --models " + models_dir() + " --world " + (dir / "bad.world").string() + " 'go'").code, 4);
  fs::remove_all(dir);
}

TEST(Cli, PlanGroundingAndUnsolvable) {
  const auto ok = cli("plan --models " + models_dir() + " 'turn on the lamp'");
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_EQ(ok.out, "(move hall bedroom)\n(toggle-on lamp bedroom)\n");

  EXPECT_EQ(cli("plan --models " + models_dir() + " 'go to the moon'").code, 5);
  EXPECT_EQ(cli("plan --models " + models_dir() + " 'take it'").code, 5);

  // the desk is cut off from the office
  const fs::path dir = scratch_dir("cli-island");
  std::string world = read_text(resources().data_dir + "/worlds/home.world");
  const auto at = world.find("office desk\n");
  ASSERT_NE(at, std::string::npos);
  world.erase(at, 12);
  {
    std::ofstream(dir / "island.world") << world;
  }
  const auto r = cli("plan --models " + models_dir() + " --world " + (dir / "island.world").string() +
                     " 'bring me the blue pen from the desk'");
  EXPECT_EQ(r.code, 6) << r.out << r.err;
  fs::remove_all(dir);
}

TEST(Cli, EmittedPddlParsesAndSolves) {
  const fs::path dir = scratch_dir("cli-pddl");
  const auto r = cli("plan --models " + models_dir() + " --emit-pddl " + dir.string() + " 'bring me the mug from the table'");
  ASSERT_EQ(r.code, 0) << r.err;
  PlanningProblem pp{parse_domain(read_text((dir / "domain.pddl").string())),
                     parse_problem(read_text((dir / "problem.pddl").string()))};
  EXPECT_EQ(pp.domain, robot_domain());
  const Plan printed = parse_plan(r.out);
  EXPECT_TRUE(validate(printed, pp).ok);
  const auto solved = solve(pp);
  ASSERT_TRUE(solved.solved());
  EXPECT_EQ(solved.plan.cost(), printed.cost());
  fs::remove_all(dir);
}

TEST(Cli, ChatFromScriptedStdin) {
  const auto r = cli("chat --models " + models_dir(), "bring the mug\nto me\n");
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(matches_golden("cli-chat.txt", r.out)) << r.out;
  const auto eof = cli("chat --models " + models_dir(), "");
  EXPECT_EQ(eof.code, 0);
  EXPECT_EQ(eof.out, "robot: Hello, nice to meet you. What should I do?\n");
}

TEST(Cli, GenCorpusTrainEval) {
  const fs::path dir = scratch_dir("cli-pipeline");
  const std::string corpus = (dir / "c.jsonl").string();
  ASSERT_EQ(cli("gen-corpus --n 60 --seed 3 --out " + corpus).code, 0);
  EXPECT_EQ(load_corpus(corpus).size(), 60u);
  const auto stdout_corpus = cli("gen-corpus --n 60 --seed 3");
  EXPECT_EQ(stdout_corpus.out, read_text(corpus));

  const auto t = cli("train --corpus " + corpus + " --epochs 5 --out " + (dir / "m").string());
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(t.out.find("Task type prediction"), std::string::npos) << t.out;
  EXPECT_TRUE(fs::exists(dir / "m" / "task.crf"));

  const auto e = cli("eval --corpus " + corpus + " --models " + models_dir() + " --mode all --report " +
                     (dir / "r.json").string());
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("Baseline-ND"), std::string::npos);
  EXPECT_NE(e.out.find("TCAR"), std::string::npos);
  const auto j = nlohmann::json::parse(read_text((dir / "r.json").string()));
  EXPECT_EQ(j.size(), 3u);
  fs::remove_all(dir);
}

TEST(Cli, ImportColumnFormat) {
  const fs::path dir = scratch_dir("cli-import");
  {
    std::ofstream(dir / "in.conll") << "take\tB-Taking\tO\nthe\tI-Taking\tB-object\nmug\tI-Taking\tI-object\n\n";
  }
  const auto r = cli("import --conll " + (dir / "in.conll").string() + " --out " + (dir / "out.jsonl").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto c = load_corpus((dir / "out.jsonl").string());
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].tokens, (std::vector<std::string>{"take", "the", "mug"}));
  EXPECT_EQ(c[0].argument_labels, (std::vector<std::string>{"o", "object", "object"}));
  EXPECT_EQ(c[0].task_labels[0], "Taking");
  fs::remove_all(dir);
}
