#include <gtest/gtest.h>

#include <thread>

#include "support.hpp"
#include "tcar/error.hpp"

using namespace tcar;
using namespace tcar::testing;

namespace {

const char* kTiny = R"(
[locations]
hall
kitchen
table

[adjacency]
hall kitchen
kitchen table

[objects]
mug table
pen table
pen-2 hall

[devices]
lamp hall off

[people]
user hall

[robot]
at hall
holding none

[synonyms]
pen-2: pen
)";

}  // namespace

TEST(World, FormatParseRoundTrip) {
  const WorldModel w = home_world();
  EXPECT_EQ(parse_world(format_world(w)), w);
  const fs::path dir = scratch_dir("world");
  save_world(w, (dir / "w.world").string());
  EXPECT_EQ(load_world((dir / "w.world").string()), w);
  fs::remove_all(dir);
}

TEST(World, InvariantViolationsAreReported) {
  std::string bad = kTiny;
  bad.replace(bad.find("mug table"), 9, "mug attic");
  EXPECT_THROW(parse_world(bad), FormatError);
  std::string dup = kTiny;
  dup.replace(dup.find("pen-2 hall"), 10, "pen hall");
  EXPECT_THROW(parse_world(dup), FormatError);
  EXPECT_THROW(load_world("/nonexistent.world"), IoError);
}

TEST(World, AdjacencyIsSymmetric) {
  const WorldModel w = parse_world(kTiny);
  EXPECT_TRUE(w.adjacent("hall", "kitchen"));
  EXPECT_TRUE(w.adjacent("kitchen", "hall"));
  EXPECT_FALSE(w.adjacent("hall", "table"));
  EXPECT_EQ(WorldModel::display_name("living-room"), "living room");
}

TEST(Grounding, UniqueAmbiguousUnknown) {
  const WorldModel w = home_world();
  const Analyzer& a = *resources().analyzer;
  auto mug = ground(w, a, "the coffee mug", "object");
  EXPECT_EQ(mug.status, GroundingStatus::Unique);
  EXPECT_EQ(mug.matches, std::vector<std::string>{"mug"});
  auto pen = ground(w, a, "the pen", "object");
  EXPECT_EQ(pen.status, GroundingStatus::Ambiguous);
  EXPECT_EQ(pen.matches, (std::vector<std::string>{"blue-pen", "red-pen"}));
  EXPECT_EQ(ground(w, a, "the red pen", "object").matches, std::vector<std::string>{"red-pen"});
  EXPECT_EQ(ground(w, a, "the spaceship", "object").status, GroundingStatus::Unknown);
  // kind restriction: the display is a device, not an object
  EXPECT_EQ(ground(w, a, "the tv", "object").status, GroundingStatus::Unknown);
  EXPECT_EQ(ground(w, a, "the tv", "device").matches, std::vector<std::string>{"display"});
  EXPECT_EQ(ground(w, a, "me", "goal-location").matches, std::vector<std::string>{"user"});
}

TEST(Inference, SourceFromObjectLocation) {
  WorldModel w = home_world();
  auto inf = infer_argument(w, "Taking", "source-location", "book");
  EXPECT_EQ(inf.kind, Inference::Kind::Value);
  EXPECT_EQ(inf.entity, "shelf");
  EXPECT_EQ(infer_argument(w, "Bringing", "goal-location", "book").kind, Inference::Kind::None);
  w.robot.holding = "book";
  w.find_object("book")->location.clear();
  EXPECT_EQ(infer_argument(w, "Taking", "source-location", "book").kind, Inference::Kind::NotNeeded);
}

TEST(WorldApply, EffectsAndPreconditions) {
  const WorldModel w = parse_world(kTiny);
  const std::vector<GroundAction> plan = {
      {"move", {"hall", "kitchen"}}, {"move", {"kitchen", "table"}}, {"pick", {"mug", "table"}},
      {"move", {"table", "kitchen"}}, {"place", {"mug", "kitchen"}}};
  const WorldModel after = apply_postconditions(w, plan);
  EXPECT_EQ(after.robot.location, "kitchen");
  EXPECT_EQ(after.find_object("mug")->location, "kitchen");
  EXPECT_FALSE(after.robot.holding);

  WorldModel copy = w;
  EXPECT_THROW(copy.apply({"pick", {"mug", "table"}}), InconsistentEffectError);  // robot is in the hall
  EXPECT_EQ(copy, w);
  EXPECT_THROW(apply_postconditions(w, {{"move", {"hall", "table"}}}), InconsistentEffectError);
  EXPECT_THROW(apply_postconditions(w, {{"toggle-off", {"lamp", "hall"}}}), InconsistentEffectError);
  const WorldModel lit = apply_postconditions(w, {{"toggle-on", {"lamp", "hall"}}});
  EXPECT_TRUE(lit.find_device("lamp")->on);
}

TEST(KnowledgeBase, ConcurrentReadersSeeWholeUpdates) {
  KnowledgeBase kb(parse_world(kTiny));
  const std::vector<GroundAction> on = {{"toggle-on", {"lamp", "hall"}}};
  const std::vector<GroundAction> off = {{"toggle-off", {"lamp", "hall"}}};
  std::atomic<bool> done{false};
  std::atomic<int> bad{0};
  std::thread reader([&] {
    while (!done) {
      const WorldModel w = kb.snapshot();
      if (w.robot.location != "hall") ++bad;
    }
  });
  for (int i = 0; i < 200; ++i) kb.apply(i % 2 ? off : on);
  done = true;
  reader.join();
  EXPECT_EQ(bad, 0);
  EXPECT_FALSE(kb.snapshot().find_device("lamp")->on);
  EXPECT_THROW(kb.apply(off), InconsistentEffectError);
}
