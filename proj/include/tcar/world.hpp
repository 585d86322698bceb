#pragma once

#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tcar {

class Analyzer;

enum class EntityKind { Location, Object, Device, Person };

std::string_view to_string(EntityKind kind);

struct Location {
  std::string name;
  std::vector<std::string> synonyms;
  bool operator==(const Location&) const = default;
};

struct WorldObject {
  std::string name;
  std::string location;  // empty while held by the robot
  bool holdable = true;
  std::vector<std::string> synonyms;
  bool operator==(const WorldObject&) const = default;
};

struct Device {
  std::string name;
  std::string location;
  bool on = false;
  std::vector<std::string> synonyms;
  bool operator==(const Device&) const = default;
};

struct Person {
  std::string name;
  std::string location;
  std::vector<std::string> synonyms;
  bool operator==(const Person&) const = default;
};

struct Robot {
  std::string location;
  std::optional<std::string> holding;
  std::vector<std::string> capabilities;  // supported task types
  bool operator==(const Robot&) const = default;
};

// A grounded robot action, e.g. {"pick", {"mug", "table"}}.
struct GroundAction {
  std::string name;
  std::vector<std::string> args;

  std::string to_string() const;  // "pick(mug,table)"
  bool operator==(const GroundAction&) const = default;
};

class WorldModel {
 public:
  std::vector<Location> locations;
  std::vector<std::pair<std::string, std::string>> adjacency;  // undirected
  std::vector<WorldObject> objects;
  std::vector<Device> devices;
  std::vector<Person> people;
  Robot robot;

  const Location* find_location(std::string_view name) const;
  const WorldObject* find_object(std::string_view name) const;
  WorldObject* find_object(std::string_view name);
  const Device* find_device(std::string_view name) const;
  Device* find_device(std::string_view name);
  const Person* find_person(std::string_view name) const;
  bool adjacent(std::string_view a, std::string_view b) const;
  bool can_perform(std::string_view task_type) const;

  // Human-readable entity name: "living-room" -> "living room".
  static std::string display_name(std::string_view name);

  // Throws FormatError naming the broken invariant.
  void check_invariants() const;

  // Applies one action; throws InconsistentEffectError if its preconditions
  // do not hold. The model is unchanged on error.
  void apply(const GroundAction& action);

  bool operator==(const WorldModel&) const = default;
};

// Line-structured world file. Sections: [locations] [adjacency] [objects]
// [devices] [people] [robot] [capabilities] [synonyms]; see README.
WorldModel parse_world(std::string_view text);
std::string format_world(const WorldModel& world);
WorldModel load_world(const std::string& path);
void save_world(const WorldModel& world, const std::string& path);

enum class GroundingStatus { Unique, Ambiguous, Unknown };

struct GroundingResult {
  std::string query;
  std::vector<std::string> matches;  // entity names, sorted
  GroundingStatus status = GroundingStatus::Unknown;
};

// Entity kinds an argument type may refer to.
std::vector<EntityKind> grounding_kinds(std::string_view argument_type);

// Lemma-level match against entity names and synonyms, restricted to the
// kinds allowed for `argument_type`. Determiners are ignored.
GroundingResult ground(const WorldModel& world, const Analyzer& analyzer, std::string_view value,
                       std::string_view argument_type);

struct Inference {
  enum class Kind { Value, NotNeeded, None };
  Kind kind = Kind::None;
  std::string entity;
};

// `object_entity` is the grounded object the missing slot depends on (empty
// when it is not grounded).
Inference infer_argument(const WorldModel& world, std::string_view task_type,
                         std::string_view missing, std::string_view object_entity);

// Applies every action in order; returns the updated model or throws
// InconsistentEffectError (the input is untouched).
WorldModel apply_postconditions(const WorldModel& world, const std::vector<GroundAction>& plan);

// Thread-safe holder: concurrent readers, one atomic writer.
class KnowledgeBase {
 public:
  explicit KnowledgeBase(WorldModel world) : world_(std::move(world)) {}

  WorldModel snapshot() const;
  void apply(const std::vector<GroundAction>& plan);
  void replace(WorldModel world);

 private:
  mutable std::shared_mutex mutex_;
  WorldModel world_;
};

}  // namespace tcar
