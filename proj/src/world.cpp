#include "tcar/world.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include "tcar/error.hpp"
#include "tcar/text_features.hpp"

namespace tcar {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::string join(const std::vector<std::string>& xs, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += sep;
    out += xs[i];
  }
  return out;
}

[[noreturn]] void fail_line(std::size_t line, const std::string& msg) {
  throw FormatError("world file line " + std::to_string(line) + ": " + msg);
}

[[noreturn]] void inconsistent(const GroundAction& a, const std::string& why) {
  throw InconsistentEffectError("cannot apply " + a.to_string() + ": " + why);
}

bool is_determiner(const Token& t) {
  return t.pos == Pos::Det || t.pos == Pos::Other || t.pos == Pos::Part;
}

std::vector<std::string> content_lemmas(const Analyzer& analyzer, std::string_view text) {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  for (const auto& t : analyzer.analyze(text)) {
    if (is_determiner(t)) continue;
    out.push_back(t.lemma);
  }
  return out;
}

}  // namespace

std::string_view to_string(EntityKind kind) {
  switch (kind) {
    case EntityKind::Location: return "location";
    case EntityKind::Object: return "object";
    case EntityKind::Device: return "device";
    case EntityKind::Person: return "person";
  }
  return "?";
}

std::string GroundAction::to_string() const { return name + "(" + join(args, ",") + ")"; }

// ---------------------------------------------------------------------------
// WorldModel

const Location* WorldModel::find_location(std::string_view name) const {
  for (const auto& l : locations) {
    if (l.name == name) return &l;
  }
  return nullptr;
}

const WorldObject* WorldModel::find_object(std::string_view name) const {
  for (const auto& o : objects) {
    if (o.name == name) return &o;
  }
  return nullptr;
}

WorldObject* WorldModel::find_object(std::string_view name) {
  for (auto& o : objects) {
    if (o.name == name) return &o;
  }
  return nullptr;
}

const Device* WorldModel::find_device(std::string_view name) const {
  for (const auto& d : devices) {
    if (d.name == name) return &d;
  }
  return nullptr;
}

Device* WorldModel::find_device(std::string_view name) {
  for (auto& d : devices) {
    if (d.name == name) return &d;
  }
  return nullptr;
}

const Person* WorldModel::find_person(std::string_view name) const {
  for (const auto& p : people) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

bool WorldModel::adjacent(std::string_view a, std::string_view b) const {
  return std::any_of(adjacency.begin(), adjacency.end(), [&](const auto& e) {
    return (e.first == a && e.second == b) || (e.first == b && e.second == a);
  });
}

bool WorldModel::can_perform(std::string_view task_type) const {
  return std::find(robot.capabilities.begin(), robot.capabilities.end(), task_type) !=
         robot.capabilities.end();
}

std::string WorldModel::display_name(std::string_view name) {
  std::string out(name);
  std::replace(out.begin(), out.end(), '-', ' ');
  return out;
}

void WorldModel::check_invariants() const {
  std::set<std::string> names;
  auto unique = [&](const std::string& n) {
    if (!names.insert(n).second) throw FormatError("duplicate entity name: " + n);
  };
  for (const auto& l : locations) unique(l.name);
  for (const auto& o : objects) unique(o.name);
  for (const auto& d : devices) unique(d.name);
  for (const auto& p : people) unique(p.name);

  for (const auto& [a, b] : adjacency) {
    if (!find_location(a) || !find_location(b)) throw FormatError("adjacency references unknown location");
  }
  if (!find_location(robot.location)) throw FormatError("robot location is not a known location");
  for (const auto& o : objects) {
    const bool held = robot.holding && *robot.holding == o.name;
    if (held == !o.location.empty()) {
      throw FormatError("object " + o.name + " must be at exactly one location or in the gripper");
    }
    if (!held && !find_location(o.location)) throw FormatError("object " + o.name + " at unknown location");
  }
  if (robot.holding && !find_object(*robot.holding)) throw FormatError("robot holds unknown object");
  for (const auto& d : devices) {
    if (!find_location(d.location)) throw FormatError("device " + d.name + " at unknown location");
  }
  for (const auto& p : people) {
    if (!find_location(p.location)) throw FormatError("person " + p.name + " at unknown location");
  }
}

void WorldModel::apply(const GroundAction& a) {
  auto arity = [&](std::size_t n) {
    if (a.args.size() != n) inconsistent(a, "expected " + std::to_string(n) + " arguments");
  };
  if (a.name == "move") {
    arity(2);
    if (robot.location != a.args[0]) inconsistent(a, "robot is not at " + a.args[0]);
    if (!adjacent(a.args[0], a.args[1])) inconsistent(a, "locations are not adjacent");
    robot.location = a.args[1];
  } else if (a.name == "pick") {
    arity(2);
    WorldObject* o = find_object(a.args[0]);
    if (!o) inconsistent(a, "unknown object");
    if (robot.location != a.args[1]) inconsistent(a, "robot is not at " + a.args[1]);
    if (o->location != a.args[1]) inconsistent(a, "object is not at " + a.args[1]);
    if (!o->holdable) inconsistent(a, "object cannot be held");
    if (robot.holding) inconsistent(a, "gripper is not empty");
    robot.holding = o->name;
    o->location.clear();
  } else if (a.name == "place") {
    arity(2);
    WorldObject* o = find_object(a.args[0]);
    if (!o) inconsistent(a, "unknown object");
    if (robot.location != a.args[1]) inconsistent(a, "robot is not at " + a.args[1]);
    if (!robot.holding || *robot.holding != o->name) inconsistent(a, "robot is not holding the object");
    o->location = a.args[1];
    robot.holding.reset();
  } else if (a.name == "toggle-on" || a.name == "toggle-off") {
    arity(2);
    Device* d = find_device(a.args[0]);
    if (!d) inconsistent(a, "unknown device");
    if (d->location != a.args[1] || robot.location != a.args[1]) inconsistent(a, "robot is not at the device");
    const bool target = a.name == "toggle-on";
    if (d->on == target) inconsistent(a, std::string("device is already ") + (target ? "on" : "off"));
    d->on = target;
  } else {
    inconsistent(a, "unknown action");
  }
}

WorldModel apply_postconditions(const WorldModel& world, const std::vector<GroundAction>& plan) {
  WorldModel out = world;
  for (const auto& a : plan) out.apply(a);
  return out;
}

// ---------------------------------------------------------------------------
// World file

WorldModel parse_world(std::string_view text) {
  WorldModel w;
  std::map<std::string, std::vector<std::string>> synonyms;
  std::vector<std::string> synonym_order;
  bool have_robot_at = false;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;

  while (std::getline(in, raw)) {
    ++lineno;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail_line(lineno, "unterminated section header");
      section = line.substr(1, line.size() - 2);
      static const std::set<std::string> known = {"locations", "adjacency", "objects",      "devices",
                                                  "people",    "robot",     "capabilities", "synonyms"};
      if (!known.count(section)) fail_line(lineno, "unknown section [" + section + "]");
      continue;
    }
    const auto f = split_ws(line);
    if (section == "locations") {
      if (f.size() != 1) fail_line(lineno, "expected one location name");
      w.locations.push_back({f[0], {}});
    } else if (section == "adjacency") {
      if (f.size() != 2) fail_line(lineno, "expected two location names");
      w.adjacency.emplace_back(f[0], f[1]);
    } else if (section == "objects") {
      if (f.size() < 2 || f.size() > 3 || (f.size() == 3 && f[2] != "fixed")) {
        fail_line(lineno, "expected: <name> <location|gripper> [fixed]");
      }
      WorldObject o{f[0], f[1] == "gripper" ? "" : f[1], f.size() < 3, {}};
      if (f[1] == "gripper") w.robot.holding = o.name;
      w.objects.push_back(std::move(o));
    } else if (section == "devices") {
      if (f.size() != 3 || (f[2] != "on" && f[2] != "off")) fail_line(lineno, "expected: <name> <location> on|off");
      w.devices.push_back({f[0], f[1], f[2] == "on", {}});
    } else if (section == "people") {
      if (f.size() != 2) fail_line(lineno, "expected: <name> <location>");
      w.people.push_back({f[0], f[1], {}});
    } else if (section == "robot") {
      if (f.size() != 2) fail_line(lineno, "expected: at <location> | holding <object|none>");
      if (f[0] == "at") {
        w.robot.location = f[1];
        have_robot_at = true;
      } else if (f[0] == "holding") {
        if (f[1] != "none") w.robot.holding = f[1];
      } else {
        fail_line(lineno, "unknown robot attribute " + f[0]);
      }
    } else if (section == "capabilities") {
      for (const auto& c : f) w.robot.capabilities.push_back(c);
    } else if (section == "synonyms") {
      const auto colon = line.find(':');
      if (colon == std::string::npos) fail_line(lineno, "expected: <entity>: synonym, synonym");
      const std::string name = trim(line.substr(0, colon));
      std::istringstream rest(line.substr(colon + 1));
      std::string syn;
      if (!synonyms.count(name)) synonym_order.push_back(name);
      while (std::getline(rest, syn, ',')) {
        if (auto s = trim(syn); !s.empty()) synonyms[name].push_back(s);
      }
    } else {
      fail_line(lineno, "content outside of a section");
    }
  }
  if (!have_robot_at) throw FormatError("world file has no robot location");

  for (const auto& name : synonym_order) {
    auto& syn = synonyms[name];
    bool found = false;
    auto assign = [&](auto& list) {
      for (auto& e : list) {
        if (e.name == name) {
          e.synonyms = syn;
          found = true;
        }
      }
    };
    assign(w.locations);
    assign(w.objects);
    assign(w.devices);
    assign(w.people);
    if (!found) throw FormatError("synonyms for unknown entity " + name);
  }
  w.check_invariants();
  return w;
}

std::string format_world(const WorldModel& w) {
  std::ostringstream out;
  out << "[locations]\n";
  for (const auto& l : w.locations) out << l.name << "\n";
  out << "\n[adjacency]\n";
  for (const auto& [a, b] : w.adjacency) out << a << " " << b << "\n";
  out << "\n[objects]\n";
  for (const auto& o : w.objects) {
    out << o.name << " " << (o.location.empty() ? "gripper" : o.location) << (o.holdable ? "" : " fixed") << "\n";
  }
  out << "\n[devices]\n";
  for (const auto& d : w.devices) out << d.name << " " << d.location << " " << (d.on ? "on" : "off") << "\n";
  if (!w.people.empty()) {
    out << "\n[people]\n";
    for (const auto& p : w.people) out << p.name << " " << p.location << "\n";
  }
  out << "\n[robot]\nat " << w.robot.location << "\nholding " << w.robot.holding.value_or("none") << "\n";
  out << "\n[capabilities]\n" << join(w.robot.capabilities, " ") << "\n";
  out << "\n[synonyms]\n";
  auto syn = [&](const auto& list) {
    for (const auto& e : list) {
      if (!e.synonyms.empty()) out << e.name << ": " << join(e.synonyms, ", ") << "\n";
    }
  };
  syn(w.locations);
  syn(w.objects);
  syn(w.devices);
  syn(w.people);
  return out.str();
}

WorldModel load_world(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open world file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_world(ss.str());
}

void save_world(const WorldModel& world, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write world file: " + path);
  out << format_world(world);
}

// ---------------------------------------------------------------------------
// Grounding

std::vector<EntityKind> grounding_kinds(std::string_view t) {
  if (t == "object") return {EntityKind::Object};
  if (t == "device") return {EntityKind::Device};
  if (t == "person") return {EntityKind::Person};
  if (t == "goal-location") return {EntityKind::Location, EntityKind::Person};
  if (t == "source-location" || t == "search-area") return {EntityKind::Location};
  return {};
}

GroundingResult ground(const WorldModel& world, const Analyzer& analyzer, std::string_view value,
                       std::string_view argument_type) {
  GroundingResult r;
  r.query = std::string(value);
  const auto query = content_lemmas(analyzer, value);
  if (query.empty()) return r;

  auto matches = [&](const std::string& name, const std::vector<std::string>& synonyms) {
    std::vector<std::string> phrases = {WorldModel::display_name(name)};
    phrases.insert(phrases.end(), synonyms.begin(), synonyms.end());
    for (const auto& ph : phrases) {
      const auto words = content_lemmas(analyzer, ph);
      if (words.empty()) continue;
      if (words == query) return true;
      if (words.back() != query.back()) continue;
      const bool subset = std::all_of(query.begin(), query.end(), [&](const std::string& q) {
        return std::find(words.begin(), words.end(), q) != words.end();
      });
      if (subset) return true;
    }
    return false;
  };

  for (EntityKind kind : grounding_kinds(argument_type)) {
    switch (kind) {
      case EntityKind::Location:
        for (const auto& e : world.locations) {
          if (matches(e.name, e.synonyms)) r.matches.push_back(e.name);
        }
        break;
      case EntityKind::Object:
        for (const auto& e : world.objects) {
          if (matches(e.name, e.synonyms)) r.matches.push_back(e.name);
        }
        break;
      case EntityKind::Device:
        for (const auto& e : world.devices) {
          if (matches(e.name, e.synonyms)) r.matches.push_back(e.name);
        }
        break;
      case EntityKind::Person:
        for (const auto& e : world.people) {
          if (matches(e.name, e.synonyms)) r.matches.push_back(e.name);
        }
        break;
    }
  }
  std::sort(r.matches.begin(), r.matches.end());
  r.matches.erase(std::unique(r.matches.begin(), r.matches.end()), r.matches.end());
  r.status = r.matches.empty()       ? GroundingStatus::Unknown
             : r.matches.size() == 1 ? GroundingStatus::Unique
                                     : GroundingStatus::Ambiguous;
  return r;
}

Inference infer_argument(const WorldModel& world, std::string_view /*task_type*/, std::string_view missing,
                         std::string_view object_entity) {
  Inference inf;
  if (missing != "source-location" || object_entity.empty()) return inf;
  const WorldObject* o = world.find_object(object_entity);
  if (!o) return inf;
  if (world.robot.holding && *world.robot.holding == o->name) {
    inf.kind = Inference::Kind::NotNeeded;
    return inf;
  }
  inf.kind = Inference::Kind::Value;
  inf.entity = o->location;
  return inf;
}

// ---------------------------------------------------------------------------
// KnowledgeBase

WorldModel KnowledgeBase::snapshot() const {
  std::shared_lock lock(mutex_);
  return world_;
}

void KnowledgeBase::apply(const std::vector<GroundAction>& plan) {
  std::unique_lock lock(mutex_);
  world_ = apply_postconditions(world_, plan);
}

void KnowledgeBase::replace(WorldModel world) {
  std::unique_lock lock(mutex_);
  world_ = std::move(world);
}

}  // namespace tcar
