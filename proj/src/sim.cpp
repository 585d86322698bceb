#include "tcar/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "tcar/error.hpp"
#include "tcar/text_features.hpp"

namespace tcar {

std::string_view to_string(SimEventKind kind) {
  switch (kind) {
    case SimEventKind::Move: return "move";
    case SimEventKind::Pick: return "pick";
    case SimEventKind::Place: return "place";
    case SimEventKind::Toggle: return "toggle";
    case SimEventKind::Speak: return "speak";
    case SimEventKind::Success: return "success";
  }
  return "?";
}

SimEventKind parse_sim_event_kind(std::string_view name) {
  for (auto k : {SimEventKind::Move, SimEventKind::Pick, SimEventKind::Place, SimEventKind::Toggle,
                 SimEventKind::Speak, SimEventKind::Success}) {
    if (to_string(k) == name) return k;
  }
  throw FormatError("unknown event kind '" + std::string(name) + "'");
}

Execution execute(const std::vector<GroundAction>& plan, const WorldModel& world, std::uint64_t first_seq) {
  Execution ex;
  ex.world = apply_postconditions(world, plan);
  std::uint64_t seq = first_seq;
  WorldModel cur = world;
  for (const auto& a : plan) {
    SimEvent e;
    e.seq = seq++;
    if (a.name == "move") {
      e.kind = SimEventKind::Move;
    } else if (a.name == "pick") {
      e.kind = SimEventKind::Pick;
    } else if (a.name == "place") {
      e.kind = SimEventKind::Place;
    } else {
      e.kind = SimEventKind::Toggle;
    }
    if (e.kind == SimEventKind::Toggle) {
      e.args = {a.args[0], a.name == "toggle-on" ? "on" : "off", a.args[1]};
    } else {
      e.args = a.args;
    }
    cur.apply(a);
    ex.events.push_back(std::move(e));
  }
  ex.events.push_back({seq, SimEventKind::Success, {}});
  return ex;
}

WorldModel fold_events(const WorldModel& world, const std::vector<SimEvent>& events) {
  WorldModel w = world;
  for (const auto& e : events) {
    switch (e.kind) {
      case SimEventKind::Move:
      case SimEventKind::Pick:
      case SimEventKind::Place:
        w.apply({std::string(to_string(e.kind)), e.args});
        break;
      case SimEventKind::Toggle:
        if (e.args.size() != 3) throw FormatError("toggle event needs device, state and location");
        w.apply({e.args[1] == "on" ? "toggle-on" : "toggle-off", {e.args[0], e.args[2]}});
        break;
      case SimEventKind::Speak:
      case SimEventKind::Success:
        break;
    }
  }
  return w;
}

// ---------------------------------------------------------------------------
// Generator

namespace {

// Small deterministic helpers; std distributions differ between standard
// libraries and the corpus must not.
struct Rng {
  std::mt19937_64 engine;
  explicit Rng(std::uint64_t seed) : engine(seed) {}
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine() % n); }
  double unit() { return static_cast<double>(engine() >> 11) * 0x1.0p-53; }
  bool chance(double p) { return unit() < p; }
  template <class T>
  const T& pick(const std::vector<T>& v) {
    return v[below(v.size())];
  }
};

struct Phrase {
  std::string entity;
  std::string words;  // without determiner
};

struct Vocabulary {
  std::vector<Phrase> objects, locations, devices, rooms, surfaces;
  std::vector<Phrase> me;
};

std::vector<std::string> phrases_of(const std::string& name, const std::vector<std::string>& synonyms) {
  std::vector<std::string> out = {WorldModel::display_name(name)};
  for (const auto& s : synonyms) out.push_back(s);
  return out;
}

// Surfaces naming exactly one entity across the whole world.
Vocabulary vocabulary(const WorldModel& w) {
  std::map<std::string, std::set<std::string>> owners;
  auto note = [&](const std::string& name, const std::vector<std::string>& syn) {
    for (const auto& p : phrases_of(name, syn)) owners[p].insert(name);
  };
  for (const auto& l : w.locations) note(l.name, l.synonyms);
  for (const auto& o : w.objects) note(o.name, o.synonyms);
  for (const auto& d : w.devices) note(d.name, d.synonyms);
  for (const auto& p : w.people) note(p.name, p.synonyms);

  Vocabulary v;
  auto add = [&](std::vector<Phrase>& into, const std::string& name, const std::vector<std::string>& syn) {
    for (const auto& p : phrases_of(name, syn)) {
      if (owners[p].size() == 1) into.push_back({name, p});
    }
  };
  std::set<std::string> furniture;
  for (const auto& o : w.objects) {
    if (!o.location.empty()) furniture.insert(o.location);
  }
  for (const auto& l : w.locations) {
    add(v.locations, l.name, l.synonyms);
    std::size_t degree = 0;
    for (const auto& [a, b] : w.adjacency) degree += (a == l.name) + (b == l.name);
    if (furniture.count(l.name)) {
      add(v.surfaces, l.name, l.synonyms);
    } else if (degree >= 2 || l.name == w.robot.location) {
      add(v.rooms, l.name, l.synonyms);
    }
  }
  for (const auto& o : w.objects) {
    if (o.holdable) add(v.objects, o.name, o.synonyms);
  }
  for (const auto& d : w.devices) add(v.devices, d.name, d.synonyms);
  for (const auto& p : w.people) {
    for (const auto& s : p.synonyms) {
      if (s == "me" && owners[s].size() == 1) v.me.push_back({p.name, s});
    }
  }
  return v;
}

class Builder {
 public:
  void word(const std::string& text, const std::string& task = kOutside, const std::string& arg = kOutside) {
    std::istringstream in(text);
    for (std::string t; in >> t;) {
      rec_.tokens.push_back(t);
      rec_.task_labels.push_back(task);
      rec_.argument_labels.push_back(arg);
    }
  }
  void verb(const std::string& text, const std::string& task) { word(text, task); }
  void arg(const std::string& text, const std::string& type) { word(text, kOutside, type); }
  bool empty() const { return rec_.tokens.empty(); }

  AnnotatedInstruction finish(std::vector<GoldFrame> frames, std::string category, bool capitalize) {
    rec_.frames = std::move(frames);
    rec_.category = std::move(category);
    for (std::size_t i = 0; i < rec_.tokens.size(); ++i) {
      if (i && rec_.tokens[i] != ",") rec_.text += ' ';
      rec_.text += rec_.tokens[i];
    }
    if (capitalize && !rec_.text.empty()) {
      rec_.text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(rec_.text[0])));
      rec_.tokens[0][0] = rec_.text[0];
    }
    return std::move(rec_);
  }

 private:
  AnnotatedInstruction rec_;
};

struct Generator {
  const WorldModel& world;
  Vocabulary vocab;
  Rng rng;

  std::string det() { return rng.chance(0.85) ? "the" : "my"; }

  GoldSlot slot(const std::string& type, const Phrase& p, bool mentioned, const std::string& text) {
    return {type, p.entity, text, mentioned};
  }
  // Canonical short answer for an unmentioned slot.
  static std::string answer_text(const Phrase& p, bool is_person) { return is_person ? p.words : "the " + p.words; }

  void np(Builder& b, const Phrase& p, const std::string& type, bool object_det = false) {
    if (!object_det && rng.chance(0.15)) {
      b.arg(p.words, type);  // "from table"
      return;
    }
    b.arg((object_det ? det() : std::string("the")) + " " + p.words, type);
  }

  // "that is on the shelf": the nearest verb no longer names the task.
  bool relative(Builder& b, const Phrase& obj, const char* prep, const Phrase& where, const std::string& type) {
    if (!rng.chance(0.2)) return false;
    const bool plural = !obj.words.empty() && obj.words.back() == 's';
    b.word(rng.chance(0.7) ? "that" : "which");
    b.word(plural ? "are" : "is");
    b.word(prep);
    np(b, where, type);
    return true;
  }

  void politeness(Builder& b) {
    const double r = rng.unit();
    if (r < 0.12) {
      b.word("please");
    } else if (r < 0.2) {
      b.word("can you");
    } else if (r < 0.26) {
      b.word("could you");
    }
  }

  Phrase source_of(const std::string& object) {
    const WorldObject* o = world.find_object(object);
    for (const auto& p : vocab.locations) {
      if (p.entity == o->location) return p;
    }
    return {o->location, WorldModel::display_name(o->location)};
  }
  const Phrase& goal_for(const std::string& object) {
    const WorldObject* o = world.find_object(object);
    for (int tries = 0; tries < 20; ++tries) {
      const Phrase& g = rng.pick(vocab.surfaces);
      if (g.entity != o->location) return g;
    }
    return rng.pick(vocab.surfaces);
  }

  // Each clause appends its words and returns its gold frame. `missing`
  // drops one required slot; `object_pronoun` refers back with "it".
  GoldFrame motion(Builder& b, bool /*missing*/) {
    GoldFrame f{"Motion", {}};
    if (!vocab.me.empty() && rng.chance(0.15)) {
      b.verb("come", "Motion");
      b.word("to");
      b.arg(vocab.me.front().words, "person");
      f.slots.push_back(slot("person", vocab.me.front(), true, vocab.me.front().words));
      return f;
    }
    static const std::vector<std::string> verbs = {"go", "move", "walk", "head", "navigate", "drive"};
    const Phrase& g = rng.chance(0.5) ? rng.pick(vocab.rooms) : rng.pick(vocab.locations);
    b.verb(rng.pick(verbs), "Motion");
    b.word("to");
    np(b, g, "goal-location");
    f.slots.push_back(slot("goal-location", g, true, "the " + g.words));
    return f;
  }

  GoldFrame taking(Builder& b, bool missing, const Phrase* fixed_object = nullptr, bool pronoun = false) {
    GoldFrame f{"Taking", {}};
    const Phrase obj = fixed_object ? *fixed_object : rng.pick(vocab.objects);
    const Phrase src = source_of(obj.entity);
    // "from the shelf, grab the book"
    const bool fronted = !missing && !pronoun && b.empty() && rng.chance(0.15);
    if (fronted) {
      b.word("from");
      np(b, src, "source-location");
      b.word(",");
    }
    switch (rng.below(4)) {
      case 0: b.verb("take", "Taking"); break;
      case 1: b.verb("grab", "Taking"); break;
      case 2: b.verb("pick up", "Taking"); break;
      default: b.verb("get", "Taking"); break;
    }
    if (pronoun) {
      b.arg("it", "object");
      f.slots.push_back(slot("object", obj, true, "it"));
    } else {
      np(b, obj, "object", true);
      f.slots.push_back(slot("object", obj, true, obj.words));
    }
    if (missing) {
      f.slots.push_back(slot("source-location", src, false, answer_text(src, false)));
    } else {
      if (!fronted && !relative(b, obj, "on", src, "source-location")) {
        b.word(rng.chance(0.3) ? "on" : "from");
        np(b, src, "source-location");
      }
      f.slots.push_back(slot("source-location", src, true, "the " + src.words));
    }
    return f;
  }

  // `pronoun` when the object was introduced by an earlier clause.
  GoldFrame bringing(Builder& b, bool missing, const Phrase* pronoun_for = nullptr, bool ambiguous_verb = false) {
    GoldFrame f{"Bringing", {}};
    const Phrase obj = pronoun_for ? *pronoun_for : rng.pick(vocab.objects);
    const Phrase src = source_of(obj.entity);
    const bool to_me = !vocab.me.empty() && rng.chance(0.5);
    const Phrase goal = to_me ? vocab.me.front() : goal_for(obj.entity);
    const std::string goal_type = to_me ? "person" : "goal-location";
    // source mention only when the object has not been handled already
    const bool with_source = !pronoun_for && !missing && !(ambiguous_verb && rng.chance(0.5));
    bool drop_goal = false, drop_source = !with_source;
    if (missing && !pronoun_for) {
      drop_goal = rng.chance(0.6);
      drop_source = true;
    }

    static const std::vector<std::string> verbs = {"bring", "carry", "deliver", "fetch"};
    const std::string v = ambiguous_verb ? (rng.chance(0.5) ? "take" : "get") : rng.pick(verbs);
    b.verb(v, "Bringing");
    const bool me_first = to_me && !drop_goal && !pronoun_for && v != "carry" && v != "deliver" && rng.chance(0.6);
    if (me_first) b.arg(goal.words, "person");
    if (pronoun_for) {
      b.arg("it", "object");
      f.slots.push_back(slot("object", obj, true, "it"));
    } else {
      np(b, obj, "object", true);
      f.slots.push_back(slot("object", obj, true, obj.words));
    }
    if (!drop_source) {
      if (!relative(b, obj, "on", src, "source-location")) {
        b.word(rng.chance(0.3) ? "on" : "from");
        np(b, src, "source-location");
      }
      f.slots.push_back(slot("source-location", src, true, "the " + src.words));
    } else if (!pronoun_for) {
      f.slots.push_back(slot("source-location", src, false, answer_text(src, false)));
    }
    if (drop_goal) {
      f.slots.push_back(slot(goal_type, goal, false, answer_text(goal, to_me)));
    } else if (!me_first) {
      b.word("to");
      if (to_me) {
        b.arg(goal.words, "person");
      } else {
        np(b, goal, "goal-location");
      }
      f.slots.push_back(slot(goal_type, goal, true, to_me ? goal.words : "the " + goal.words));
    } else {
      f.slots.push_back(slot(goal_type, goal, true, goal.words));
    }
    return f;
  }

  GoldFrame placing(Builder& b, bool missing, const Phrase* pronoun_for = nullptr) {
    GoldFrame f{"Placing", {}};
    const Phrase obj = pronoun_for ? *pronoun_for : rng.pick(vocab.objects);
    const Phrase goal = goal_for(obj.entity);
    static const std::vector<std::string> verbs = {"put", "place", "set", "leave", "drop"};
    b.verb(rng.pick(verbs), "Placing");
    if (pronoun_for) {
      b.arg("it", "object");
      f.slots.push_back(slot("object", obj, true, "it"));
    } else {
      np(b, obj, "object", true);
      f.slots.push_back(slot("object", obj, true, obj.words));
    }
    if (missing) {
      f.slots.push_back(slot("goal-location", goal, false, answer_text(goal, false)));
    } else {
      b.word(rng.chance(0.7) ? "on" : "in");
      np(b, goal, "goal-location");
      f.slots.push_back(slot("goal-location", goal, true, "the " + goal.words));
    }
    return f;
  }

  GoldFrame change_state(Builder& b, bool missing, bool ambiguous_verb = false) {
    GoldFrame f{"Change-state", {}};
    const Phrase& dev = rng.pick(vocab.devices);
    const Device* d = world.find_device(dev.entity);
    const std::string state = ambiguous_verb ? "on" : (d && d->on ? "off" : (rng.chance(0.8) ? "on" : "off"));
    const Phrase state_phrase{state, state};
    std::string v;
    if (ambiguous_verb) {
      v = "put";
    } else {
      static const std::vector<std::string> verbs = {"turn", "switch", "power"};
      v = rng.pick(verbs);
    }
    b.verb(v, "Change-state");
    if (missing) {
      b.arg(state, "intended-state");
      f.slots.push_back(slot("intended-state", state_phrase, true, state));
      f.slots.push_back(slot("device", dev, false, answer_text(dev, false)));
      return f;
    }
    if (!ambiguous_verb && rng.chance(0.3)) {
      np(b, dev, "device");
      b.arg(state, "intended-state");
    } else {
      b.arg(state, "intended-state");
      np(b, dev, "device");
    }
    f.slots.push_back(slot("intended-state", state_phrase, true, state));
    f.slots.push_back(slot("device", dev, true, "the " + dev.words));
    return f;
  }

  GoldFrame searching(Builder& b, bool missing, Phrase* found = nullptr) {
    GoldFrame f{"Searching", {}};
    const Phrase obj = rng.pick(vocab.objects);
    if (found) *found = obj;
    const WorldObject* o = world.find_object(obj.entity);
    // search the room the object is in, or the spot itself
    Phrase area = source_of(obj.entity);
    for (const auto& [a, c] : world.adjacency) {
      for (const auto& r : vocab.rooms) {
        if (rng.chance(0.5) && ((a == r.entity && c == o->location) || (c == r.entity && a == o->location))) area = r;
      }
    }
    const bool fronted = !missing && b.empty() && rng.chance(0.15);
    if (fronted) {
      b.word("in");
      np(b, area, "search-area");
      b.word(",");
    }
    switch (rng.below(3)) {
      case 0:
        b.verb("look", "Searching");
        b.word("for");
        break;
      case 1: b.verb("find", "Searching"); break;
      default: b.verb("search", "Searching"); b.word("for"); break;
    }
    np(b, obj, "object", true);
    f.slots.push_back(slot("object", obj, true, obj.words));
    if (missing) {
      f.slots.push_back(slot("search-area", area, false, answer_text(area, false)));
    } else {
      if (!fronted && !relative(b, obj, "in", area, "search-area")) {
        b.word("in");
        np(b, area, "search-area");
      }
      f.slots.push_back(slot("search-area", area, true, "the " + area.words));
    }
    return f;
  }

  GoldFrame single(Builder& b, const std::string& task, bool missing) {
    if (task == "Motion") return motion(b, missing);
    if (task == "Taking") return taking(b, missing);
    if (task == "Bringing") return bringing(b, missing);
    if (task == "Placing") return placing(b, missing);
    if (task == "Change-state") return change_state(b, missing);
    return searching(b, missing);
  }

  AnnotatedInstruction record(const std::string& category) {
    Builder b;
    std::vector<GoldFrame> frames;
    politeness(b);
    if (category == kCategoryMissing) {
      static const std::vector<std::string> tasks = {"Taking", "Bringing", "Placing", "Change-state", "Searching"};
      frames.push_back(single(b, rng.pick(tasks), true));
    } else if (category == kCategoryAmbiguous) {
      if (rng.chance(0.5)) {
        frames.push_back(change_state(b, false, true));
      } else {
        frames.push_back(bringing(b, false, nullptr, true));
      }
    } else if (category == kCategoryPronoun) {
      Phrase obj;
      switch (rng.below(4)) {
        case 3:
          frames.push_back(searching(b, false, &obj));
          b.word("and");
          frames.push_back(taking(b, true, &obj, true));
          break;
        case 0:
          obj = rng.pick(vocab.objects);
          frames.push_back(taking(b, false, &obj));
          b.word("and");
          frames.push_back(bringing(b, false, &obj));
          break;
        case 1:
          obj = rng.pick(vocab.objects);
          frames.push_back(taking(b, false, &obj));
          b.word(rng.chance(0.5) ? "and" : "and then");
          frames.push_back(placing(b, false, &obj));
          break;
        default:
          frames.push_back(searching(b, false, &obj));
          b.word("and");
          frames.push_back(bringing(b, false, &obj));
          break;
      }
    } else if (category == kCategoryMulti) {
      frames.push_back(motion(b, false));
      b.word("and");
      frames.push_back(rng.chance(0.5) ? change_state(b, false) : taking(b, false));
    } else {
      frames.push_back(single(b, rng.pick(kTaskTypes), false));
    }
    if (rng.chance(0.08)) b.word("please");
    return b.finish(std::move(frames), category, rng.chance(0.3));
  }
};

}  // namespace

std::vector<AnnotatedInstruction> generate_corpus(const WorldModel& world, std::size_t n, std::uint64_t seed,
                                                  const GeneratorConfig& config) {
  if (n == 0) throw EmptyCorpusError("corpus size must be at least 1");
  Generator g{world, vocabulary(world), Rng(seed)};
  if (g.vocab.objects.empty() || g.vocab.devices.empty() || g.vocab.surfaces.empty() || g.vocab.rooms.empty()) {
    throw FormatError("world needs holdable objects, devices, rooms and furniture for the generator");
  }
  // Exact category counts, shuffled, so the proportions hold at any n.
  std::vector<std::string> categories;
  auto fill = [&](double rate, const char* name) {
    const auto k = static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
    for (std::size_t i = 0; i < k && categories.size() < n; ++i) categories.emplace_back(name);
  };
  fill(config.missing_argument_rate, kCategoryMissing);
  fill(config.multi_task_pronoun_rate, kCategoryPronoun);
  fill(config.ambiguous_verb_rate, kCategoryAmbiguous);
  fill(config.multi_task_rate, kCategoryMulti);
  while (categories.size() < n) categories.emplace_back(kCategoryComplete);
  for (std::size_t i = categories.size(); i > 1; --i) std::swap(categories[i - 1], categories[g.rng.below(i)]);

  std::vector<AnnotatedInstruction> out;
  out.reserve(n);
  for (const auto& c : categories) out.push_back(g.record(c));
  return out;
}

// ---------------------------------------------------------------------------
// Simulated user

std::string simulated_user(const GoldFrame& gold, const PendingQuestion& q, const WorldModel& world) {
  switch (q.kind) {
    case PendingKind::ConfirmTask:
    case PendingKind::ConfirmAlternative:
      return q.subject == gold.task_type ? "yes" : "no";
    case PendingKind::ElicitArgument:
    case PendingKind::DisambiguateGrounding:
      break;
  }
  const GoldSlot* s = gold.slot(q.subject);
  if (!s && q.subject == "goal-location") s = gold.slot("person");
  if (q.kind == PendingKind::DisambiguateGrounding) {
    if (!s) return "I do not know";
    return WorldModel::display_name(s->entity);
  }
  if (s) {
    if (s->type == "intended-state") return s->entity;
    if (!s->mentioned) return s->text;
    if (const Person* p = world.find_person(s->entity)) {
      (void)p;
      return "me";
    }
    return "the " + WorldModel::display_name(s->entity);
  }
  // A slot the gold frame does not list, e.g. the source of an object the
  // instruction named ambiguously.
  if (q.subject == "source-location") {
    if (const GoldSlot* o = gold.slot("object")) {
      if (const WorldObject* obj = world.find_object(o->entity); obj && !obj->location.empty()) {
        return "the " + WorldModel::display_name(obj->location);
      }
    }
  }
  return "I do not know";
}

// ---------------------------------------------------------------------------
// Evaluation

std::string_view to_string(EvalMode mode) {
  switch (mode) {
    case EvalMode::ND: return "Baseline-ND";
    case EvalMode::AD: return "Baseline-AD";
    case EvalMode::TCAR: return "TCAR";
  }
  return "?";
}

EvalMode parse_eval_mode(std::string_view name) {
  std::string lower = to_lower(name);
  if (lower == "nd" || lower == "baseline-nd") return EvalMode::ND;
  if (lower == "ad" || lower == "baseline-ad") return EvalMode::AD;
  if (lower == "tcar") return EvalMode::TCAR;
  throw FormatError("unknown evaluation mode '" + std::string(name) + "'");
}

DialoguePolicy policy_for(EvalMode mode) {
  switch (mode) {
    case EvalMode::ND: return DialoguePolicy::none();
    case EvalMode::AD: return DialoguePolicy::arguments();
    case EvalMode::TCAR: return DialoguePolicy::full();
  }
  return DialoguePolicy::full();
}

std::vector<Atom> gold_goal(const GoldFrame& gold, const WorldModel& world, const TaskLibrary& tasks) {
  TaskFrame f;
  f.task_type = gold.task_type;
  for (const auto& s : gold.slots) f.entities[s.type] = s.entity;
  return generate_problem(f, world, tasks).problem.goal;
}

RecordOutcome evaluate_record(const DialogueEngine& engine, const AnnotatedInstruction& record,
                              const WorldModel& world, std::size_t max_turns) {
  RecordOutcome out;
  DialogueSession s = engine.start_session();
  std::optional<ExecutionRequest> exec;
  StepResult r = engine.step(s, record.text, world);
  exec = r.execution;
  std::size_t turns = 1;
  while (!s.terminal() && s.pending && turns < max_turns && !record.frames.empty()) {
    const std::size_t idx = std::min(s.completed.size(), record.frames.size() - 1);
    r = engine.step(s, simulated_user(record.frames[idx], *s.pending, world), world);
    exec = r.execution;
    ++turns;
  }
  out.transcript = s.transcript;

  if (!s.terminal()) {
    out.failure = "turn-limit";
    return out;
  }
  if (s.termination != Termination::TaskExecuted || !exec) {
    out.failure = std::string(to_string(s.termination));
    if (!s.failure.empty()) {
      std::string why = s.failure;
      // keep the failure class, drop entity names
      if (auto q = why.find(" '"); q != std::string::npos) why = why.substr(0, q);
      out.failure += ": " + why;
    }
    return out;
  }
  const std::size_t n = std::min(exec->frames.size(), record.frames.size());
  for (std::size_t i = 0; i < n; ++i) {
    const TaskFrame& f = exec->frames[i];
    const GoldFrame& g = record.frames[i];
    if (f.task_type != g.task_type) {
      if (out.failure.empty()) out.failure = "wrong task type";
      continue;
    }
    std::vector<Atom> want;
    try {
      want = gold_goal(g, world, engine.tasks());
    } catch (const Error&) {
      if (out.failure.empty()) out.failure = "gold frame not plannable";
      continue;
    }
    if (exec->problems[i].problem.goal != want) {
      if (out.failure.empty()) out.failure = "wrong goal";
      continue;
    }
    if (!validate(exec->plans[i], exec->problems[i]).ok) {
      if (out.failure.empty()) out.failure = "invalid plan";
      continue;
    }
    ++out.plans_generated;
  }
  if (exec->frames.size() != record.frames.size() && out.failure.empty()) out.failure = "wrong number of tasks";
  out.success = out.failure.empty();
  return out;
}

EvalRow run_eval(const DialogueEngine& engine, const std::string& system,
                 const std::vector<AnnotatedInstruction>& corpus, const WorldModel& world, unsigned threads) {
  if (corpus.empty()) throw EmptyCorpusError("evaluation corpus is empty");
  std::vector<RecordOutcome> outcomes(corpus.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < corpus.size();) {
      try {
        outcomes[i] = evaluate_record(engine, corpus[i], world);
      } catch (const Error& e) {
        outcomes[i].failure = std::string("error: ") + e.kind();
      }
    }
  };
  threads = std::max(1u, threads);
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  EvalRow row;
  row.system = system;
  row.instructions = corpus.size();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& o = outcomes[i];
    row.tasks_given += corpus[i].frames.size();
    row.plans_generated += o.plans_generated;
    auto& cat = row.by_category[corpus[i].category];
    ++cat.second;
    if (o.success) {
      ++row.instructions_succeeded;
      ++cat.first;
    } else {
      ++row.failures[o.failure];
    }
  }
  return row;
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-12s %11s %16s %8s %14s\n", "System", "Tasks given", "Plans generated", "Percent",
                "Instructions");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-12s %11zu %16zu %7.1f%% %6zu/%-7zu\n", r.system.c_str(), r.tasks_given,
                  r.plans_generated, r.percentage(), r.instructions_succeeded, r.instructions);
    out << buf;
  }
  for (const auto& r : rows) {
    if (r.failures.empty()) continue;
    out << "\n" << r.system << " failures:\n";
    for (const auto& [why, n] : r.failures) out << "  " << n << "  " << why << "\n";
  }
  return out.str();
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json row;
    row["system"] = r.system;
    row["instructions"] = r.instructions;
    row["instructions_succeeded"] = r.instructions_succeeded;
    row["tasks_given"] = r.tasks_given;
    row["plans_generated"] = r.plans_generated;
    char pct[32];
    std::snprintf(pct, sizeof pct, "%.1f", r.percentage());
    row["percentage"] = pct;
    nlohmann::ordered_json cats = nlohmann::ordered_json::object();
    for (const auto& [c, v] : r.by_category) cats[c] = {{"succeeded", v.first}, {"total", v.second}};
    row["categories"] = cats;
    nlohmann::ordered_json fails = nlohmann::ordered_json::object();
    for (const auto& [why, n] : r.failures) fails[why] = n;
    row["failures"] = fails;
    j.push_back(row);
  }
  return j.dump(2) + "\n";
}

}  // namespace tcar
