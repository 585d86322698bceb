#include "tcar/dialogue.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tcar/error.hpp"

namespace tcar {

std::string_view to_string(DialogueState s) {
  switch (s) {
    case DialogueState::S0: return "S0";
    case DialogueState::S1: return "S1";
    case DialogueState::S2: return "S2";
    case DialogueState::S3: return "S3";
    case DialogueState::S4: return "S4";
    case DialogueState::S5: return "S5";
    case DialogueState::S6: return "S6";
    case DialogueState::S7: return "S7";
    case DialogueState::Terminal: return "terminal";
  }
  return "?";
}

std::string_view describe(DialogueState s) {
  switch (s) {
    case DialogueState::S0: return "intent-classification";
    case DialogueState::S1: return "task-type-prediction";
    case DialogueState::S2: return "argument-prediction";
    case DialogueState::S3: return "plan-and-execute";
    case DialogueState::S4: return "confirm-low-confidence";
    case DialogueState::S5: return "confirm-alternative";
    case DialogueState::S6: return "rank-alternatives";
    case DialogueState::S7: return "elicit-argument";
    case DialogueState::Terminal: return "terminal";
  }
  return "?";
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::None: return "none";
    case Termination::TaskExecuted: return "task-executed";
    case Termination::Bye: return "bye";
    case Termination::NotUnderstood: return "not-understood";
    case Termination::Incapable: return "incapable";
  }
  return "?";
}

std::string_view to_string(PendingKind k) {
  switch (k) {
    case PendingKind::ConfirmTask: return "confirm-task";
    case PendingKind::ConfirmAlternative: return "confirm-alternative";
    case PendingKind::ElicitArgument: return "elicit-argument";
    case PendingKind::DisambiguateGrounding: return "disambiguate-grounding";
  }
  return "?";
}

std::string_view to_string(ExpectedAnswer e) {
  switch (e) {
    case ExpectedAnswer::Binary: return "binary";
    case ExpectedAnswer::Value: return "value";
    case ExpectedAnswer::Choice: return "choice-list";
  }
  return "?";
}

DialoguePolicy DialoguePolicy::none() { return {false, false, false, false, false, false}; }
DialoguePolicy DialoguePolicy::arguments() { return {false, false, false, false, true, false}; }
DialoguePolicy DialoguePolicy::full() { return {}; }

// ---------------------------------------------------------------------------
// History

InteractionHistory::InteractionHistory(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      HistoryRecord r;
      r.utterance = j.at("utterance").get<std::string>();
      r.task_type = j.at("task").get<std::string>();
      for (const auto& a : j.at("arguments")) r.argument_types.insert(a.get<std::string>());
      r.weight = j.at("weight").get<double>();
      records_.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path_ + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void InteractionHistory::append(HistoryRecord record) {
  if (!(record.weight > 0)) throw FormatError("history weight must be positive");
  std::lock_guard lock(mutex_);
  if (!path_.empty()) {
    std::ofstream out(path_, std::ios::app);
    if (!out) throw IoError("cannot append to history file " + path_);
    nlohmann::json j = {{"utterance", record.utterance},
                        {"task", record.task_type},
                        {"arguments", record.argument_types},
                        {"weight", record.weight}};
    out << j.dump() << "\n";
    out.flush();
    if (!out) throw IoError("cannot append to history file " + path_);
  }
  records_.push_back(std::move(record));
}

std::vector<HistoryRecord> InteractionHistory::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::size_t InteractionHistory::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

// ---------------------------------------------------------------------------

std::optional<bool> parse_yes_no(const std::string& utterance) {
  static const std::set<std::string> yes = {"yes", "yeah", "yep", "yup", "sure", "ok", "okay", "correct", "right",
                                            "affirmative", "absolutely", "exactly", "definitely"};
  static const std::set<std::string> no = {"no", "nope", "nah", "negative", "wrong", "incorrect", "not"};
  static const std::set<std::string> filler = {"please", "do", "it", "that", "thanks", "thank", "you", "is",
                                               "of", "course", "sir", "i", "think", "so", "s"};
  std::vector<std::string> words;
  std::string cur;
  for (char ch : utterance) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalpha(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(cur);
  bool saw_yes = false, saw_no = false;
  for (const auto& w : words) {
    if (yes.count(w)) {
      saw_yes = true;
    } else if (no.count(w)) {
      saw_no = true;
    } else if (!filler.count(w)) {
      return std::nullopt;
    }
  }
  if (saw_yes == saw_no) return std::nullopt;
  return saw_yes;
}

DialogueEngine::DialogueEngine(const TaskInterpreter* interpreter, const IntentModel* intents,
                               const TaskLibrary* tasks, const Templates* templates,
                               std::vector<EvidenceRecord> training_evidence, InteractionHistory* history,
                               DialogueConfig config)
    : interpreter_(interpreter),
      intents_(intents),
      tasks_(tasks),
      templates_(templates),
      training_evidence_(std::move(training_evidence)),
      history_(history),
      config_(config) {}

DialogueSession DialogueEngine::start_session(std::string* greeting, std::uint64_t salt) const {
  DialogueSession s;
  s.rng.seed(config_.seed + salt);
  const auto& options = templates_->responses("greeting");
  const std::string text = templates_->response("greeting", s.rng() % options.size());
  say(s, text);
  if (greeting) *greeting = text;
  return s;
}

std::string DialogueEngine::say(DialogueSession& s, const std::string& text) const {
  s.transcript.emplace_back("agent", text);
  return text;
}

void DialogueEngine::terminate(DialogueSession& s, Termination t) const {
  s.pending.reset();
  s.state = DialogueState::Terminal;
  s.termination = t;
}

StepResult DialogueEngine::ask(DialogueSession& s, PendingQuestion q, DialogueState state,
                               const std::string& prefix) const {
  if (s.current_frame) s.context.push_back(*s.current_frame);
  s.state = state;
  ++s.questions;
  const std::string text = prefix.empty() ? q.text : prefix + " " + q.text;
  s.pending = std::move(q);
  return {say(s, text), std::nullopt};
}

StepResult DialogueEngine::reask(DialogueSession& s, const std::string& prefix) const {
  return {say(s, prefix + " " + s.pending->text), std::nullopt};
}

StepResult DialogueEngine::fail(DialogueSession& s, const std::string& reason, const std::string& key) const {
  s.failure = reason;
  s.failure_stage = key == "unsolvable" ? "planning" : "grounding";
  const std::string text = templates_->response(key);
  terminate(s, Termination::Incapable);
  return {say(s, text), std::nullopt};
}

std::string DialogueEngine::verb_of(const std::string& task_type) const {
  const TaskSpec* spec = tasks_->find(task_type);
  return spec ? spec->verb : std::string("do");
}

SlotValues DialogueEngine::slot_values(const TaskFrame& frame) const {
  SlotValues v;
  for (const auto& [type, value] : frame.arguments) v[type] = {value.surface, value.lemma};
  if (const TaskSpec* spec = tasks_->find(frame.task_type)) {
    for (const auto& [from, to] : spec->aliases) {
      if (!v.count(to) && v.count(from)) v[to] = v[from];
    }
  }
  return v;
}

PendingQuestion DialogueEngine::elicit_question(const TaskFrame& frame, const std::string& slot) const {
  PendingQuestion q;
  q.kind = PendingKind::ElicitArgument;
  q.subject = slot;
  q.expected = ExpectedAnswer::Value;
  q.text = templates_->elicit(frame.task_type, slot, slot_values(frame), verb_of(frame.task_type));
  return q;
}

TaskFrame DialogueEngine::hypothesis_frame(const DialogueSession& s, const std::string& task_type,
                                           double confidence) const {
  const Span span = s.current_frame ? s.current_frame->source_span : Span{0, s.tokens.size()};
  std::vector<std::string> forced = s.task_labels;
  bool any = false;
  for (std::size_t i = span.begin; i < span.end; ++i) {
    if (is_task_type(forced[i])) {
      forced[i] = task_type;
      any = true;
    }
  }
  if (!any && span.end > span.begin) {
    std::size_t v = span.begin;
    for (std::size_t i = span.begin; i < span.end; ++i) {
      if (s.tokens[i].pos == Pos::Verb) {
        v = i;
        break;
      }
    }
    forced[v] = task_type;
  }
  const auto args = interpreter_->extract_arguments(s.tokens, forced);
  TaskFrame f;
  f.task_type = task_type;
  f.confidence = confidence;
  f.source_span = span;
  f.arguments = collect_arguments(s.tokens, args.labels, span);
  if (config_.policy.resolve_coreference) {
    std::vector<TaskFrame> hist = s.context;
    hist.insert(hist.end(), s.completed.begin(), s.completed.end());
    f = resolve_coreference({f}, hist).front();
  }
  return f;
}

std::vector<RankedTask> DialogueEngine::rank_alternatives(const TokenSequence& tokens,
                                                          const std::set<std::string>& excluded) const {
  const auto evidence = interpreter_->predict_arguments_taskfree(tokens).types_present;
  std::vector<RankedTask> out;
  for (const auto& t : kTaskTypes) {
    if (!excluded.count(t) && tasks_->find(t)) out.push_back({t, 0.0, 0.0});
  }
  if (out.empty()) return out;
  auto covers = [&](const std::set<std::string>& ak) {
    return std::includes(ak.begin(), ak.end(), evidence.begin(), evidence.end());
  };
  if (!evidence.empty()) {
    for (auto& r : out) {
      for (const auto& e : training_evidence_) {
        if (e.task_type == r.task_type && covers(e.argument_types)) r.count += 1.0;
      }
      if (history_) {
        for (const auto& h : history_->records()) {
          if (h.task_type == r.task_type && covers(h.argument_types)) r.count += h.weight;
        }
      }
    }
  }
  double m = 0.0;
  for (const auto& r : out) m = std::max(m, r.count);
  double z = 0.0;
  for (auto& r : out) z += (r.probability = std::exp(r.count - m));
  for (auto& r : out) r.probability /= z;
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedTask& a, const RankedTask& b) { return a.probability > b.probability; });
  return out;
}

std::optional<std::string> DialogueEngine::record_success(const std::vector<TaskFrame>& frames,
                                                          const std::string& utterance,
                                                          const TokenSequence& tokens) const {
  if (!history_) return std::nullopt;
  std::set<std::string> evidence;
  if (!tokens.empty()) evidence = interpreter_->predict_arguments_taskfree(tokens).types_present;
  try {
    for (const auto& f : frames) {
      HistoryRecord r;
      r.utterance = utterance;
      r.task_type = f.task_type;
      for (const auto& [type, v] : f.arguments) r.argument_types.insert(type);
      r.argument_types.insert(evidence.begin(), evidence.end());
      r.weight = config_.history_weight;
      history_->append(std::move(r));
    }
  } catch (const Error& e) {
    return std::string(e.what());
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Turn handling

namespace {

// "the pen" -> "pen", "my blue pen" -> "blue pen".
std::string bare_noun(const Analyzer& analyzer, const std::string& surface) {
  std::string out;
  for (const auto& t : analyzer.analyze(surface)) {
    if (t.pos == Pos::Det || t.pos == Pos::Pron) continue;
    if (!out.empty()) out += ' ';
    out += t.surface;
  }
  return out.empty() ? surface : out;
}

// Choices whose name contains every content word of the answer ("the red
// one" picks red-pen out of {blue-pen, red-pen}).
std::vector<std::string> match_choice(const Analyzer& analyzer, const std::string& answer,
                                      const std::vector<std::string>& choices) {
  std::vector<std::string> words;
  for (const auto& t : analyzer.analyze(answer)) {
    if (t.pos == Pos::Det || t.pos == Pos::Pron || t.pos == Pos::Adp || t.lemma == "one") continue;
    words.push_back(t.lemma);
  }
  std::vector<std::string> hit;
  if (words.empty()) return hit;
  for (const auto& c : choices) {
    std::vector<std::string> name;
    for (const auto& t : analyzer.analyze(WorldModel::display_name(c))) name.push_back(t.lemma);
    const bool all = std::all_of(words.begin(), words.end(), [&](const std::string& w) {
      return std::find(name.begin(), name.end(), w) != name.end();
    });
    if (all) hit.push_back(c);
  }
  return hit;
}

}  // namespace

StepResult DialogueEngine::step(DialogueSession& s, const std::string& utterance, const WorldModel& world) const {
  if (s.terminal()) throw SessionTerminatedError("session has ended");
  if (utterance.find_first_not_of(" \t\r\n") == std::string::npos) {
    return dispatch(s, Intent::WhGeneral, true, utterance, world);
  }
  const auto pred = intents_->classify(utterance);
  const bool low = pred.low_confidence || pred.probability() < config_.intent_threshold;
  return dispatch(s, pred.intent, low, utterance, world);
}

StepResult DialogueEngine::dispatch(DialogueSession& s, Intent intent, bool low, const std::string& utterance,
                                    const WorldModel& world) const {
  if (s.terminal()) throw SessionTerminatedError("session has ended");
  s.transcript.emplace_back("user", utterance);
  s.failure.clear();
  s.failure_stage.clear();

  if (intent == Intent::ByeGreetings && !low) {
    const std::string text = templates_->response("bye", s.rng());
    terminate(s, Termination::Bye);
    return {say(s, text), std::nullopt};
  }

  const bool blank = utterance.find_first_not_of(" \t\r\n") == std::string::npos;
  const std::optional<PendingQuestion> pending = s.pending;

  if (pending && pending->expected == ExpectedAnswer::Binary && !blank) {
    if (auto yn = parse_yes_no(utterance)) return handle_binary(s, *yn, world);
  }
  if (pending && pending->expected == ExpectedAnswer::Choice && !blank) {
    const auto g = ground(s.projected ? *s.projected : world, interpreter_->analyzer(), utterance, pending->subject);
    std::vector<std::string> hit;
    for (const auto& m : g.matches) {
      if (std::find(pending->choices.begin(), pending->choices.end(), m) != pending->choices.end()) hit.push_back(m);
    }
    if (hit.empty()) hit = match_choice(interpreter_->analyzer(), utterance, pending->choices);
    if (hit.size() == 1) {
      s.current_frame->entities[pending->subject] = hit.front();
      if (auto it = s.current_frame->arguments.find(pending->subject); it != s.current_frame->arguments.end()) {
        it->second.surface = "the " + WorldModel::display_name(hit.front());
      }
      s.pending.reset();
      s.state = DialogueState::S2;
      return validate_arguments(s, world);
    }
  }

  if (intent == Intent::Instruction && !low && !blank) {
    const Interpretation interp = interpreter_->interpret(utterance);
    if (!interp.frames.empty()) {
      return pending ? continue_session(s, utterance, interp, world) : start_instruction(s, utterance, interp, world);
    }
  }

  if (pending && pending->expected == ExpectedAnswer::Value && !blank) {
    if (auto r = try_direct_answer(s, utterance, world)) return *r;
  }

  if (!low && !blank && intent != Intent::Instruction) return answer_conversational(s, intent, world);

  const std::string sorry = templates_->response("not-understood");
  if (pending) return reask(s, sorry);
  terminate(s, Termination::NotUnderstood);
  return {say(s, sorry), std::nullopt};
}

StepResult DialogueEngine::answer_conversational(DialogueSession& s, Intent intent, const WorldModel& world) const {
  std::string text;
  switch (intent) {
    case Intent::WelcomeGreetings:
      text = templates_->response("greeting", s.rng());
      break;
    case Intent::QuestionOnSelf: {
      std::vector<std::string> caps;
      for (const auto& t : kTaskTypes) {
        if (world.can_perform(t) && templates_->has("capability", t)) caps.push_back(templates_->capability(t));
      }
      text = templates_->response("self", 0, {{"capabilities", join_choices(caps)}});
      break;
    }
    case Intent::QuestionOwnLocation:
      text = templates_->response("location", 0, {{"location", WorldModel::display_name(world.robot.location)}});
      break;
    default:
      text = templates_->response("wh");
      break;
  }
  if (s.pending) return reask(s, text);
  return {say(s, text), std::nullopt};
}

StepResult DialogueEngine::start_instruction(DialogueSession& s, const std::string& utterance,
                                             const Interpretation& interp, const WorldModel& world) const {
  s.state = DialogueState::S1;
  s.pending.reset();
  s.utterance = utterance;
  s.tokens = interp.tokens;
  s.task_labels = interp.task.labels;
  s.completed.clear();
  s.problems.clear();
  s.plans.clear();
  s.rejected.clear();
  s.alternatives.clear();
  s.projected = world;

  std::vector<TaskFrame> frames = interp.frames;
  if (config_.policy.resolve_coreference) frames = resolve_coreference(std::move(frames), s.context);
  s.current_frame = frames.front();
  s.queued.assign(frames.begin() + 1, frames.end());
  return begin_frame(s, world, true);
}

StepResult DialogueEngine::begin_frame(DialogueSession& s, const WorldModel& world, bool gate) const {
  const TaskFrame& f = *s.current_frame;
  if (gate && config_.policy.confirm_task && f.confidence < config_.confidence_threshold) {
    PendingQuestion q;
    q.kind = PendingKind::ConfirmTask;
    q.subject = f.task_type;
    q.expected = ExpectedAnswer::Binary;
    q.text = templates_->confirm(f.task_type, slot_values(f), verb_of(f.task_type));
    return ask(s, std::move(q), DialogueState::S4);
  }
  s.state = DialogueState::S2;
  return validate_arguments(s, world);
}

StepResult DialogueEngine::handle_binary(DialogueSession& s, bool yes, const WorldModel& world) const {
  const PendingQuestion q = *s.pending;
  s.pending.reset();
  if (yes) {
    if (q.kind == PendingKind::ConfirmAlternative) {
      s.current_frame = hypothesis_frame(s, q.subject, s.alternatives.front().probability);
      s.alternatives.clear();
    }
    s.state = DialogueState::S2;
    return validate_arguments(s, world);
  }
  s.rejected.insert(q.subject);
  if (q.kind == PendingKind::ConfirmTask) {
    s.state = DialogueState::S6;
    Span span = s.current_frame ? s.current_frame->source_span : Span{0, s.tokens.size()};
    TokenSequence clause(s.tokens.begin() + static_cast<std::ptrdiff_t>(span.begin),
                         s.tokens.begin() + static_cast<std::ptrdiff_t>(span.end));
    s.alternatives.clear();
    for (auto& r : rank_alternatives(clause, s.rejected)) {
      if (r.probability >= config_.ranking_floor) s.alternatives.push_back(r);
    }
  } else if (!s.alternatives.empty()) {
    s.alternatives.erase(s.alternatives.begin());
  }
  return offer_next_alternative(s, world);
}

StepResult DialogueEngine::offer_next_alternative(DialogueSession& s, const WorldModel&) const {
  if (s.alternatives.empty()) return fail(s, "no acceptable task type", "incapable");
  const RankedTask& next = s.alternatives.front();
  s.current_frame = hypothesis_frame(s, next.task_type, next.probability);
  PendingQuestion q;
  q.kind = PendingKind::ConfirmAlternative;
  q.subject = next.task_type;
  q.expected = ExpectedAnswer::Binary;
  q.text = templates_->confirm(next.task_type, slot_values(*s.current_frame), verb_of(next.task_type));
  ++s.alternative_questions;
  return ask(s, std::move(q), DialogueState::S5);
}

namespace {

std::string verb_lemma(const TokenSequence& tokens, const std::vector<std::string>& labels, Span span) {
  for (std::size_t i = span.begin; i < span.end && i < labels.size(); ++i) {
    if (is_task_type(labels[i])) return tokens[i].lemma;
  }
  return {};
}

}  // namespace

bool DialogueEngine::reiterates_verb(const DialogueSession& s, const Interpretation& interp) const {
  const std::string before = verb_lemma(s.tokens, s.task_labels, s.current_frame->source_span);
  const std::string now = verb_lemma(interp.tokens, interp.task.labels, interp.frames.front().source_span);
  return !before.empty() && before == now;
}

StepResult DialogueEngine::continue_session(DialogueSession& s, const std::string& utterance,
                                            const Interpretation& interp, const WorldModel& world) const {
  TaskFrame incoming = interp.frames.front();
  bool high = incoming.confidence >= config_.confidence_threshold;
  // An answer that repeats the instruction's verb ("take it from table") is
  // read as the same task even when the labeler leans elsewhere.
  if (s.pending && s.current_frame && interp.frames.size() == 1 && incoming.task_type != s.current_frame->task_type &&
      reiterates_verb(s, interp)) {
    std::vector<std::string> forced = interp.task.labels;
    for (auto& l : forced) {
      if (is_task_type(l)) l = s.current_frame->task_type;
    }
    const auto args = interpreter_->extract_arguments(interp.tokens, forced);
    incoming.task_type = s.current_frame->task_type;
    incoming.arguments = collect_arguments(interp.tokens, args.labels, incoming.source_span);
    high = true;
  }
  if (high && interp.frames.size() == 1 && s.current_frame && incoming.task_type == s.current_frame->task_type) {
    TaskFrame merged = *s.current_frame;
    TaskFrame add = incoming;
    if (config_.policy.resolve_coreference) {
      std::vector<TaskFrame> hist = s.context;
      hist.push_back(merged);
      add = resolve_coreference({add}, hist).front();
    }
    for (const auto& [type, value] : add.arguments) {
      if (value.is_pronoun() && merged.arguments.count(type)) continue;
      merged.arguments[type] = value;
      merged.entities.erase(type);
    }
    merged.confidence = incoming.confidence;
    s.current_frame = std::move(merged);
    s.pending.reset();
    s.alternatives.clear();
    s.state = DialogueState::S2;
    return validate_arguments(s, world);
  }
  // A different task or an uncertain one starts over; low confidence leads
  // to the confirmation question.
  return start_instruction(s, utterance, interp, world);
}

std::optional<StepResult> DialogueEngine::try_direct_answer(DialogueSession& s, const std::string& utterance,
                                                            const WorldModel& world) const {
  TokenSequence toks;
  try {
    toks = interpreter_->analyze(utterance);
  } catch (const EmptyInputError&) {
    return std::nullopt;
  }
  std::size_t b = 0, e = toks.size();
  auto skippable = [](const Token& t) {
    return t.pos == Pos::Det || t.pos == Pos::Adp || t.pos == Pos::Part || t.pos == Pos::Other ||
           t.pos == Pos::Conj;
  };
  while (e > b && skippable(toks[e - 1]) && toks[e - 1].lemma != "on" && toks[e - 1].lemma != "off") --e;
  while (b < e && skippable(toks[b]) && toks[b].lemma != "on" && toks[b].lemma != "off") ++b;
  if (b == e) return std::nullopt;

  ArgumentValue v;
  for (std::size_t i = b; i < e; ++i) {
    if (i > b) {
      v.surface += ' ';
      v.lemma += ' ';
    }
    v.surface += toks[i].surface;
    v.lemma += toks[i].lemma;
  }
  const std::string slot = s.pending->subject;
  if (slot == "intended-state") {
    if (v.lemma != "on" && v.lemma != "off") return std::nullopt;
  } else {
    const auto g = ground(s.projected ? *s.projected : world, interpreter_->analyzer(), v.surface, slot);
    if (g.status == GroundingStatus::Unknown) return std::nullopt;
  }
  s.current_frame->arguments[slot] = v;
  s.current_frame->entities.erase(slot);
  s.pending.reset();
  s.state = DialogueState::S2;
  return validate_arguments(s, world);
}

StepResult DialogueEngine::validate_arguments(DialogueSession& s, const WorldModel& world) const {
  s.state = DialogueState::S2;
  const WorldModel& w = s.projected ? *s.projected : world;
  TaskFrame& frame = *s.current_frame;
  const TaskSpec* spec = tasks_->find(frame.task_type);
  if (!spec || !w.can_perform(frame.task_type)) return fail(s, "task type not supported", "incapable");
  const DialoguePolicy& pol = config_.policy;
  const Analyzer& analyzer = interpreter_->analyzer();

  for (const std::string& slot : spec->order) {
    if (frame.entities.count(slot)) continue;
    const bool inferable = std::find(spec->inferable.begin(), spec->inferable.end(), slot) != spec->inferable.end();

    std::string gtype = slot;
    const ArgumentValue* value = frame.argument(slot);
    if (!value) {
      for (const auto& [from, to] : spec->aliases) {
        if (to == slot && frame.argument(from)) {
          value = frame.argument(from);
          gtype = from;
          break;
        }
      }
    }

    if (!value) {
      if (inferable && pol.infer_from_kb) {
        auto obj = frame.entities.find("object");
        const Inference inf =
            infer_argument(w, frame.task_type, slot, obj == frame.entities.end() ? "" : obj->second);
        if (inf.kind == Inference::Kind::Value) {
          frame.entities[slot] = inf.entity;
          continue;
        }
        if (inf.kind == Inference::Kind::NotNeeded) {
          frame.entities[slot] = kNotNeeded;
          continue;
        }
      }
      if (pol.elicit_missing) return ask(s, elicit_question(frame, slot), DialogueState::S7);
      return fail(s, "missing " + slot, "incapable");
    }

    auto invalid = [&](const std::string& why) -> StepResult {
      if (!pol.elicit_invalid) return fail(s, why, "incapable");
      const std::string query = value->surface;
      frame.arguments.erase(gtype);
      PendingQuestion q = elicit_question(frame, slot);
      const std::string text = templates_->invalid(query, q.text);
      q.text = text;
      if (s.current_frame) s.context.push_back(*s.current_frame);
      s.state = DialogueState::S7;
      ++s.questions;
      s.pending = q;
      // re-asks repeat only the question itself
      s.pending->text = elicit_question(frame, slot).text;
      return {say(s, text), std::nullopt};
    };

    if (value->is_pronoun()) return invalid("unresolved reference for " + slot);

    if (slot == "intended-state") {
      if (value->lemma.find("off") != std::string::npos) {
        frame.entities[slot] = "off";
      } else if (value->lemma.find("on") != std::string::npos) {
        frame.entities[slot] = "on";
      } else {
        return invalid("intended state must be on or off");
      }
      continue;
    }

    GroundingResult g = ground(w, analyzer, value->surface, gtype);
    if (slot == "object" && g.status == GroundingStatus::Ambiguous && spec->has_slot("source-location")) {
      std::string source;
      if (auto it = frame.entities.find("source-location"); it != frame.entities.end() && it->second != kNotNeeded) {
        source = it->second;
      } else if (const ArgumentValue* sv = frame.argument("source-location")) {
        const auto sg = ground(w, analyzer, sv->surface, "source-location");
        if (sg.status == GroundingStatus::Unique) source = sg.matches.front();
      } else if (pol.elicit_missing) {
        return ask(s, elicit_question(frame, "source-location"), DialogueState::S7);
      }
      if (!source.empty()) {
        std::vector<std::string> kept;
        for (const auto& m : g.matches) {
          const WorldObject* o = w.find_object(m);
          if (o && o->location == source) kept.push_back(m);
        }
        if (!kept.empty()) {
          g.matches = kept;
          g.status = kept.size() == 1 ? GroundingStatus::Unique : GroundingStatus::Ambiguous;
        }
      }
    }

    switch (g.status) {
      case GroundingStatus::Unique:
        frame.entities[slot] = g.matches.front();
        break;
      case GroundingStatus::Ambiguous: {
        if (!pol.disambiguate_grounding) return fail(s, "ambiguous " + slot, "incapable");
        PendingQuestion q;
        q.kind = PendingKind::DisambiguateGrounding;
        q.subject = gtype;
        q.expected = ExpectedAnswer::Choice;
        q.choices = g.matches;
        std::vector<std::string> names;
        for (const auto& m : g.matches) names.push_back(WorldModel::display_name(m));
        q.text = templates_->choice(bare_noun(interpreter_->analyzer(), value->surface), names);
        if (gtype != slot) {
          // answer fills the aliased slot directly
          q.subject = slot;
        }
        return ask(s, std::move(q), DialogueState::S7);
      }
      case GroundingStatus::Unknown:
        return invalid("unknown " + slot + " '" + value->surface + "'");
    }
  }
  return plan_current(s, world);
}

StepResult DialogueEngine::plan_current(DialogueSession& s, const WorldModel& world) const {
  s.state = DialogueState::S3;
  const WorldModel& w = s.projected ? *s.projected : world;
  const TaskFrame& frame = *s.current_frame;
  PlanningProblem problem;
  SolveResult result;
  try {
    problem = generate_problem(frame, w, *tasks_);
    result = solve(problem, config_.planner);
  } catch (const Error& e) {
    return fail(s, e.what(), "unsolvable");
  }
  if (!result.solved()) return fail(s, "no plan reaches the goal", "unsolvable");

  s.projected = apply_postconditions(w, result.plan.steps);
  s.completed.push_back(frame);
  s.context.push_back(frame);
  s.problems.push_back(std::move(problem));
  s.plans.push_back(result.plan);

  if (!s.queued.empty()) {
    TaskFrame next = s.queued.front();
    s.queued.erase(s.queued.begin());
    if (config_.policy.resolve_coreference) next = resolve_coreference({next}, s.context).front();
    s.current_frame = std::move(next);
    return begin_frame(s, world, false);
  }

  std::string text;
  for (const auto& f : s.completed) {
    if (!text.empty()) text += " ";
    text += templates_->execute(f.task_type, slot_values(f), verb_of(f.task_type));
  }
  ExecutionRequest req{s.completed, s.problems, s.plans};
  if (auto err = record_success(s.completed, s.utterance, s.tokens)) s.warning = *err;
  terminate(s, Termination::TaskExecuted);
  return {say(s, text), std::move(req)};
}

}  // namespace tcar
