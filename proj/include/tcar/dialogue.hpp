#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tcar/intent.hpp"
#include "tcar/interpreter.hpp"
#include "tcar/planner.hpp"
#include "tcar/templates.hpp"
#include "tcar/world.hpp"

namespace tcar {

enum class DialogueState { S0, S1, S2, S3, S4, S5, S6, S7, Terminal };
std::string_view to_string(DialogueState state);  // "S0" ... "terminal"
std::string_view describe(DialogueState state);   // "intent-classification" ...

enum class Termination { None, TaskExecuted, Bye, NotUnderstood, Incapable };
std::string_view to_string(Termination t);

enum class PendingKind { ConfirmTask, ConfirmAlternative, ElicitArgument, DisambiguateGrounding };
enum class ExpectedAnswer { Binary, Value, Choice };
std::string_view to_string(PendingKind k);
std::string_view to_string(ExpectedAnswer e);

struct PendingQuestion {
  PendingKind kind = PendingKind::ConfirmTask;
  std::string subject;  // task type or argument type
  std::string text;
  ExpectedAnswer expected = ExpectedAnswer::Binary;
  std::vector<std::string> choices;  // entity names for grounding questions
};

// Which dialogue strategies are enabled. The evaluation baselines switch
// most of them off.
struct DialoguePolicy {
  bool confirm_task = true;
  bool infer_from_kb = true;
  bool resolve_coreference = true;
  bool disambiguate_grounding = true;
  bool elicit_missing = true;
  bool elicit_invalid = true;

  static DialoguePolicy none();       // no dialogue at all
  static DialoguePolicy arguments();  // asks only for unmentioned arguments
  static DialoguePolicy full();
};

struct DialogueConfig {
  double confidence_threshold = 0.6;
  double ranking_floor = 0.0;  // alternatives below this probability are not offered
  double history_weight = 2.0;
  double intent_threshold = 0.3;  // lower top-intent probability counts as not understood
  std::uint64_t seed = 1;         // canned-response selection
  SolveOptions planner;
  DialoguePolicy policy;
};

struct HistoryRecord {
  std::string utterance;
  std::string task_type;
  std::set<std::string> argument_types;
  double weight = 1.0;
};

// Append-only record of successfully planned instructions. When a path is
// set every append is written and flushed before returning.
class InteractionHistory {
 public:
  InteractionHistory() = default;
  explicit InteractionHistory(std::string path);  // loads existing records

  void append(HistoryRecord record);
  std::vector<HistoryRecord> records() const;
  std::size_t size() const;
  const std::string& path() const { return path_; }

 private:
  mutable std::mutex mutex_;
  std::string path_;
  std::vector<HistoryRecord> records_;
};

struct ExecutionRequest {
  std::vector<TaskFrame> frames;
  std::vector<PlanningProblem> problems;
  std::vector<Plan> plans;
};

struct RankedTask {
  std::string task_type;
  double probability = 0.0;
  double count = 0.0;
};

struct DialogueSession {
  DialogueState state = DialogueState::S0;
  std::optional<TaskFrame> current_frame;
  std::optional<PendingQuestion> pending;
  std::vector<std::pair<std::string, std::string>> transcript;  // (speaker, text)
  std::vector<RankedTask> alternatives;                          // remaining, best first
  Termination termination = Termination::None;
  std::string failure;  // why the task could not be carried out, if it could not
  std::string failure_stage;  // "grounding" or "planning"
  std::string warning;  // non-fatal problem, e.g. the history file could not be written

  // Instruction under interpretation.
  std::string utterance;
  TokenSequence tokens;
  std::vector<std::string> task_labels;
  std::vector<TaskFrame> queued;     // frames after the current one
  std::vector<TaskFrame> completed;  // planned frames of this instruction
  std::vector<PlanningProblem> problems;
  std::vector<Plan> plans;
  std::set<std::string> rejected;         // task types the user said no to
  std::vector<TaskFrame> context;         // frames discussed in this session
  std::optional<WorldModel> projected;    // world after the completed frames
  std::size_t questions = 0;              // agent questions asked
  std::size_t alternative_questions = 0;  // of which task alternatives
  std::mt19937_64 rng{1};

  bool terminal() const { return state == DialogueState::Terminal; }
};

struct StepResult {
  std::string response;
  std::optional<ExecutionRequest> execution;
};

class DialogueEngine {
 public:
  DialogueEngine(const TaskInterpreter* interpreter, const IntentModel* intents, const TaskLibrary* tasks,
                 const Templates* templates, std::vector<EvidenceRecord> training_evidence,
                 InteractionHistory* history, DialogueConfig config = {});

  // New session in S0; `greeting` receives the opening line.
  DialogueSession start_session(std::string* greeting = nullptr, std::uint64_t salt = 0) const;

  // Classifies the intent of `utterance` and advances the session. Throws
  // SessionTerminatedError on a terminal session.
  StepResult step(DialogueSession& session, const std::string& utterance, const WorldModel& world) const;

  // Same as step with the intent already decided.
  StepResult dispatch(DialogueSession& session, Intent intent, bool low_confidence, const std::string& utterance,
                      const WorldModel& world) const;

  // P(T|S) over task types not in `excluded`, best first; ties keep the
  // task alphabet order.
  std::vector<RankedTask> rank_alternatives(const TokenSequence& tokens, const std::set<std::string>& excluded) const;

  // Appends one history record per planned frame.
  // Returns an error message when the history could not be persisted.
  std::optional<std::string> record_success(const std::vector<TaskFrame>& frames, const std::string& utterance,
                                            const TokenSequence& tokens) const;

  const DialogueConfig& config() const { return config_; }
  const TaskInterpreter& interpreter() const { return *interpreter_; }
  const Templates& templates() const { return *templates_; }
  const TaskLibrary& tasks() const { return *tasks_; }

 private:
  std::string say(DialogueSession& s, const std::string& text) const;
  void terminate(DialogueSession& s, Termination t) const;
  StepResult ask(DialogueSession& s, PendingQuestion q, DialogueState state, const std::string& prefix = {}) const;
  StepResult reask(DialogueSession& s, const std::string& prefix) const;

  StepResult answer_conversational(DialogueSession& s, Intent intent, const WorldModel& world) const;
  StepResult start_instruction(DialogueSession& s, const std::string& utterance, const Interpretation& interp,
                               const WorldModel& world) const;
  StepResult begin_frame(DialogueSession& s, const WorldModel& world, bool gate) const;
  StepResult handle_binary(DialogueSession& s, bool yes, const WorldModel& world) const;
  StepResult offer_next_alternative(DialogueSession& s, const WorldModel& world) const;
  bool reiterates_verb(const DialogueSession& s, const Interpretation& interp) const;
  StepResult continue_session(DialogueSession& s, const std::string& utterance, const Interpretation& interp,
                              const WorldModel& world) const;
  std::optional<StepResult> try_direct_answer(DialogueSession& s, const std::string& utterance,
                                              const WorldModel& world) const;
  StepResult validate_arguments(DialogueSession& s, const WorldModel& world) const;
  StepResult plan_current(DialogueSession& s, const WorldModel& world) const;
  StepResult fail(DialogueSession& s, const std::string& reason, const std::string& response_key) const;

  TaskFrame hypothesis_frame(const DialogueSession& s, const std::string& task_type, double confidence) const;
  SlotValues slot_values(const TaskFrame& frame) const;
  std::string verb_of(const std::string& task_type) const;
  PendingQuestion elicit_question(const TaskFrame& frame, const std::string& slot) const;

  const TaskInterpreter* interpreter_;
  const IntentModel* intents_;
  const TaskLibrary* tasks_;
  const Templates* templates_;
  std::vector<EvidenceRecord> training_evidence_;
  InteractionHistory* history_;
  DialogueConfig config_;
};

// "yes" / "no" from a small affirmation/negation lexicon.
std::optional<bool> parse_yes_no(const std::string& utterance);

inline constexpr const char* kNotNeeded = "<not-needed>";

}  // namespace tcar
