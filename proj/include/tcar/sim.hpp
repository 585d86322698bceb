#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tcar/corpus.hpp"
#include "tcar/dialogue.hpp"
#include "tcar/world.hpp"

namespace tcar {

enum class SimEventKind { Move, Pick, Place, Toggle, Speak, Success };
std::string_view to_string(SimEventKind kind);
SimEventKind parse_sim_event_kind(std::string_view name);

struct SimEvent {
  std::uint64_t seq = 0;
  SimEventKind kind = SimEventKind::Speak;
  // move: from, to; pick/place: object, location; toggle: device, on|off;
  // speak: the agent text; success: empty.
  std::vector<std::string> args;
  bool operator==(const SimEvent&) const = default;
};

struct Execution {
  std::vector<SimEvent> events;
  WorldModel world;
};

// One event per plan step plus a closing success event, numbered from
// `first_seq`. Throws InconsistentEffectError before emitting anything
// when the plan does not apply.
Execution execute(const std::vector<GroundAction>& plan, const WorldModel& world, std::uint64_t first_seq = 1);

// Applies the world-changing events in order.
WorldModel fold_events(const WorldModel& world, const std::vector<SimEvent>& events);

// ---------------------------------------------------------------------------
// Synthetic instruction corpus

struct GeneratorConfig {
  double missing_argument_rate = 0.20;
  double multi_task_pronoun_rate = 0.15;
  double ambiguous_verb_rate = 0.10;
  double multi_task_rate = 0.05;  // conjunctions without pronouns
};

// Category names written to AnnotatedInstruction::category.
inline constexpr const char* kCategoryComplete = "complete";
inline constexpr const char* kCategoryMissing = "missing-argument";
inline constexpr const char* kCategoryPronoun = "multi-task-pronoun";
inline constexpr const char* kCategoryAmbiguous = "ambiguous-verb";
inline constexpr const char* kCategoryMulti = "multi-task";

// Template grammar over the entities of `world`. Deterministic per seed.
std::vector<AnnotatedInstruction> generate_corpus(const WorldModel& world, std::size_t n, std::uint64_t seed,
                                                  const GeneratorConfig& config = {});

// ---------------------------------------------------------------------------
// Evaluation

// Answers a pending question the way the evaluation's simulated human does:
// yes/no against the gold task type, gold values in a word or phrase.
std::string simulated_user(const GoldFrame& gold, const PendingQuestion& question, const WorldModel& world);

enum class EvalMode { ND, AD, TCAR };
std::string_view to_string(EvalMode mode);
EvalMode parse_eval_mode(std::string_view name);
DialoguePolicy policy_for(EvalMode mode);

struct EvalRow {
  std::string system;
  std::size_t instructions = 0;
  std::size_t tasks_given = 0;
  std::size_t plans_generated = 0;
  std::size_t instructions_succeeded = 0;
  std::map<std::string, std::size_t> failures;                // reason -> count
  std::map<std::string, std::pair<std::size_t, std::size_t>> by_category;  // succeeded, total

  double percentage() const { return tasks_given ? 100.0 * plans_generated / tasks_given : 0.0; }
  double success_rate() const { return instructions ? double(instructions_succeeded) / instructions : 0.0; }
};

struct EvalReport {
  std::vector<EvalRow> rows;

  std::string to_table() const;
  std::string to_json() const;
};

struct RecordOutcome {
  bool success = false;
  std::size_t plans_generated = 0;  // gold frames matched by a valid plan
  std::string failure;              // empty on success
  std::vector<std::pair<std::string, std::string>> transcript;
};

// Runs one instruction through `engine` from a fresh copy of `world`,
// answering questions with simulated_user. A task counts as planned when
// its type and goal match the gold frame and the plan validates.
RecordOutcome evaluate_record(const DialogueEngine& engine, const AnnotatedInstruction& record,
                              const WorldModel& world, std::size_t max_turns = 12);

// Records are evaluated in parallel with `threads` workers and aggregated
// in corpus order. The engine should not record history.
EvalRow run_eval(const DialogueEngine& engine, const std::string& system,
                 const std::vector<AnnotatedInstruction>& corpus, const WorldModel& world, unsigned threads = 1);

// Goal atoms of `gold` on `world` (person slots map to the person's location).
std::vector<Atom> gold_goal(const GoldFrame& gold, const WorldModel& world, const TaskLibrary& tasks);

}  // namespace tcar
