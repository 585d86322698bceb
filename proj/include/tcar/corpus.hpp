#pragma once

#include <string>
#include <vector>

namespace tcar {

inline const std::vector<std::string> kTaskTypes = {"Motion",  "Taking",       "Bringing",
                                                   "Placing", "Change-state", "Searching"};
inline const std::vector<std::string> kArgumentTypes = {"object",         "source-location", "goal-location",
                                                       "device",         "intended-state",  "search-area",
                                                       "person"};
inline constexpr const char* kOutside = "o";

// Label alphabets with the outside label first.
std::vector<std::string> task_label_alphabet();
std::vector<std::string> argument_label_alphabet();

bool is_task_type(const std::string& label);

struct GoldSlot {
  std::string type;    // argument type
  std::string entity;  // world entity name (or on/off for intended-state)
  std::string text;    // surface form when mentioned, else the canonical answer phrase
  bool mentioned = true;
};

struct GoldFrame {
  std::string task_type;
  std::vector<GoldSlot> slots;

  const GoldSlot* slot(const std::string& type) const;
};

// One annotated instruction. Token labels align 1:1 with `tokens`.
struct AnnotatedInstruction {
  std::string text;
  std::vector<std::string> tokens;
  std::vector<std::string> task_labels;
  std::vector<std::string> argument_labels;
  std::vector<GoldFrame> frames;  // execution order; may be empty for imported data
  std::string category;           // generator category, informational
};

// One JSON object per line. Throws FormatError naming the line.
std::vector<AnnotatedInstruction> parse_corpus(const std::string& text);
std::string format_corpus(const std::vector<AnnotatedInstruction>& corpus);
std::vector<AnnotatedInstruction> load_corpus(const std::string& path);
void save_corpus(const std::vector<AnnotatedInstruction>& corpus, const std::string& path);

// Reads a column-format annotated file: blank-line separated sentences, one
// `token<TAB>task-label<TAB>argument-label` row per token, BIO prefixes
// stripped.
std::vector<AnnotatedInstruction> import_conll(const std::string& path);

// Deterministic split: shuffled with `seed`, first `train_fraction` to train.
void split_corpus(const std::vector<AnnotatedInstruction>& corpus, double train_fraction, unsigned long long seed,
                  std::vector<AnnotatedInstruction>& train, std::vector<AnnotatedInstruction>& test);

}  // namespace tcar
