#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace tcar {

struct SlotText {
  std::string surface;
  std::string lemma;
};
using SlotValues = std::map<std::string, SlotText>;
using TemplateVars = std::map<std::string, std::string>;

// Editable agent-utterance templates; see data/templates.txt for the syntax.
class Templates {
 public:
  static Templates parse(std::string_view text);
  static Templates load(const std::string& path);

  // Renders `pattern`. Unfilled slots take the generic phrase of their
  // argument type; a placeholder with neither raises FormatError.
  std::string render(const std::string& pattern, const SlotValues& values, const TemplateVars& vars = {},
                     const std::string& verb = {}) const;

  std::string confirm(const std::string& task, const SlotValues& values, const std::string& verb) const;
  // Task-specific question when one exists, else the shared one for `slot`.
  std::string elicit(const std::string& task, const std::string& slot, const SlotValues& values,
                     const std::string& verb) const;
  std::string choice(const std::string& query, const std::vector<std::string>& options) const;
  std::string invalid(const std::string& query, const std::string& question) const;
  std::string execute(const std::string& task, const SlotValues& values, const std::string& verb) const;
  std::string capability(const std::string& task) const;
  std::string generic(const std::string& slot) const;

  // Alternatives for a canned response key (greeting has several).
  const std::vector<std::string>& responses(const std::string& key) const;
  std::string response(const std::string& key, std::size_t pick = 0, const TemplateVars& vars = {}) const;

  bool has(const std::string& section, const std::string& key) const;

 private:
  const std::string& lookup(const std::string& section, const std::string& key) const;

  std::map<std::string, std::map<std::string, std::vector<std::string>>> sections_;
};

// "the mug"; "me" becomes "you" and vice versa; determiners and pronouns
// are kept as they are.
std::string noun_phrase(const std::string& surface);

// "a", "a or b", "a, b or c".
std::string join_choices(const std::vector<std::string>& options);

}  // namespace tcar
