#include "tcar/templates.hpp"

#include <fstream>
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

}  // namespace

std::string noun_phrase(const std::string& surface) {
  const std::string lower = to_lower(surface);
  if (lower == "me") return "you";
  if (lower == "you") return "me";
  const std::string first = lower.substr(0, lower.find(' '));
  static const char* keep[] = {"the", "a", "an", "my", "your", "his", "her", "our", "their", "this",
                               "that", "these", "those", "it", "them", "him", "us", "some"};
  for (const char* k : keep) {
    if (first == k) return surface;
  }
  return "the " + surface;
}

std::string join_choices(const std::vector<std::string>& options) {
  std::string out;
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (i) out += i + 1 == options.size() ? " or " : ", ";
    out += options[i];
  }
  return out;
}

Templates Templates::parse(std::string_view text) {
  Templates t;
  std::istringstream in{std::string(text)};
  std::string raw, section;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (section.empty() || eq == std::string::npos) {
      throw FormatError("template file line " + std::to_string(lineno) + ": expected key = pattern in a section");
    }
    t.sections_[section][trim(line.substr(0, eq))].push_back(trim(line.substr(eq + 1)));
  }
  return t;
}

Templates Templates::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open template file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool Templates::has(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key) > 0;
}

const std::string& Templates::lookup(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  if (s != sections_.end()) {
    auto k = s->second.find(key);
    if (k != s->second.end() && !k->second.empty()) return k->second.front();
  }
  throw FormatError("no template [" + section + "] " + key);
}

std::string Templates::render(const std::string& pattern, const SlotValues& values, const TemplateVars& vars,
                              const std::string& verb) const {
  std::string out;
  for (std::size_t i = 0; i < pattern.size();) {
    if (pattern[i] != '{') {
      out.push_back(pattern[i++]);
      continue;
    }
    const auto close = pattern.find('}', i);
    if (close == std::string::npos) throw FormatError("unterminated placeholder in template: " + pattern);
    std::string body = pattern.substr(i + 1, close - i - 1);
    i = close + 1;

    bool np = false;
    if (auto colon = body.find(':'); colon != std::string::npos) {
      np = body.substr(colon + 1) == "np";
      body = body.substr(0, colon);
    }
    std::vector<std::string> names;
    std::istringstream alts(body);
    for (std::string n; std::getline(alts, n, '|');) names.push_back(trim(n));

    std::string text;
    bool filled = false;
    for (const auto& n : names) {
      if (n == "verb" && !verb.empty()) {
        text = verb;
        filled = true;
      } else if (auto v = values.find(n); v != values.end() && !v->second.surface.empty()) {
        text = np ? noun_phrase(v->second.surface) : v->second.surface;
        filled = true;
      } else if (auto var = vars.find(n); var != vars.end()) {
        text = np ? noun_phrase(var->second) : var->second;
        filled = true;
      }
      if (filled) break;
    }
    if (!filled) {
      for (const auto& n : names) {
        if (has("generic", n)) {
          text = lookup("generic", n);
          filled = true;
          break;
        }
      }
    }
    if (!filled) throw FormatError("template slot {" + body + "} has no value: " + pattern);
    out += text;
  }
  return out;
}

std::string Templates::confirm(const std::string& task, const SlotValues& values, const std::string& verb) const {
  return render(lookup("confirm", task), values, {}, verb);
}

std::string Templates::elicit(const std::string& task, const std::string& slot, const SlotValues& values,
                              const std::string& verb) const {
  const std::string specific = task + "." + slot;
  return render(lookup("elicit", has("elicit", specific) ? specific : slot), values, {}, verb);
}

std::string Templates::choice(const std::string& query, const std::vector<std::string>& options) const {
  std::vector<std::string> phrases;
  for (const auto& o : options) phrases.push_back(noun_phrase(o));
  return render(lookup("choice", "default"), {}, {{"query", query}, {"choices", join_choices(phrases)}});
}

std::string Templates::invalid(const std::string& query, const std::string& question) const {
  return render(lookup("invalid", "default"), {}, {{"query", query}, {"question", question}});
}

std::string Templates::execute(const std::string& task, const SlotValues& values, const std::string& verb) const {
  return render(lookup("execute", task), values, {}, verb);
}

std::string Templates::capability(const std::string& task) const { return lookup("capability", task); }

std::string Templates::generic(const std::string& slot) const { return lookup("generic", slot); }

const std::vector<std::string>& Templates::responses(const std::string& key) const {
  auto s = sections_.find("response");
  if (s != sections_.end()) {
    auto k = s->second.find(key);
    if (k != s->second.end()) return k->second;
  }
  throw FormatError("no template [response] " + key);
}

std::string Templates::response(const std::string& key, std::size_t pick, const TemplateVars& vars) const {
  const auto& all = responses(key);
  return render(all[pick % all.size()], {}, vars);
}

}  // namespace tcar
