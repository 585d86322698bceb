#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "tcar/error.hpp"
#include "tcar/planner.hpp"

namespace tcar {

std::string Atom::to_string() const {
  std::string out = "(" + predicate;
  for (const auto& a : args) out += " " + a;
  return out + ")";
}

const Domain& robot_domain() {
  static const Domain d = [] {
    Domain d;
    d.name = "robot";
    d.requirements = {":strips", ":typing"};
    d.types = {{"location", ""}, {"item", ""}, {"device", ""}};
    d.predicates = {
        {"robot-at", {{"?l", "location"}}},
        {"adjacent", {{"?a", "location"}, {"?b", "location"}}},
        {"at", {{"?o", "item"}, {"?l", "location"}}},
        {"holding", {{"?o", "item"}}},
        {"hand-empty", {}},
        {"holdable", {{"?o", "item"}}},
        {"device-at", {{"?d", "device"}, {"?l", "location"}}},
        {"is-on", {{"?d", "device"}}},
        {"is-off", {{"?d", "device"}}},
    };
    d.actions = {
        {"move",
         {{"?from", "location"}, {"?to", "location"}},
         {{"robot-at", {"?from"}}, {"adjacent", {"?from", "?to"}}},
         {{"robot-at", {"?to"}}},
         {{"robot-at", {"?from"}}}},
        {"pick",
         {{"?o", "item"}, {"?l", "location"}},
         {{"robot-at", {"?l"}}, {"at", {"?o", "?l"}}, {"holdable", {"?o"}}, {"hand-empty", {}}},
         {{"holding", {"?o"}}},
         {{"at", {"?o", "?l"}}, {"hand-empty", {}}}},
        {"place",
         {{"?o", "item"}, {"?l", "location"}},
         {{"robot-at", {"?l"}}, {"holding", {"?o"}}},
         {{"at", {"?o", "?l"}}, {"hand-empty", {}}},
         {{"holding", {"?o"}}}},
        {"toggle-on",
         {{"?d", "device"}, {"?l", "location"}},
         {{"robot-at", {"?l"}}, {"device-at", {"?d", "?l"}}, {"is-off", {"?d"}}},
         {{"is-on", {"?d"}}},
         {{"is-off", {"?d"}}}},
        {"toggle-off",
         {{"?d", "device"}, {"?l", "location"}},
         {{"robot-at", {"?l"}}, {"device-at", {"?d", "?l"}}, {"is-on", {"?d"}}},
         {{"is-off", {"?d"}}},
         {{"is-on", {"?d"}}}},
    };
    return d;
  }();
  return d;
}

// ---------------------------------------------------------------------------
// Emission

namespace {

std::string typed_list(const std::vector<TypedName>& xs) {
  // Consecutive names sharing a type are grouped: "?a ?b - location".
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += " ";
    out += xs[i].name;
    const bool last_of_run = i + 1 == xs.size() || xs[i + 1].type != xs[i].type;
    if (last_of_run && !xs[i].type.empty()) out += " - " + xs[i].type;
  }
  return out;
}

std::string conjunction(const std::vector<Atom>& pos, const std::vector<Atom>& neg, const std::string& indent) {
  const std::size_t n = pos.size() + neg.size();
  if (n == 0) return "(and)";
  std::string out = "(and";
  for (const auto& a : pos) out += "\n" + indent + a.to_string();
  for (const auto& a : neg) out += "\n" + indent + "(not " + a.to_string() + ")";
  return out + ")";
}

}  // namespace

std::string emit_domain(const Domain& d) {
  std::ostringstream out;
  out << "(define (domain " << d.name << ")\n";
  out << "  (:requirements";
  for (const auto& r : d.requirements) out << " " << r;
  out << ")\n";
  if (!d.types.empty()) out << "  (:types " << typed_list(d.types) << ")\n";
  out << "  (:predicates";
  for (const auto& p : d.predicates) {
    out << "\n    (" << p.name;
    if (!p.params.empty()) out << " " << typed_list(p.params);
    out << ")";
  }
  out << ")\n";
  for (const auto& a : d.actions) {
    out << "  (:action " << a.name << "\n";
    out << "    :parameters (" << typed_list(a.parameters) << ")\n";
    out << "    :precondition " << conjunction(a.precondition, {}, "      ") << "\n";
    out << "    :effect " << conjunction(a.add_effects, a.del_effects, "      ") << ")\n";
  }
  out << ")\n";
  return out.str();
}

std::string emit_problem(const Problem& p) {
  std::ostringstream out;
  out << "(define (problem " << p.name << ")\n";
  out << "  (:domain " << p.domain << ")\n";
  out << "  (:objects";
  for (std::size_t i = 0; i < p.objects.size();) {
    std::size_t j = i;
    out << "\n   ";
    while (j < p.objects.size() && p.objects[j].type == p.objects[i].type) out << " " << p.objects[j++].name;
    if (!p.objects[i].type.empty()) out << " - " << p.objects[i].type;
    i = j;
  }
  out << ")\n";
  out << "  (:init";
  for (const auto& a : p.init) out << "\n    " << a.to_string();
  out << ")\n";
  out << "  (:goal " << conjunction(p.goal, {}, "    ") << "))\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

struct SExpr {
  bool is_list = false;
  std::string atom;  // lowercased symbol
  std::vector<SExpr> items;
  std::size_t line = 1;
  std::size_t column = 1;
};

class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  SExpr read_document() {
    skip();
    if (pos_ >= text_.size()) throw SyntaxError("empty document", line_, col_);
    SExpr e = read();
    skip();
    if (pos_ < text_.size()) throw SyntaxError("unexpected text after the definition", line_, col_);
    return e;
  }

 private:
  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == ';') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  SExpr read() {
    SExpr e;
    e.line = line_;
    e.column = col_;
    const char c = text_[pos_];
    if (c == ')') throw SyntaxError("unexpected ')'", line_, col_);
    if (c == '(') {
      e.is_list = true;
      advance();
      for (;;) {
        skip();
        if (pos_ >= text_.size()) {
          throw SyntaxError("missing ')' to close the list opened at line " + std::to_string(e.line) + ", column " +
                                std::to_string(e.column),
                            line_, col_);
        }
        if (text_[pos_] == ')') {
          advance();
          return e;
        }
        e.items.push_back(read());
      }
    }
    while (pos_ < text_.size()) {
      const char ch = text_[pos_];
      if (ch == '(' || ch == ')' || ch == ';' || std::isspace(static_cast<unsigned char>(ch))) break;
      e.atom.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
      advance();
    }
    return e;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;
};

[[noreturn]] void bad(const SExpr& e, const std::string& msg) { throw SyntaxError(msg, e.line, e.column); }

const std::string& symbol(const SExpr& e, const char* what) {
  if (e.is_list || e.atom.empty()) bad(e, std::string("expected ") + what);
  return e.atom;
}

const SExpr& list(const SExpr& e, const char* what) {
  if (!e.is_list) bad(e, std::string("expected ") + what);
  return e;
}

std::vector<TypedName> parse_typed(const SExpr& e, std::size_t from = 0) {
  std::vector<TypedName> out;
  std::size_t run_start = 0;
  for (std::size_t i = from; i < e.items.size(); ++i) {
    const auto& s = symbol(e.items[i], "a name");
    if (s == "-") {
      if (i + 1 >= e.items.size()) bad(e.items[i], "expected a type after '-'");
      const auto& type = symbol(e.items[++i], "a type");
      if (run_start == out.size()) bad(e.items[i], "type without names");
      for (std::size_t k = run_start; k < out.size(); ++k) out[k].type = type;
      run_start = out.size();
    } else {
      out.push_back({s, ""});
    }
  }
  return out;
}

Atom parse_atom(const SExpr& e) {
  list(e, "an atom");
  if (e.items.empty()) bad(e, "empty atom");
  Atom a;
  a.predicate = symbol(e.items[0], "a predicate name");
  for (std::size_t i = 1; i < e.items.size(); ++i) a.args.push_back(symbol(e.items[i], "an argument"));
  return a;
}

// Conjunction of literals; negative literals only if allowed.
void parse_formula(const SExpr& e, std::vector<Atom>& pos, std::vector<Atom>* neg) {
  list(e, "a formula");
  if (e.items.empty()) bad(e, "empty formula");
  const auto& head = e.items[0];
  if (!head.is_list && head.atom == "and") {
    for (std::size_t i = 1; i < e.items.size(); ++i) parse_formula(e.items[i], pos, neg);
    return;
  }
  if (!head.is_list && head.atom == "not") {
    if (!neg) bad(e, "negative literals are not supported here");
    if (e.items.size() != 2) bad(e, "'not' takes one atom");
    neg->push_back(parse_atom(e.items[1]));
    return;
  }
  if (!head.is_list && (head.atom == "or" || head.atom == "imply" || head.atom == "forall" ||
                        head.atom == "exists" || head.atom == "when")) {
    bad(head, "'" + head.atom + "' is outside the supported STRIPS subset");
  }
  pos.push_back(parse_atom(e));
}

void check_requirements(const SExpr& sec, std::vector<std::string>& out) {
  static const std::set<std::string> supported = {":strips", ":typing"};
  for (std::size_t i = 1; i < sec.items.size(); ++i) {
    const auto& r = symbol(sec.items[i], "a requirement flag");
    if (!supported.count(r)) throw UnsupportedRequirementError("unsupported PDDL requirement " + r);
    out.push_back(r);
  }
}

std::string section_name(const SExpr& e) {
  list(e, "a section");
  if (e.items.empty()) bad(e, "empty section");
  return symbol(e.items[0], "a section keyword");
}

Domain build_domain(const SExpr& root) {
  Domain d;
  d.name = symbol(list(root.items[1], "(domain <name>)").items.at(1), "a domain name");
  for (std::size_t i = 2; i < root.items.size(); ++i) {
    const auto& sec = root.items[i];
    const auto name = section_name(sec);
    if (name == ":requirements") {
      check_requirements(sec, d.requirements);
    } else if (name == ":types") {
      d.types = parse_typed(sec, 1);
    } else if (name == ":predicates") {
      for (std::size_t k = 1; k < sec.items.size(); ++k) {
        const auto& p = list(sec.items[k], "a predicate declaration");
        if (p.items.empty()) bad(p, "empty predicate declaration");
        d.predicates.push_back({symbol(p.items[0], "a predicate name"), parse_typed(p, 1)});
      }
    } else if (name == ":action") {
      ActionSchema a;
      if (sec.items.size() < 2) bad(sec, "action without a name");
      a.name = symbol(sec.items[1], "an action name");
      for (std::size_t k = 2; k < sec.items.size(); k += 2) {
        const auto& key = symbol(sec.items[k], "an action keyword");
        if (k + 1 >= sec.items.size()) bad(sec.items[k], "missing value for " + key);
        const auto& val = sec.items[k + 1];
        if (key == ":parameters") {
          a.parameters = parse_typed(list(val, "a parameter list"));
        } else if (key == ":precondition") {
          parse_formula(val, a.precondition, nullptr);
        } else if (key == ":effect") {
          parse_formula(val, a.add_effects, &a.del_effects);
        } else {
          bad(sec.items[k], "unknown action keyword " + key);
        }
      }
      d.actions.push_back(std::move(a));
    } else if (name == ":constants" || name == ":functions" || name == ":derived") {
      bad(sec, "section " + name + " is outside the supported subset");
    } else {
      bad(sec, "unknown domain section " + name);
    }
  }
  return d;
}

Problem build_problem(const SExpr& root) {
  Problem p;
  p.name = symbol(list(root.items[1], "(problem <name>)").items.at(1), "a problem name");
  for (std::size_t i = 2; i < root.items.size(); ++i) {
    const auto& sec = root.items[i];
    const auto name = section_name(sec);
    if (name == ":domain") {
      if (sec.items.size() != 2) bad(sec, "expected (:domain <name>)");
      p.domain = symbol(sec.items[1], "a domain name");
    } else if (name == ":requirements") {
      std::vector<std::string> ignored;
      check_requirements(sec, ignored);
    } else if (name == ":objects") {
      p.objects = parse_typed(sec, 1);
    } else if (name == ":init") {
      for (std::size_t k = 1; k < sec.items.size(); ++k) p.init.push_back(parse_atom(sec.items[k]));
    } else if (name == ":goal") {
      if (sec.items.size() != 2) bad(sec, "expected (:goal <formula>)");
      parse_formula(sec.items[1], p.goal, nullptr);
    } else {
      bad(sec, "unknown problem section " + name);
    }
  }
  return p;
}

}  // namespace

PddlDocument parse_pddl(std::string_view text) {
  const SExpr root = Reader(text).read_document();
  list(root, "(define ...)");
  if (root.items.size() < 2 || symbol(root.items[0], "define") != "define") bad(root, "expected (define ...)");
  const auto& head = list(root.items[1], "(domain|problem <name>)");
  if (head.items.size() != 2) bad(head, "expected (domain <name>) or (problem <name>)");
  const auto& kind = symbol(head.items[0], "domain or problem");
  if (kind == "domain") return build_domain(root);
  if (kind == "problem") return build_problem(root);
  bad(head.items[0], "expected 'domain' or 'problem'");
}

Domain parse_domain(std::string_view text) {
  auto doc = parse_pddl(text);
  if (!std::holds_alternative<Domain>(doc)) throw SyntaxError("expected a domain definition", 1, 1);
  return std::get<Domain>(std::move(doc));
}

Problem parse_problem(std::string_view text) {
  auto doc = parse_pddl(text);
  if (!std::holds_alternative<Problem>(doc)) throw SyntaxError("expected a problem definition", 1, 1);
  return std::get<Problem>(std::move(doc));
}

std::string format_plan(const Plan& plan) {
  std::string out;
  for (const auto& s : plan.steps) {
    out += "(" + s.name;
    for (const auto& a : s.args) out += " " + a;
    out += ")\n";
  }
  return out;
}

Plan parse_plan(std::string_view text) {
  Plan plan;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (auto c = line.find(';'); c != std::string::npos) line.erase(c);
    std::string lower;
    for (char ch : line) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    // Accept "(move a b)", "move(a,b)" and "0: (MOVE A B)" forms.
    if (auto colon = lower.find(':'); colon != std::string::npos && lower.find('(') > colon) lower.erase(0, colon + 1);
    for (char& ch : lower) {
      if (ch == '(' || ch == ')' || ch == ',') ch = ' ';
    }
    std::istringstream ws(lower);
    GroundAction a;
    if (!(ws >> a.name)) continue;
    std::string arg;
    while (ws >> arg) a.args.push_back(arg);
    plan.steps.push_back(std::move(a));
  }
  return plan;
}

}  // namespace tcar
