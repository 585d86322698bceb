#include "tcar/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "tcar/error.hpp"

namespace tcar {

using nlohmann::json;

std::vector<std::string> task_label_alphabet() {
  std::vector<std::string> out = {kOutside};
  out.insert(out.end(), kTaskTypes.begin(), kTaskTypes.end());
  return out;
}

std::vector<std::string> argument_label_alphabet() {
  std::vector<std::string> out = {kOutside};
  out.insert(out.end(), kArgumentTypes.begin(), kArgumentTypes.end());
  return out;
}

bool is_task_type(const std::string& label) {
  return std::find(kTaskTypes.begin(), kTaskTypes.end(), label) != kTaskTypes.end();
}

const GoldSlot* GoldFrame::slot(const std::string& type) const {
  for (const auto& s : slots) {
    if (s.type == type) return &s;
  }
  return nullptr;
}

namespace {

json to_json(const AnnotatedInstruction& r) {
  json frames = json::array();
  for (const auto& f : r.frames) {
    json slots = json::array();
    for (const auto& s : f.slots) {
      slots.push_back({{"type", s.type}, {"entity", s.entity}, {"text", s.text}, {"mentioned", s.mentioned}});
    }
    frames.push_back({{"task", f.task_type}, {"slots", slots}});
  }
  json j;
  j["text"] = r.text;
  j["tokens"] = r.tokens;
  j["task_labels"] = r.task_labels;
  j["argument_labels"] = r.argument_labels;
  j["frames"] = frames;
  j["category"] = r.category;
  return j;
}

AnnotatedInstruction from_json(const json& j) {
  AnnotatedInstruction r;
  r.text = j.at("text").get<std::string>();
  r.tokens = j.at("tokens").get<std::vector<std::string>>();
  r.task_labels = j.at("task_labels").get<std::vector<std::string>>();
  r.argument_labels = j.at("argument_labels").get<std::vector<std::string>>();
  if (j.contains("frames")) {
    for (const auto& f : j.at("frames")) {
      GoldFrame g;
      g.task_type = f.at("task").get<std::string>();
      for (const auto& s : f.at("slots")) {
        g.slots.push_back({s.at("type").get<std::string>(), s.value("entity", std::string()),
                           s.value("text", std::string()), s.value("mentioned", true)});
      }
      r.frames.push_back(std::move(g));
    }
  }
  r.category = j.value("category", std::string());
  return r;
}

}  // namespace

std::vector<AnnotatedInstruction> parse_corpus(const std::string& text) {
  std::vector<AnnotatedInstruction> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto r = from_json(json::parse(line));
      if (r.tokens.empty() || r.tokens.size() != r.task_labels.size() ||
          r.tokens.size() != r.argument_labels.size()) {
        throw FormatError("corpus line " + std::to_string(lineno) + ": labels do not align with tokens");
      }
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw FormatError("corpus line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string format_corpus(const std::vector<AnnotatedInstruction>& corpus) {
  std::string out;
  for (const auto& r : corpus) out += to_json(r).dump() + "\n";
  return out;
}

std::vector<AnnotatedInstruction> load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_corpus(ss.str());
}

void save_corpus(const std::vector<AnnotatedInstruction>& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus: " + path);
  out << format_corpus(corpus);
}

std::vector<AnnotatedInstruction> import_conll(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotated file: " + path);
  auto strip_bio = [](std::string label) {
    if (label.size() > 2 && (label[0] == 'B' || label[0] == 'I') && label[1] == '-') label = label.substr(2);
    if (label == "O" || label == "_" || label == "-") label = kOutside;
    return label;
  };
  std::vector<AnnotatedInstruction> out;
  AnnotatedInstruction cur;
  auto flush = [&] {
    if (cur.tokens.empty()) return;
    for (std::size_t i = 0; i < cur.tokens.size(); ++i) cur.text += (i ? " " : "") + cur.tokens[i];
    cur.category = "imported";
    out.push_back(std::move(cur));
    cur = {};
  };
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    if (line[0] == '#') continue;
    std::vector<std::string> cols;
    std::istringstream ls(line);
    std::string c;
    while (std::getline(ls, c, '\t')) cols.push_back(c);
    if (cols.size() < 3) throw FormatError(path + ":" + std::to_string(lineno) + ": expected 3 tab-separated columns");
    cur.tokens.push_back(cols[0]);
    cur.task_labels.push_back(strip_bio(cols[1]));
    cur.argument_labels.push_back(strip_bio(cols[2]));
  }
  flush();
  return out;
}

void split_corpus(const std::vector<AnnotatedInstruction>& corpus, double train_fraction, unsigned long long seed,
                  std::vector<AnnotatedInstruction>& train, std::vector<AnnotatedInstruction>& test) {
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  const auto cut = static_cast<std::size_t>(train_fraction * static_cast<double>(corpus.size()) + 0.5);
  train.clear();
  test.clear();
  for (std::size_t k = 0; k < order.size(); ++k) (k < cut ? train : test).push_back(corpus[order[k]]);
}

}  // namespace tcar
