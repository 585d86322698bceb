#include "tcar/interpreter.hpp"

#include <algorithm>

#include "tcar/error.hpp"

namespace tcar {

namespace {

int reference_class(const std::string& type) {
  if (type == "object" || type == "device") return 0;
  if (type == "source-location" || type == "goal-location" || type == "search-area") return 1;
  if (type == "person") return 2;
  return 3;
}

std::vector<std::string> gold_task_labels_checked(const AnnotatedInstruction& r) {
  for (const auto& l : r.task_labels) {
    if (l != kOutside && !is_task_type(l)) throw UnknownLabelError("unknown task label: " + l);
  }
  return r.task_labels;
}

}  // namespace

bool is_pronoun_lemma(const std::string& lemma) {
  return lemma == "it" || lemma == "them" || lemma == "that" || lemma == "this" || lemma == "those" ||
         lemma == "these" || lemma == "one";
}

bool ArgumentValue::is_pronoun() const { return is_pronoun_lemma(lemma); }

const ArgumentValue* TaskFrame::argument(const std::string& type) const {
  auto it = arguments.find(type);
  return it == arguments.end() ? nullptr : &it->second;
}

std::vector<std::string> task_association(const std::vector<std::string>& task_labels) {
  const std::size_t n = task_labels.size();
  std::vector<std::string> g(n, kNullAssociation);
  std::string next;  // nearest task label to the right
  for (std::size_t i = n; i-- > 0;) {
    if (is_task_type(task_labels[i])) {
      next = task_labels[i];
      continue;
    }
    if (!next.empty()) g[i] = next;
  }
  std::string prev;
  for (std::size_t i = 0; i < n; ++i) {
    if (is_task_type(task_labels[i])) {
      prev = task_labels[i];
    } else if (g[i] == kNullAssociation && !prev.empty()) {
      g[i] = prev;
    }
  }
  return g;
}

std::vector<FeatureVector> argument_features(const std::vector<FeatureVector>& base,
                                             const std::vector<std::string>& task_labels,
                                             const TokenSequence& tokens) {
  if (base.size() != task_labels.size() || base.size() != tokens.size()) {
    throw LengthMismatchError("task labels (" + std::to_string(task_labels.size()) + ") do not match tokens (" +
                              std::to_string(tokens.size()) + ")");
  }
  const auto g = task_association(task_labels);
  std::vector<FeatureVector> out = base;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].features.push_back({"g=" + g[i], 1.0});
    out[i].features.push_back({"g|w[0]=" + g[i] + "|" + tokens[i].lemma, 1.0});
  }
  return out;
}

std::vector<ClauseSpan> split_multi_task(const TokenSequence& tokens, const std::vector<std::string>& task_labels) {
  if (tokens.size() != task_labels.size()) throw LengthMismatchError("task labels do not match tokens");
  std::vector<ClauseSpan> spans;
  for (std::size_t i = 0; i < task_labels.size(); ++i) {
    if (!is_task_type(task_labels[i])) continue;
    if (i > 0 && task_labels[i - 1] == task_labels[i]) continue;  // same verb group
    spans.push_back({{i, 0}, i, task_labels[i]});
  }
  for (std::size_t k = 0; k < spans.size(); ++k) {
    if (k == 0) spans[k].span.begin = 0;
    spans[k].span.end = k + 1 < spans.size() ? spans[k + 1].verb : tokens.size();
  }
  return spans;
}

std::map<std::string, ArgumentValue> collect_arguments(const TokenSequence& tokens,
                                                       const std::vector<std::string>& argument_labels, Span span) {
  std::map<std::string, ArgumentValue> out;
  std::size_t i = span.begin;
  while (i < span.end) {
    const std::string& label = argument_labels[i];
    if (label == kOutside) {
      ++i;
      continue;
    }
    std::size_t j = i;
    ArgumentValue v;
    while (j < span.end && argument_labels[j] == label) {
      if (j > i) {
        v.surface += ' ';
        v.lemma += ' ';
      }
      v.surface += tokens[j].surface;
      v.lemma += tokens[j].lemma;
      ++j;
    }
    v.span = {i, j};
    out.emplace(label, std::move(v));
    i = j;
  }
  return out;
}

std::vector<TaskFrame> resolve_coreference(std::vector<TaskFrame> frames, const std::vector<TaskFrame>& history) {
  // Latest compatible non-pronoun value in `frame` starting before `limit`.
  auto latest = [](const TaskFrame& frame, const std::string& type, std::size_t limit) -> const ArgumentValue* {
    const ArgumentValue* best = nullptr;
    for (const auto& [t, v] : frame.arguments) {
      if (v.is_pronoun() || reference_class(t) != reference_class(type) || v.span.begin >= limit) continue;
      if (!best || v.span.begin > best->span.begin) best = &v;
    }
    return best;
  };

  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (auto& [type, value] : frames[f].arguments) {
      if (!value.is_pronoun()) continue;
      const ArgumentValue* ante = latest(frames[f], type, value.span.begin);
      for (std::size_t e = f; !ante && e-- > 0;) ante = latest(frames[e], type, SIZE_MAX);
      for (std::size_t h = history.size(); !ante && h-- > 0;) ante = latest(history[h], type, SIZE_MAX);
      if (!ante) continue;
      ArgumentValue resolved = *ante;
      resolved.resolved_from = value.surface;
      resolved.span = value.span;
      value = std::move(resolved);
      frames[f].entities.erase(type);
    }
  }
  return frames;
}

TokenSequence analyze_tokens(const Analyzer& analyzer, const std::vector<std::string>& surfaces) {
  TokenSequence toks;
  toks.reserve(surfaces.size());
  for (std::size_t i = 0; i < surfaces.size(); ++i) {
    Token t;
    t.surface = surfaces[i];
    t.index = i;
    toks.push_back(std::move(t));
  }
  return analyzer.analyze(std::move(toks));
}

TaskInterpreter::TaskInterpreter(const Analyzer* analyzer, Featurizer featurizer, InterpreterModels models)
    : analyzer_(analyzer), featurizer_(featurizer), models_(std::move(models)) {}

TokenSequence TaskInterpreter::analyze(std::string_view utterance) const { return analyzer_->analyze(utterance); }

LabeledSequence TaskInterpreter::predict_task_types(const TokenSequence& tokens) const {
  if (models_.task.empty()) throw ModelNotLoadedError("task-type model is not loaded");
  return decode(models_.task, featurizer_.featurize_all(tokens));
}

LabeledSequence TaskInterpreter::extract_arguments(const TokenSequence& tokens,
                                                   const std::vector<std::string>& task_labels) const {
  if (models_.argument.empty()) throw ModelNotLoadedError("argument model is not loaded");
  const auto items = argument_features(featurizer_.featurize_all(tokens), task_labels, tokens);
  return decode(models_.argument, items);
}

ArgumentEvidence TaskInterpreter::predict_arguments_taskfree(const TokenSequence& tokens) const {
  ArgumentEvidence ev;
  if (tokens.empty()) return ev;
  if (models_.argument_free.empty()) throw ModelNotLoadedError("argument-only model is not loaded");
  const auto seq = decode(models_.argument_free, featurizer_.featurize_all(tokens));
  for (const auto& l : seq.labels) {
    if (l != kOutside) ev.types_present.insert(l);
  }
  return ev;
}

Interpretation TaskInterpreter::interpret(const TokenSequence& tokens) const {
  Interpretation out;
  out.tokens = tokens;
  out.task = predict_task_types(tokens);
  out.arguments = extract_arguments(tokens, out.task.labels);
  for (const auto& cs : split_multi_task(tokens, out.task.labels)) {
    TaskFrame f;
    f.task_type = cs.task_type;
    f.confidence = out.task.confidence;
    f.source_span = cs.span;
    f.arguments = collect_arguments(tokens, out.arguments.labels, cs.span);
    out.frames.push_back(std::move(f));
  }
  return out;
}

TaskFrame TaskInterpreter::frame_for_hypothesis(const TokenSequence& tokens,
                                                const std::vector<std::string>& task_labels,
                                                const std::string& task_type, double confidence) const {
  std::vector<std::string> forced = task_labels;
  bool any = false;
  for (auto& l : forced) {
    if (is_task_type(l)) {
      l = task_type;
      any = true;
    }
  }
  if (!any && !forced.empty()) {
    std::size_t v = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i].pos == Pos::Verb) {
        v = i;
        break;
      }
    }
    forced[v] = task_type;
  }
  const auto args = extract_arguments(tokens, forced);
  TaskFrame f;
  f.task_type = task_type;
  f.confidence = confidence;
  f.source_span = {0, tokens.size()};
  f.arguments = collect_arguments(tokens, args.labels, f.source_span);
  return f;
}

InterpreterTrainingSets build_training_sets(const std::vector<AnnotatedInstruction>& corpus,
                                            const Analyzer& analyzer, const Featurizer& featurizer) {
  InterpreterTrainingSets sets;
  for (const auto& r : corpus) {
    const auto tokens = analyze_tokens(analyzer, r.tokens);
    const auto base = featurizer.featurize_all(tokens);
    sets.task.push_back({base, gold_task_labels_checked(r)});
    sets.argument.push_back({argument_features(base, r.task_labels, tokens), r.argument_labels});
    sets.argument_free.push_back({base, r.argument_labels});
  }
  return sets;
}

InterpreterModels train_interpreter(const std::vector<AnnotatedInstruction>& corpus, const Analyzer& analyzer,
                                    const Featurizer& featurizer, const CrfHyperParams& hyper) {
  const auto sets = build_training_sets(corpus, analyzer, featurizer);
  InterpreterModels m;
  m.task = train_crf(sets.task, task_label_alphabet(), featurizer.version(), hyper);
  m.argument = train_crf(sets.argument, argument_label_alphabet(), featurizer.version(), hyper);
  m.argument_free = train_crf(sets.argument_free, argument_label_alphabet(), featurizer.version(), hyper);
  return m;
}

std::vector<EvidenceRecord> evidence_from_corpus(const std::vector<AnnotatedInstruction>& corpus) {
  std::vector<EvidenceRecord> out;
  for (const auto& r : corpus) {
    if (!r.frames.empty()) {
      for (const auto& f : r.frames) {
        EvidenceRecord e{f.task_type, {}};
        for (const auto& s : f.slots) {
          if (s.mentioned) e.argument_types.insert(s.type);
        }
        out.push_back(std::move(e));
      }
      continue;
    }
    TokenSequence toks(r.tokens.size());
    for (const auto& cs : split_multi_task(toks, r.task_labels)) {
      EvidenceRecord e{cs.task_type, {}};
      for (std::size_t i = cs.span.begin; i < cs.span.end; ++i) {
        if (r.argument_labels[i] != kOutside) e.argument_types.insert(r.argument_labels[i]);
      }
      out.push_back(std::move(e));
    }
  }
  return out;
}

LabelScores score_labels(const std::vector<std::vector<std::string>>& gold,
                         const std::vector<std::vector<std::string>>& predicted) {
  if (gold.size() != predicted.size()) throw LengthMismatchError("gold and predicted corpora differ in size");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].size() != predicted[s].size()) throw LengthMismatchError("label sequence length mismatch");
    for (std::size_t i = 0; i < gold[s].size(); ++i) {
      const auto& g = gold[s][i];
      const auto& p = predicted[s][i];
      if (g == p) {
        if (g != kOutside) ++tp;
        continue;
      }
      if (p != kOutside) ++fp;
      if (g != kOutside) ++fn;
    }
  }
  LabelScores sc;
  sc.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  sc.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  sc.f1 = sc.precision + sc.recall > 0 ? 2 * sc.precision * sc.recall / (sc.precision + sc.recall) : 0.0;
  return sc;
}

InterpreterMetrics evaluate_interpreter(const TaskInterpreter& interpreter,
                                        const std::vector<AnnotatedInstruction>& test) {
  std::vector<std::vector<std::string>> gold_t, pred_t, gold_a, pred_a, pred_f;
  for (const auto& r : test) {
    const auto tokens = analyze_tokens(interpreter.analyzer(), r.tokens);
    gold_t.push_back(r.task_labels);
    pred_t.push_back(interpreter.predict_task_types(tokens).labels);
    gold_a.push_back(r.argument_labels);
    pred_a.push_back(interpreter.extract_arguments(tokens, r.task_labels).labels);
    pred_f.push_back(decode(interpreter.models().argument_free, interpreter.featurizer().featurize_all(tokens)).labels);
  }
  return {score_labels(gold_t, pred_t), score_labels(gold_a, pred_a), score_labels(gold_a, pred_f)};
}

}  // namespace tcar
