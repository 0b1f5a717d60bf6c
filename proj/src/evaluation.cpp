#include "termstat/evaluation.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include "termstat/error.hpp"
#include "termstat/prompting.hpp"

namespace termstat {

std::string_view to_string(EvalMode mode) { return mode == EvalMode::term ? "term" : "full"; }

std::string_view to_string(EvalLevel level) {
  return level == EvalLevel::window ? "window" : "dialogue";
}

std::string_view to_string(Aggregation strategy) {
  return strategy == Aggregation::per_window_mean ? "per_window_mean" : "pooled_micro";
}

Aggregation parse_aggregation(std::string_view text) {
  if (text == "per_window_mean") return Aggregation::per_window_mean;
  if (text == "pooled_micro") return Aggregation::pooled_micro;
  throw ConfigError("unknown aggregation \"" + std::string(text) + "\"");
}

Prf prf_from_counts(const Counts& c) {
  Prf out;
  const std::size_t predicted = c.tp + c.fp;
  const std::size_t actual = c.tp + c.fn;
  out.precision = predicted == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(predicted);
  out.recall = actual == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(actual);
  const double denom = out.precision + out.recall;
  out.f1 = denom == 0 ? 0.0 : 2.0 * out.precision * out.recall / denom;
  return out;
}

namespace {

// Projected unit: terms only in term mode, exact pairs in full mode.
std::set<std::pair<std::string, std::string>> project(std::span<const TermStatusPair> pairs,
                                                      EvalMode mode) {
  std::set<std::pair<std::string, std::string>> out;
  for (const auto& p : pairs) out.emplace(p.term, mode == EvalMode::term ? "" : p.status);
  return out;
}

}  // namespace

UnitScore score_unit(std::span<const TermStatusPair> pred, std::span<const TermStatusPair> gold,
                     EvalMode mode) {
  UnitScore out;
  const auto p = project(pred, mode);
  const auto g = project(gold, mode);
  out.gold_empty = g.empty();
  out.pred_empty = p.empty();
  for (const auto& item : p) (g.count(item) ? out.counts.tp : out.counts.fp)++;
  out.counts.fn = g.size() - out.counts.tp;
  if (g.empty()) {
    const double v = p.empty() ? 1.0 : 0.0;
    out.prf = {v, v, v};
  } else {
    out.prf = prf_from_counts(out.counts);
  }
  return out;
}

Prf score_window(std::span<const TermStatusPair> pred, std::span<const TermStatusPair> gold,
                 EvalMode mode) {
  return score_unit(pred, gold, mode).prf;
}

EvalReport aggregate_windows(std::span<const UnitScore> units, Aggregation strategy,
                             EvalLevel level, EvalMode mode) {
  if (units.empty()) throw std::invalid_argument("cannot aggregate an empty list of units");
  EvalReport r;
  r.level = level;
  r.mode = mode;
  r.strategy = strategy;
  r.n_units = units.size();
  Prf sum;
  for (const auto& u : units) {
    sum.precision += u.prf.precision;
    sum.recall += u.prf.recall;
    sum.f1 += u.prf.f1;
    r.total += u.counts;
    if (u.gold_empty) {
      ++r.n_empty_gold;
      if (u.pred_empty) ++r.n_empty_gold_correct;
    } else {
      r.pooled += u.counts;
    }
  }
  if (strategy == Aggregation::per_window_mean) {
    const double n = static_cast<double>(units.size());
    r.prf = {sum.precision / n, sum.recall / n, sum.f1 / n};
  } else if (r.n_empty_gold == r.n_units) {
    // No unit with gold to pool; fall back to the empty rule.
    const double v = static_cast<double>(r.n_empty_gold_correct) / static_cast<double>(r.n_units);
    r.prf = {v, v, v};
  } else {
    r.prf = prf_from_counts(r.pooled);
  }
  return r;
}

std::vector<AlignedWindow> align(std::span<const ExtractionResult> predictions,
                                 std::span<const Window> windows) {
  std::map<WindowKey, const ExtractionResult*> by_key;
  std::vector<std::string> problems;
  for (const auto& p : predictions)
    if (!by_key.emplace(p.key, &p).second) problems.push_back("duplicate " + to_string(p.key));

  std::vector<AlignedWindow> out;
  out.reserve(windows.size());
  std::set<WindowKey> used;
  for (const auto& w : windows) {
    auto it = by_key.find(w.key());
    if (it == by_key.end()) {
      problems.push_back("missing prediction for " + to_string(w.key()));
      continue;
    }
    if (!w.gold) throw ValidationError("window " + to_string(w.key()) + " has no gold");
    used.insert(w.key());
    out.push_back({w.key(), it->second->pairs, *w.gold});
  }
  for (const auto& [key, _] : by_key)
    if (!used.count(key)) problems.push_back("prediction for unknown window " + to_string(key));

  if (!problems.empty()) {
    std::string msg = "predictions and gold do not align (" + std::to_string(problems.size()) +
                      " problems):";
    for (std::size_t i = 0; i < problems.size() && i < 20; ++i) msg += "\n  " + problems[i];
    if (problems.size() > 20) msg += "\n  ...";
    throw ValidationError(msg);
  }
  return out;
}

EvalReport score_window_level(std::span<const AlignedWindow> aligned, EvalMode mode,
                              Aggregation strategy) {
  std::vector<UnitScore> units;
  units.reserve(aligned.size());
  for (const auto& a : aligned) units.push_back(score_unit(a.pred, a.gold, mode));
  return aggregate_windows(units, strategy, EvalLevel::window, mode);
}

std::vector<TermStatusPair> merge_dialogue(std::span<const ExtractionResult> results) {
  std::vector<TermStatusPair> out;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& r : results)
    for (const auto& p : r.pairs) {
      auto [it, inserted] = slot.try_emplace(p.term, out.size());
      if (inserted)
        out.push_back(p);
      else
        out[it->second].status = p.status;
    }
  return out;
}

EvalReport score_dialogue_level(std::span<const ExtractionResult> predictions,
                                std::span<const Dialogue> gold, EvalMode mode,
                                Aggregation strategy) {
  std::map<std::string, std::vector<ExtractionResult>> grouped;
  for (const auto& p : predictions) grouped[p.key.dialogue_id].push_back(p);

  std::set<std::string> gold_ids;
  for (const auto& d : gold) gold_ids.insert(d.id);
  for (const auto& [id, _] : grouped)
    if (!gold_ids.count(id))
      throw ValidationError("predictions for dialogue \"" + id + "\" which is not in the gold corpus");

  std::vector<UnitScore> units;
  units.reserve(gold.size());
  for (const auto& d : gold) {
    std::vector<TermStatusPair> merged;
    if (auto it = grouped.find(d.id); it != grouped.end()) {
      auto& results = it->second;
      std::stable_sort(results.begin(), results.end(), [](const auto& a, const auto& b) {
        return a.key.end_turn < b.key.end_turn;
      });
      merged = merge_dialogue(results);
    }
    units.push_back(score_unit(merged, dialogue_gold(d), mode));
  }
  return aggregate_windows(units, strategy, EvalLevel::dialogue, mode);
}

std::map<std::string, EvalReport> breakdown_by_category(std::span<const AlignedWindow> aligned,
                                                        const Schema& schema, EvalMode mode) {
  std::map<std::string, std::vector<UnitScore>> units;
  for (const auto& cat : schema.categories()) units[cat.name];

  auto restrict = [&](std::span<const TermStatusPair> pairs, const std::string& category) {
    std::vector<TermStatusPair> out;
    for (const auto& p : pairs)
      if (schema.has_term(p.term) && schema.category_of(p.term) == category) out.push_back(p);
    return out;
  };

  for (const auto& a : aligned)
    for (const auto& cat : schema.categories()) {
      const auto pred = restrict(a.pred, cat.name);
      const auto gold = restrict(a.gold, cat.name);
      if (pred.empty() && gold.empty()) continue;
      units[cat.name].push_back(score_unit(pred, gold, mode));
    }

  std::map<std::string, EvalReport> out;
  for (const auto& [name, scores] : units) {
    if (scores.empty()) {
      EvalReport r;
      r.mode = mode;
      r.empty = true;
      out[name] = r;
    } else {
      out[name] = aggregate_windows(scores, Aggregation::per_window_mean, EvalLevel::window, mode);
    }
  }
  return out;
}

std::string TermCountBucket::label() const {
  if (hi && *hi == lo) return "num=" + std::to_string(lo);
  if (!hi) return "num>=" + std::to_string(lo);
  return std::to_string(lo) + "<=num<=" + std::to_string(*hi);
}

std::vector<TermCountBucket> default_term_count_buckets() {
  return {{0, 0}, {1, 4}, {5, std::nullopt}};
}

std::map<std::string, EvalReport> breakdown_by_term_count(std::span<const AlignedWindow> aligned,
                                                          std::span<const TermCountBucket> buckets,
                                                          EvalMode mode) {
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    const auto& a = buckets[i];
    if (a.hi && *a.hi < a.lo) throw ConfigError("bucket " + a.label() + " is empty");
    for (std::size_t j = i + 1; j < buckets.size(); ++j) {
      const auto& b = buckets[j];
      const bool disjoint = (a.hi && *a.hi < b.lo) || (b.hi && *b.hi < a.lo);
      if (!disjoint)
        throw ConfigError("term-count buckets " + a.label() + " and " + b.label() + " overlap");
    }
  }

  std::vector<std::vector<UnitScore>> units(buckets.size());
  for (const auto& a : aligned) {
    std::set<std::string_view> terms;
    for (const auto& p : a.gold) terms.insert(p.term);
    for (std::size_t i = 0; i < buckets.size(); ++i)
      if (buckets[i].contains(terms.size())) {
        units[i].push_back(score_unit(a.pred, a.gold, mode));
        break;
      }
  }

  std::map<std::string, EvalReport> out;
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    if (units[i].empty()) {
      EvalReport r;
      r.mode = mode;
      r.empty = true;
      out[buckets[i].label()] = r;
    } else {
      out[buckets[i].label()] =
          aggregate_windows(units[i], Aggregation::per_window_mean, EvalLevel::window, mode);
    }
  }
  return out;
}

std::vector<WindowKey> filter_changed_status(std::span<const Dialogue> dialogues,
                                             std::size_t window_size) {
  if (window_size == 0) throw ConfigError("window size must be positive");
  std::vector<WindowKey> out;
  for (const auto& raw : dialogues) {
    const Dialogue d = merge_adjacent_turns(raw);
    for (std::size_t k = 0; k < d.turns.size(); ++k) {
      const std::size_t first = k + 1 >= window_size ? k + 1 - window_size : 0;
      std::map<std::string_view, std::set<std::string_view>> statuses;
      bool changed = false;
      for (const auto& ev : d.events) {
        if (ev.turn < first || ev.turn > k) continue;
        auto& seen = statuses[ev.term];
        seen.insert(ev.status);
        if (seen.size() >= 2) {
          changed = true;
          break;
        }
      }
      if (changed) out.push_back({d.id, k});
    }
  }
  return out;
}

Json to_json(const Prf& prf) {
  return {{"precision", prf.precision}, {"recall", prf.recall}, {"f1", prf.f1}};
}

Json to_json(const EvalReport& r) {
  Json j = {{"level", to_string(r.level)},
            {"mode", to_string(r.mode)},
            {"aggregation", to_string(r.strategy)},
            {"n_units", r.n_units},
            {"empty", r.empty}};
  if (!r.empty) {
    j["precision"] = r.prf.precision;
    j["recall"] = r.prf.recall;
    j["f1"] = r.prf.f1;
    j["pooled"] = {{"tp", r.pooled.tp}, {"fp", r.pooled.fp}, {"fn", r.pooled.fn}};
    j["total"] = {{"tp", r.total.tp}, {"fp", r.total.fp}, {"fn", r.total.fn}};
    j["n_empty_gold"] = r.n_empty_gold;
    j["n_empty_gold_correct"] = r.n_empty_gold_correct;
  }
  return j;
}

}  // namespace termstat
