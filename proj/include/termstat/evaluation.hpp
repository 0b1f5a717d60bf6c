#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "termstat/corpus.hpp"
#include "termstat/jsonl.hpp"
#include "termstat/pipeline.hpp"
#include "termstat/schema.hpp"

namespace termstat {

enum class EvalMode { term, full };
enum class EvalLevel { window, dialogue };
enum class Aggregation { per_window_mean, pooled_micro };

std::string_view to_string(EvalMode mode);
std::string_view to_string(EvalLevel level);
std::string_view to_string(Aggregation strategy);
Aggregation parse_aggregation(std::string_view text);

struct Prf {
  double precision = 0;
  double recall = 0;
  double f1 = 0;

  bool operator==(const Prf&) const = default;
};

struct Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool operator==(const Counts&) const = default;
};

/// Precision/recall/F1 from raw counts (0 for empty denominators).
Prf prf_from_counts(const Counts& c);

/// Score of one unit (window or dialogue) together with its raw counts.
struct UnitScore {
  Prf prf;
  Counts counts;
  bool gold_empty = false;
  bool pred_empty = false;
};

/// Empty gold scores (1,1,1) against an empty prediction and (0,0,0)
/// otherwise. Term mode compares deduplicated term sets; full mode compares
/// exact (term, status) pairs, so invalid statuses never match.
UnitScore score_unit(std::span<const TermStatusPair> pred, std::span<const TermStatusPair> gold,
                     EvalMode mode);
Prf score_window(std::span<const TermStatusPair> pred, std::span<const TermStatusPair> gold,
                 EvalMode mode);

struct EvalReport {
  EvalLevel level = EvalLevel::window;
  EvalMode mode = EvalMode::full;
  Aggregation strategy = Aggregation::per_window_mean;
  Prf prf;
  std::size_t n_units = 0;
  // Pooled over units with non-empty gold.
  Counts pooled;
  // Summed over every unit, empty gold included.
  Counts total;
  std::size_t n_empty_gold = 0;
  std::size_t n_empty_gold_correct = 0;
  // Set for breakdown slices that contain no scorable unit.
  bool empty = false;
};

/// per_window_mean averages unit scores; pooled_micro pools counts over
/// units with non-empty gold and reports empty-gold units as separate
/// counts. Throws std::invalid_argument on an empty list.
EvalReport aggregate_windows(std::span<const UnitScore> units, Aggregation strategy,
                             EvalLevel level = EvalLevel::window, EvalMode mode = EvalMode::full);

/// Window predictions paired with their gold.
struct AlignedWindow {
  WindowKey key;
  std::vector<TermStatusPair> pred;
  std::vector<TermStatusPair> gold;
};

/// Pairs predictions with windows by key. Throws ValidationError listing
/// missing or unexpected keys.
std::vector<AlignedWindow> align(std::span<const ExtractionResult> predictions,
                                 std::span<const Window> windows);

EvalReport score_window_level(std::span<const AlignedWindow> aligned, EvalMode mode,
                              Aggregation strategy = Aggregation::per_window_mean);

/// Later windows overwrite earlier statuses per term. Input ordered by end_turn.
std::vector<TermStatusPair> merge_dialogue(std::span<const ExtractionResult> results);

/// Merges predictions per dialogue and scores them against the latest-status
/// gold over all turns. Dialogues without predictions count as empty
/// predictions; predictions for a dialogue not in `gold` raise ValidationError.
EvalReport score_dialogue_level(std::span<const ExtractionResult> predictions,
                                std::span<const Dialogue> gold, EvalMode mode,
                                Aggregation strategy = Aggregation::per_window_mean);

/// Per-category scores. Units whose category-restricted gold and prediction
/// are both empty are left out of that category. Terms outside the schema
/// are ignored.
std::map<std::string, EvalReport> breakdown_by_category(std::span<const AlignedWindow> aligned,
                                                        const Schema& schema, EvalMode mode);

struct TermCountBucket {
  std::size_t lo = 0;
  std::optional<std::size_t> hi;  // inclusive; nullopt = unbounded

  bool contains(std::size_t n) const { return n >= lo && (!hi || n <= *hi); }
  std::string label() const;
};

/// {0}, {1..4}, {5..}
std::vector<TermCountBucket> default_term_count_buckets();

/// Windows bucketed by the number of gold terms. Throws ConfigError on
/// overlapping buckets.
std::map<std::string, EvalReport> breakdown_by_term_count(std::span<const AlignedWindow> aligned,
                                                          std::span<const TermCountBucket> buckets,
                                                          EvalMode mode);

/// Windows that contain a term annotated with at least two different
/// statuses within the window's turn span. Dialogues are merged first.
std::vector<WindowKey> filter_changed_status(std::span<const Dialogue> dialogues,
                                             std::size_t window_size = kDefaultWindowSize);

Json to_json(const Prf& prf);
Json to_json(const EvalReport& report);

}  // namespace termstat
