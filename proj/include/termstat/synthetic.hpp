#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "termstat/corpus.hpp"
#include "termstat/schema.hpp"

namespace termstat {

/// Schema with `categories` categories (symptom, test, surgery, other info,
/// then "category N"), each holding
/// `terms_per_category` terms and `statuses_per_category` statuses.
Schema synthetic_schema(std::size_t categories, std::size_t terms_per_category,
                        std::size_t statuses_per_category);

struct SyntheticCorpusSpec {
  std::size_t dialogues = 50;
  // Exact number of merged turns over the corpus; when unset each dialogue
  // draws its length from [min_turns, max_turns].
  std::optional<std::size_t> total_turns;
  std::size_t min_turns = 3;
  std::size_t max_turns = 12;
  // Probability that a turn carries annotations.
  double annotation_rate = 0.5;
  std::size_t max_events_per_turn = 2;
  // Probability that an annotation re-states an earlier term with a new status.
  double change_rate = 0.2;
  // Probability that a turn is written as two same-speaker sentences.
  double split_rate = 0.2;
  // Annotate at least one turn in every `window_size` consecutive turns, so no
  // window has empty gold.
  bool annotate_every_window = false;
  std::size_t window_size = kDefaultWindowSize;
  std::uint64_t seed = 0;
};

/// Raw dialogues (adjacent same-speaker sentences not yet merged) whose text
/// mentions each annotated term next to its status.
std::vector<Dialogue> synthetic_corpus(const Schema& schema, const SyntheticCorpusSpec& spec);

}  // namespace termstat
