#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "termstat/backend.hpp"
#include "termstat/corpus.hpp"
#include "termstat/prompting.hpp"
#include "termstat/schema.hpp"

namespace termstat {

enum class ExtractionMode { two_stage, one_stage };

std::string_view to_string(ExtractionMode mode);
ExtractionMode parse_extraction_mode(std::string_view text);

struct ExtractionConfig {
  ExtractionMode mode = ExtractionMode::two_stage;
  TermParsePolicy term_parse_policy = TermParsePolicy::strict;
  // Ignored in one-stage mode.
  bool include_not_mentioned = false;
  std::size_t max_new_tokens_terms = 128;
  std::size_t max_new_tokens_status = 16;
  std::size_t max_new_tokens_pairs = 192;
  bool drop_not_mentioned = true;
  // Bound on concurrent windows in extract_corpus.
  std::size_t workers = 1;
};

Json to_json(const ExtractionConfig& c);
ExtractionConfig extraction_config_from_json(const Json& j, ExtractionConfig base);

struct Diagnostics {
  std::size_t unknown_term_count = 0;
  std::size_t invalid_status_count = 0;
  std::size_t dropped_not_mentioned_count = 0;
  std::size_t malformed_fragment_count = 0;

  Diagnostics& operator+=(const Diagnostics& other);
  std::size_t total() const;
  bool operator==(const Diagnostics&) const = default;
};

Json to_json(const Diagnostics& d);

struct ExtractionResult {
  WindowKey key;
  // At most one status per term; kInvalidStatus marks a failed stage-2 answer.
  std::vector<TermStatusPair> pairs;
  Diagnostics diagnostics;
};

/// Stage 1 generates the term list; stage 2 generates a status per distinct
/// parsed term from its knowledge-enhanced prompt.
ExtractionResult extract_two_stage(const Window& window, const Backend& backend,
                                   const Schema& schema, const ExtractionConfig& config,
                                   const PromptConfig& prompts);

/// Single generation of "term: status" pairs.
ExtractionResult extract_one_stage(const Window& window, const Backend& backend,
                                   const Schema& schema, const ExtractionConfig& config,
                                   const PromptConfig& prompts);

ExtractionResult extract(const Window& window, const Backend& backend, const Schema& schema,
                         const ExtractionConfig& config, const PromptConfig& prompts);

struct ExtractionFailure {
  WindowKey key;
  std::string message;
};

struct CorpusExtraction {
  std::vector<ExtractionResult> results;  // input order, failures omitted
  std::vector<ExtractionFailure> failures;
  Diagnostics totals;
};

/// Runs extraction over every window with up to config.workers windows in
/// flight. A failing window is recorded and the run continues.
CorpusExtraction extract_corpus(std::span<const Window> windows, const Backend& backend,
                                const Schema& schema, const ExtractionConfig& config,
                                const PromptConfig& prompts);

/// Drops whole turns from the front until `build(turns)` fits the backend's
/// input limit. The last turn is always kept.
std::span<const Turn> fit_turns(std::span<const Turn> turns, const Backend& backend,
                                const std::function<std::string(std::span<const Turn>)>& build);

// Predictions file: `{dialogue_id, end_turn, pairs: [{term, status}], diagnostics}`,
// with status null for invalid answers.
Json result_to_json(const ExtractionResult& result);
ExtractionResult result_from_json(const Json& record);
void write_predictions(std::ostream& out, std::span<const ExtractionResult> results);
std::vector<ExtractionResult> read_predictions(std::istream& in);

}  // namespace termstat
