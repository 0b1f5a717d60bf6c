#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "termstat/corpus.hpp"
#include "termstat/jsonl.hpp"
#include "termstat/schema.hpp"

namespace termstat {

/// Everything needed to render model inputs and targets. Rendering is a pure
/// function of (turns, term, schema, config).
struct PromptConfig {
  std::string term_prompt = "the mentioned medical terms";
  // Slots: {category}, {term}, {candidates}. {candidates} must come last so
  // the not-mentioned variant only differs by a suffix.
  std::string status_template =
      "{category}: {term}'s status. Status candidates: {candidates}";
  std::string patient_tag = "Patient";
  std::string doctor_tag = "Doctor";
  std::map<std::string, std::string> category_display;
  std::string not_mentioned = "not mentioned";
  bool include_not_mentioned = false;
  std::string sos = "[SOS]";
  std::string sep = "[SEP]";
  std::string separator = ",";
  // Delimiter between candidates in the status prompt.
  std::string candidate_joiner = ", ";
  // Delimiter between term and status in the one-stage target.
  std::string pair_delimiter = ": ";
  // Wrap stage-2 targets in sos/sep like stage-1 targets.
  bool status_target_sentinels = true;

  /// Defaults taken from the schema's locale strings, separator and sentinels.
  static PromptConfig from_schema(const Schema& schema);

  /// Throws ConfigError if the config disagrees with the schema's separator
  /// or sentinels, or the template lacks a required slot.
  void validate(const Schema& schema) const;

  const std::string& display_category(const std::string& category) const;
};

Json to_json(const PromptConfig& config);
/// Fields absent from `j` keep the values in `base`.
PromptConfig prompt_config_from_json(const Json& j, PromptConfig base);

/// "Patient: ... Doctor: ..." with single-space joins.
std::string render_dialogue(std::span<const Turn> turns, const PromptConfig& config);

std::string build_term_input(std::span<const Turn> turns, const PromptConfig& config);
std::string build_term_input(const Window& window, const PromptConfig& config);

/// The rendered knowledge-enhanced prompt for a term, without dialogue text.
std::string render_status_prompt(std::string_view term, const Schema& schema,
                                 const PromptConfig& config);
std::string build_status_input(std::span<const Turn> turns, std::string_view term,
                               const Schema& schema, const PromptConfig& config);
std::string build_status_input(const Window& window, std::string_view term, const Schema& schema,
                               const PromptConfig& config);

std::string serialize_terms(std::span<const std::string> terms, const PromptConfig& config);

enum class TermParsePolicy { strict, keep_unknown };

std::string_view to_string(TermParsePolicy policy);
TermParsePolicy parse_term_policy(std::string_view text);

struct TermParse {
  std::vector<std::string> terms;
  std::size_t unknown_count = 0;
};

/// Total: never throws on model output. Strips sentinels, splits on the
/// separator, trims, drops empties and repeats (first occurrence wins).
TermParse parse_terms(std::string_view text, const Schema& schema, TermParsePolicy policy,
                      const PromptConfig& config);

/// Stage-2 target for a status.
std::string serialize_status(std::string_view status, const PromptConfig& config);

/// The candidate equal to the cleaned text, or nullopt (invalid). Never coerces.
std::optional<std::string> parse_status(std::string_view text,
                                        std::span<const std::string> candidates,
                                        const PromptConfig& config);

/// One-stage baseline target: sos + "term: status" items + sep.
std::string serialize_pairs_one_stage(std::span<const TermStatusPair> pairs,
                                      const PromptConfig& config);

/// Status value used for pairs whose generated status left the candidate set.
/// Never equal to any schema status (schemas reject control characters).
inline const std::string kInvalidStatus = "\x01invalid";

inline bool is_invalid(const TermStatusPair& pair) { return pair.status == kInvalidStatus; }

struct PairParse {
  std::vector<TermStatusPair> pairs;
  std::size_t unknown_term_count = 0;
  std::size_t invalid_status_count = 0;
  std::size_t malformed_fragment_count = 0;
};

/// Inverse of serialize_pairs_one_stage. Fragments lacking the pair delimiter
/// are dropped; statuses outside the term's candidates become kInvalidStatus;
/// a repeated term keeps its first occurrence.
PairParse parse_pairs_one_stage(std::string_view text, const Schema& schema,
                                TermParsePolicy policy, const PromptConfig& config);

}  // namespace termstat
