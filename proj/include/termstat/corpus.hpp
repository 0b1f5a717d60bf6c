#pragma once

#include <compare>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "termstat/jsonl.hpp"
#include "termstat/schema.hpp"

namespace termstat {

inline constexpr std::size_t kDefaultWindowSize = 5;

enum class Speaker { patient, doctor };

std::string_view to_string(Speaker speaker);
Speaker parse_speaker(std::string_view text);

struct Turn {
  Speaker speaker = Speaker::patient;
  std::string text;
  std::size_t index = 0;

  bool operator==(const Turn&) const = default;
};

struct TermStatusPair {
  std::string term;
  std::string status;

  auto operator<=>(const TermStatusPair&) const = default;
};

/// One gold annotation: `term` has `status` as of turn `turn`.
struct AnnotationEvent {
  std::size_t turn = 0;
  std::string term;
  std::string status;

  bool operator==(const AnnotationEvent&) const = default;
};

struct Dialogue {
  std::string id;
  std::vector<Turn> turns;
  // Chronological: ordered by turn, file order within a turn.
  std::vector<AnnotationEvent> events;
};

struct WindowKey {
  std::string dialogue_id;
  std::size_t end_turn = 0;

  auto operator<=>(const WindowKey&) const = default;
};

std::string to_string(const WindowKey& key);

/// Trailing slice of up to `window_size` turns ending at `end_turn`.
struct Window {
  std::string dialogue_id;
  std::size_t end_turn = 0;
  std::vector<Turn> turns;
  // One status per term, ordered by first mention within the window
  // (ties broken by schema order).
  std::optional<std::vector<TermStatusPair>> gold;

  WindowKey key() const { return {dialogue_id, end_turn}; }
  std::size_t start_turn() const { return turns.empty() ? end_turn : turns.front().index; }
};

/// Collapses whitespace runs to single spaces and trims both ends.
std::string normalize_whitespace(std::string_view text);

/// Reads the line-delimited corpus format
/// `{"id", "turns": [{"speaker", "text"}], "annotations": [{"turn", "term", "status"}]}`.
/// Annotation statuses are validated against the term's category candidates.
std::vector<Dialogue> ingest_dialogues(std::istream& in, const Schema& schema);
std::vector<Dialogue> ingest_dialogues_file(const std::filesystem::path& path,
                                            const Schema& schema);
Json dialogue_to_json(const Dialogue& dialogue);

/// Concatenates consecutive same-speaker turns (single-space joiner) and
/// re-indexes annotation events onto the merged turns.
Dialogue merge_adjacent_turns(const Dialogue& dialogue);

/// One window per turn; window k holds turns max(0, k - window_size + 1)..k.
/// Gold per window is the latest status per term over the included turns.
std::vector<Window> windowize(const Dialogue& dialogue, const Schema& schema,
                              std::size_t window_size = kDefaultWindowSize);

/// Last status per term, in order of each term's first event.
std::vector<TermStatusPair> reduce_latest_status(std::span<const TermStatusPair> events);

/// Drops exact duplicate pairs, keeping first occurrences in order.
std::vector<TermStatusPair> dedup_pairs(std::span<const TermStatusPair> pairs);

/// Events of the dialogue whose turn lies in [first_turn, last_turn].
std::vector<TermStatusPair> events_in_span(const Dialogue& dialogue, std::size_t first_turn,
                                           std::size_t last_turn);

/// Dialogue-level gold: latest status per term over all turns.
std::vector<TermStatusPair> dialogue_gold(const Dialogue& dialogue);

/// Full preprocessing chain: merge, windowize, latest-status reduction, dedup.
std::vector<Window> prepare_windows(std::span<const Dialogue> dialogues, const Schema& schema,
                                    std::size_t window_size = kDefaultWindowSize);

// Pre-windowed file `{dialogue_id, end_turn, turns, gold}`.
Json window_to_json(const Window& window);
Window window_from_json(const Json& record);
void write_windows(std::ostream& out, std::span<const Window> windows);
std::vector<Window> read_windows(std::istream& in);

/// Record from a corpus annotated with terms only (no statuses).
struct TermOnlyRecord {
  std::string source_id;
  std::size_t end_turn = 0;
  std::vector<Turn> turns;
  std::vector<std::string> terms;
};

/// Reads `{"id", "turns", "annotations": [{"turn", "term"}]}` records, merges
/// turns and windowizes them with the same trailing-window rule as labeled
/// data. Terms need not belong to the schema but must not contain the
/// separator or sentinel strings.
std::vector<TermOnlyRecord> ingest_term_only(std::istream& in, const Schema& schema,
                                             std::size_t window_size = kDefaultWindowSize);

}  // namespace termstat
