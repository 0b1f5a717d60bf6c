#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "termstat/corpus.hpp"
#include "termstat/jsonl.hpp"
#include "termstat/prompting.hpp"
#include "termstat/schema.hpp"

namespace termstat {

enum class Task { term_generation, status_generation };

std::string_view to_string(Task task);
Task parse_task(std::string_view text);

struct SampleMeta {
  std::string dialogue_id;
  std::size_t end_turn = 0;
  std::optional<std::string> term;

  bool operator==(const SampleMeta&) const = default;
};

/// A task-tagged (input, target) training pair.
struct Sample {
  Task task = Task::term_generation;
  std::string input_text;
  std::string target_text;
  SampleMeta meta;

  bool operator==(const Sample&) const = default;
};

/// How many "not mentioned" negatives to draw per window: either a fixed
/// count or a multiple of the window's positive count.
struct NegativeRate {
  enum class Kind { count, ratio };
  Kind kind = Kind::ratio;
  double value = 1.0;

  std::size_t for_positives(std::size_t positives) const;
};

struct AugmentConfig {
  NegativeRate negatives;
  std::uint64_t rng_seed = 0;
  std::vector<std::string> term_only_sources;
  // Upper bound on term-only samples mixed into the first low-resource phase.
  std::optional<std::size_t> term_only_cap;
};

Json to_json(const AugmentConfig& config);
AugmentConfig augment_config_from_json(const Json& j, AugmentConfig base);

/// One stage-1 sample per window; target lists gold terms in window order.
std::vector<Sample> build_term_samples(std::span<const Window> windows,
                                       const PromptConfig& config);

/// One stage-2 sample per gold pair.
std::vector<Sample> build_status_samples(std::span<const Window> windows, const Schema& schema,
                                         const PromptConfig& config);

/// One-stage baseline samples: same input as stage 1, target is the
/// "term: status" pair list.
std::vector<Sample> build_one_stage_samples(std::span<const Window> windows,
                                            const PromptConfig& config);

/// Stage-1 samples from term-only records; never produces stage-2 samples.
std::vector<Sample> augment_term_only(std::span<const TermOnlyRecord> records,
                                      const PromptConfig& config);

/// Draws terms uniformly without replacement from the schema terms absent
/// from the window's gold and emits stage-2 samples targeting the
/// not-mentioned status. Seeded per window, so results do not depend on the
/// order windows are visited. Requires config.include_not_mentioned.
std::vector<Sample> sample_not_mentioned_negatives(const Window& window, const Schema& schema,
                                                   const AugmentConfig& augment,
                                                   const PromptConfig& config);

enum class MixPolicy { joint_shuffle, alternating };

std::string_view to_string(MixPolicy policy);
MixPolicy parse_mix_policy(std::string_view text);

/// One epoch of batches as indices into the sample list. `joint_shuffle`
/// shuffles all samples together; `alternating` shuffles each task
/// separately and alternates task-pure batches while both last.
std::vector<std::vector<std::size_t>> mix_batches(std::span<const Sample> samples,
                                                  std::size_t batch_size, std::uint64_t seed,
                                                  MixPolicy policy = MixPolicy::joint_shuffle);

Json sample_to_json(const Sample& sample);
Sample sample_from_json(const Json& record);
void write_samples(std::ostream& out, std::span<const Sample> samples);
std::vector<Sample> read_samples(std::istream& in);

}  // namespace termstat
