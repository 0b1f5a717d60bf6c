#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "termstat/backend.hpp"
#include "termstat/evaluation.hpp"
#include "termstat/jsonl.hpp"
#include "termstat/pipeline.hpp"
#include "termstat/prompting.hpp"
#include "termstat/samples.hpp"

namespace termstat {

enum class TrainingMode { full_data, low_resource };

std::string_view to_string(TrainingMode mode);
TrainingMode parse_training_mode(std::string_view text);

struct BackendConfig {
  // "oracle" or "tiny".
  std::string name = "oracle";
  // Oracle: {"corruption": {...}}. Tiny: model dimensions.
  Json options = Json::object();
};

struct EvalOptions {
  bool by_category = false;
  bool by_term_count = false;
  bool changed_status = false;
  std::vector<TermCountBucket> buckets = default_term_count_buckets();
};

/// Everything a command needs. Serialized verbatim into every manifest.
struct RunConfig {
  std::filesystem::path schema;
  std::vector<std::filesystem::path> corpus;
  std::filesystem::path windows;
  std::filesystem::path samples;
  std::filesystem::path valid_windows;
  std::filesystem::path predictions;
  std::filesystem::path checkpoint;
  std::filesystem::path output_dir = "out";
  std::optional<std::uint64_t> seed;
  std::size_t window_size = kDefaultWindowSize;
  // Overrides applied on top of the schema's locale strings.
  Json prompt = Json::object();
  ExtractionConfig extraction;
  AugmentConfig augment;
  TrainingMode training_mode = TrainingMode::full_data;
  MixPolicy mix = MixPolicy::joint_shuffle;
  std::optional<Hyperparams> hyperparams;
  std::optional<Hyperparams> finetune_hyperparams;
  BackendConfig backend;
  EvalOptions eval;

  /// Throws ConfigError when the seed is missing.
  std::uint64_t require_seed() const;
  /// Mode preset (two_stage or one_stage) unless overridden.
  Hyperparams resolved_hyperparams() const;
};

Json to_json(const RunConfig& config);
RunConfig run_config_from_json(const Json& j);
RunConfig load_run_config(const std::filesystem::path& path);

PromptConfig resolve_prompts(const RunConfig& config, const Schema& schema);

struct PrepareStats {
  std::size_t dialogues = 0;
  std::size_t windows = 0;
  std::size_t terms = 0;
  std::size_t statuses = 0;
  std::size_t term_samples = 0;
  std::size_t status_samples = 0;
  std::size_t negative_samples = 0;
  std::size_t term_only_samples = 0;

  /// "dialogues=1120 windows=18212 terms=71 statuses=18"
  std::string summary_line() const;
};

Json to_json(const PrepareStats& stats);

/// merge -> windowize -> latest-status -> dedup -> samples (+ augmentation).
/// Writes windows.jsonl, samples.jsonl, term_only_samples.jsonl (when
/// term-only sources are configured), stats.json and manifest.json.
PrepareStats cmd_prepare(const RunConfig& config, std::ostream& log);

struct TrainSummary {
  std::vector<TrainResult> phases;
  std::filesystem::path checkpoint;
  std::optional<double> best_valid_f1;
  std::optional<std::size_t> best_epoch;
};

/// Full-data: one training run; low-resource: mixed then fine-tune phases.
/// Keeps the checkpoint with the best window-level full F1 on valid_windows
/// when given, else the final state. Writes checkpoint, loss.jsonl, manifest.
TrainSummary cmd_train(const RunConfig& config, std::ostream& log);

/// Writes predictions.jsonl and manifest.json. Failed windows are listed in
/// the manifest.
CorpusExtraction cmd_predict(const RunConfig& config, std::ostream& log);

struct EvaluationSummary {
  EvalReport window_term, window_full, dialogue_term, dialogue_full;
  Diagnostics diagnostics;
  Json report;
};

/// Scores predictions against the raw gold corpus at window and dialogue
/// level in both modes; adds requested breakdowns. Writes report.json.
EvaluationSummary cmd_evaluate(const RunConfig& config, std::ostream& log);

/// Breakdown-only evaluation (category, term count, changed-status subset).
Json cmd_analyze(const RunConfig& config, std::ostream& log);

/// Builds the backend named in the config. `windows` feeds the oracle.
std::unique_ptr<Backend> make_backend(const RunConfig& config, const Schema& schema,
                                      const PromptConfig& prompts,
                                      std::span<const Window> windows);

}  // namespace termstat
