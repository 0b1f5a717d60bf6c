#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "termstat/jsonl.hpp"
#include "termstat/samples.hpp"

namespace termstat {

enum class Stage { term, status, one_stage };

std::string_view to_string(Stage stage);

/// Identifies which unit a request belongs to. Adapters that only read text
/// ignore it; the mock oracle answers from it.
struct RequestKey {
  Stage stage = Stage::term;
  std::string dialogue_id;
  std::size_t end_turn = 0;
  std::optional<std::string> term;
};

enum class DecodeStrategy { greedy };

struct GenerationRequest {
  std::string input_text;
  std::size_t max_new_tokens = 64;
  DecodeStrategy decode = DecodeStrategy::greedy;
  std::optional<RequestKey> key;
};

struct Hyperparams {
  double learning_rate = 2e-5;
  std::size_t warmup_steps = 1000;
  double weight_decay = 0.01;
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;

  /// Two-stage training setup: AdamW, lr 2e-5, 1000 warmup steps,
  /// weight decay 0.01, batch 32, 100 epochs.
  static Hyperparams two_stage(std::uint64_t seed);
  /// One-stage baseline: as two_stage but 300 epochs.
  static Hyperparams one_stage(std::uint64_t seed);

  void validate() const;
};

Json to_json(const Hyperparams& hp);
Hyperparams hyperparams_from_json(const Json& j, Hyperparams base);

/// Linear warmup to the peak rate, then linear decay to zero at total_steps.
class WarmupLinearSchedule {
 public:
  WarmupLinearSchedule(double peak, std::size_t warmup_steps, std::size_t total_steps);
  /// Rate for the 0-based optimizer step.
  double rate(std::size_t step) const;

 private:
  double peak_;
  std::size_t warmup_;
  std::size_t total_;
};

/// Adam with decoupled weight decay over a flat parameter vector.
class AdamW {
 public:
  explicit AdamW(std::size_t size, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(std::span<double> params, std::span<const double> grads, double lr,
            double weight_decay);
  std::size_t steps() const noexcept { return t_; }

 private:
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

struct OptimizerStep {
  std::size_t index = 0;
  double learning_rate = 0;
  double weight_decay = 0;
};

/// Text-in/text-out generation model. `generate` must be callable
/// concurrently; training mutates state and requires exclusive access.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string name() const = 0;
  virtual std::string generate(const GenerationRequest& request) const = 0;

  virtual bool trainable() const { return false; }
  /// Called once before the first train_step with every sample the run will
  /// see (vocabulary construction and the like).
  virtual void prepare_training(std::span<const Sample> samples) { (void)samples; }
  /// One optimizer update on the mean token-level negative log-likelihood of
  /// the batch targets. Returns that mean loss.
  virtual double train_step(std::span<const Sample* const> batch, const OptimizerStep& step);

  virtual void save(const std::filesystem::path& path) const = 0;
  virtual void load(const std::filesystem::path& path) = 0;

  /// Input length limit in the adapter's own units; nullopt means unbounded.
  virtual std::optional<std::size_t> max_input_length() const { return std::nullopt; }
  virtual std::size_t input_length(std::string_view text) const { return text.size(); }
};

struct EpochEnd {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double mean_loss = 0;
};

struct TrainOptions {
  MixPolicy mix = MixPolicy::joint_shuffle;
  std::string phase = "train";
  // Called after each epoch (validation, checkpoint selection, logging).
  std::function<void(const EpochEnd&)> on_epoch_end;
};

struct TrainResult {
  std::string phase;
  std::size_t sample_count = 0;
  std::size_t steps = 0;
  std::vector<double> losses;  // one per optimizer step
};

/// Runs hp.epochs epochs of seeded mini-batches (mix_batches with seed
/// hp.seed + epoch) under a warmup-linear schedule. Throws TrainingError on a
/// non-finite loss.
TrainResult train(Backend& backend, std::span<const Sample> samples, const Hyperparams& hp,
                  const TrainOptions& options = {});

struct ScheduleResult {
  std::vector<TrainResult> phases;
};

/// Low-resource schedule: train on in-domain plus term-only samples, then
/// fine-tune on in-domain samples only. With no term-only samples this is a
/// single phase. `finetune_hp` defaults to `hp`.
ScheduleResult low_resource_schedule(Backend& backend, std::span<const Sample> term_only,
                                     std::span<const Sample> in_domain, const Hyperparams& hp,
                                     const std::optional<Hyperparams>& finetune_hp = std::nullopt,
                                     const TrainOptions& options = {});

}  // namespace termstat
