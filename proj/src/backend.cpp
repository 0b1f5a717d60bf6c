#include "termstat/backend.hpp"

#include <cmath>
#include <numeric>

#include "termstat/error.hpp"

namespace termstat {

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::term:
      return "term";
    case Stage::status:
      return "status";
    case Stage::one_stage:
      return "one_stage";
  }
  return "?";
}

Hyperparams Hyperparams::two_stage(std::uint64_t seed) {
  Hyperparams hp;
  hp.seed = seed;
  return hp;
}

Hyperparams Hyperparams::one_stage(std::uint64_t seed) {
  Hyperparams hp = two_stage(seed);
  hp.epochs = 300;
  return hp;
}

void Hyperparams::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be non-negative");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
}

Json to_json(const Hyperparams& hp) {
  return {{"learning_rate", hp.learning_rate}, {"warmup_steps", hp.warmup_steps},
          {"weight_decay", hp.weight_decay},   {"batch_size", hp.batch_size},
          {"epochs", hp.epochs},               {"seed", hp.seed}};
}

Hyperparams hyperparams_from_json(const Json& j, Hyperparams hp) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("learning_rate", hp.learning_rate);
  get("warmup_steps", hp.warmup_steps);
  get("weight_decay", hp.weight_decay);
  get("batch_size", hp.batch_size);
  get("epochs", hp.epochs);
  get("seed", hp.seed);
  return hp;
}

WarmupLinearSchedule::WarmupLinearSchedule(double peak, std::size_t warmup_steps,
                                           std::size_t total_steps)
    : peak_(peak), warmup_(warmup_steps), total_(total_steps) {}

double WarmupLinearSchedule::rate(std::size_t step) const {
  if (step < warmup_)
    return peak_ * static_cast<double>(step + 1) / static_cast<double>(warmup_);
  if (total_ <= warmup_) return peak_;
  const double remaining = static_cast<double>(total_ - std::min(step, total_)) /
                           static_cast<double>(total_ - warmup_);
  return peak_ * remaining;
}

AdamW::AdamW(std::size_t size, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(size, 0.0), v_(size, 0.0) {}

void AdamW::step(std::span<double> params, std::span<const double> grads, double lr,
                 double weight_decay) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i] * grads[i];
    const double m_hat = m_[i] / c1;
    const double v_hat = v_[i] / c2;
    params[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps_) + weight_decay * params[i]);
  }
}

double Backend::train_step(std::span<const Sample* const>, const OptimizerStep&) {
  throw BackendError("backend \"" + name() + "\" does not support training");
}

TrainResult train(Backend& backend, std::span<const Sample> samples, const Hyperparams& hp,
                  const TrainOptions& options) {
  hp.validate();
  if (!backend.trainable())
    throw BackendError("backend \"" + backend.name() + "\" does not support training");
  TrainResult result;
  result.phase = options.phase;
  result.sample_count = samples.size();
  if (samples.empty()) return result;

  const std::size_t per_epoch = (samples.size() + hp.batch_size - 1) / hp.batch_size;
  const WarmupLinearSchedule schedule(hp.learning_rate, hp.warmup_steps, per_epoch * hp.epochs);
  backend.prepare_training(samples);

  std::vector<const Sample*> batch;
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    const auto plan = mix_batches(samples, hp.batch_size, hp.seed + epoch, options.mix);
    double epoch_loss = 0;
    for (const auto& indices : plan) {
      batch.clear();
      for (std::size_t i : indices) batch.push_back(&samples[i]);
      const OptimizerStep step{result.steps, schedule.rate(result.steps), hp.weight_decay};
      const double loss = backend.train_step(batch, step);
      if (!std::isfinite(loss))
        throw TrainingError(options.phase + ": non-finite loss", result.steps);
      result.losses.push_back(loss);
      epoch_loss += loss;
      ++result.steps;
    }
    if (options.on_epoch_end)
      options.on_epoch_end({epoch, result.steps, epoch_loss / static_cast<double>(plan.size())});
  }
  return result;
}

ScheduleResult low_resource_schedule(Backend& backend, std::span<const Sample> term_only,
                                     std::span<const Sample> in_domain, const Hyperparams& hp,
                                     const std::optional<Hyperparams>& finetune_hp,
                                     const TrainOptions& options) {
  ScheduleResult out;
  TrainOptions phase_options = options;
  if (term_only.empty()) {
    phase_options.phase = "finetune";
    out.phases.push_back(train(backend, in_domain, finetune_hp.value_or(hp), phase_options));
    return out;
  }
  std::vector<Sample> mixed(in_domain.begin(), in_domain.end());
  mixed.insert(mixed.end(), term_only.begin(), term_only.end());
  phase_options.phase = "mixed";
  out.phases.push_back(train(backend, mixed, hp, phase_options));
  phase_options.phase = "finetune";
  out.phases.push_back(train(backend, in_domain, finetune_hp.value_or(hp), phase_options));
  return out;
}

}  // namespace termstat
