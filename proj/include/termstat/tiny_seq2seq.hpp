#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "termstat/backend.hpp"

namespace termstat {

struct TinySeq2SeqConfig {
  std::size_t embedding_dim = 48;
  std::size_t hidden_dim = 128;
  // Hashed skip-bigram buckets (token pairs at distance 1..max_skip).
  std::size_t bigram_buckets = 4096;
  std::size_t max_skip = 3;
  std::size_t max_input_tokens = 512;
  double init_scale = 0.1;
  std::uint64_t seed = 0;
  std::string sos = "[SOS]";
  std::string sep = "[SEP]";
  std::string separator = ",";
};

Json to_json(const TinySeq2SeqConfig& c);
TinySeq2SeqConfig tiny_config_from_json(const Json& j, TinySeq2SeqConfig base);

/// Whitespace/punctuation tokenizer that keeps the sentinel and separator
/// strings as single tokens.
std::vector<std::string> tiny_tokenize(std::string_view text, const TinySeq2SeqConfig& config);
/// Joins tokens with a space only between two word tokens.
std::string tiny_detokenize(const std::vector<std::string>& tokens);

/// Small trainable encoder-decoder used for smoke tests and offline demos.
///
/// Encoder: mean of unigram and hashed skip-bigram embeddings. Decoder: one
/// tanh layer over the encoding, the previous output token and the mean of
/// all earlier output tokens, then a softmax over the target vocabulary.
/// Trained with token-level negative log-likelihood and AdamW.
class TinySeq2Seq final : public Backend {
 public:
  explicit TinySeq2Seq(TinySeq2SeqConfig config = {});
  ~TinySeq2Seq() override;

  std::string name() const override { return "tiny"; }
  std::string generate(const GenerationRequest& request) const override;

  bool trainable() const override { return true; }
  void prepare_training(std::span<const Sample> samples) override;
  double train_step(std::span<const Sample* const> batch, const OptimizerStep& step) override;

  void save(const std::filesystem::path& path) const override;
  void load(const std::filesystem::path& path) override;

  std::optional<std::size_t> max_input_length() const override {
    return config_.max_input_tokens;
  }
  std::size_t input_length(std::string_view text) const override;

  bool initialized() const noexcept { return !params_.empty(); }
  std::size_t parameter_count() const noexcept { return params_.size(); }

 private:
  struct Layout;

  void build(std::vector<std::string> input_vocab, std::vector<std::string> output_vocab);
  std::vector<std::size_t> features(std::string_view text) const;
  std::vector<std::size_t> target_ids(std::string_view text) const;

  TinySeq2SeqConfig config_;
  std::vector<std::string> input_vocab_;
  std::vector<std::string> output_vocab_;
  std::unordered_map<std::string, std::size_t> input_index_;
  std::unordered_map<std::string, std::size_t> output_index_;
  std::unique_ptr<Layout> layout_;
  std::vector<double> params_;
  std::vector<double> grads_;
  std::unique_ptr<AdamW> optimizer_;
};

}  // namespace termstat
