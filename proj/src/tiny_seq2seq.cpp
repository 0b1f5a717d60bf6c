#include "termstat/tiny_seq2seq.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include <Eigen/Dense>

#include "termstat/error.hpp"
#include "termstat/random.hpp"

namespace termstat {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

constexpr const char* kUnk = "<unk>";

bool is_word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80 || c == '_'; }

bool is_word_token(std::string_view tok) {
  return !tok.empty() && is_word_char(static_cast<unsigned char>(tok.front()));
}

}  // namespace

Json to_json(const TinySeq2SeqConfig& c) {
  return {{"embedding_dim", c.embedding_dim},
          {"hidden_dim", c.hidden_dim},
          {"bigram_buckets", c.bigram_buckets},
          {"max_skip", c.max_skip},
          {"max_input_tokens", c.max_input_tokens},
          {"init_scale", c.init_scale},
          {"seed", c.seed},
          {"sos", c.sos},
          {"sep", c.sep},
          {"separator", c.separator}};
}

TinySeq2SeqConfig tiny_config_from_json(const Json& j, TinySeq2SeqConfig c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("embedding_dim", c.embedding_dim);
  get("hidden_dim", c.hidden_dim);
  get("bigram_buckets", c.bigram_buckets);
  get("max_skip", c.max_skip);
  get("max_input_tokens", c.max_input_tokens);
  get("init_scale", c.init_scale);
  get("seed", c.seed);
  get("sos", c.sos);
  get("sep", c.sep);
  get("separator", c.separator);
  if (c.embedding_dim == 0 || c.hidden_dim == 0 || c.bigram_buckets == 0)
    throw ConfigError("tiny backend dimensions must be positive");
  return c;
}

std::vector<std::string> tiny_tokenize(std::string_view text, const TinySeq2SeqConfig& config) {
  std::vector<std::string> out;
  const std::string_view specials[] = {config.sos, config.sep, config.separator};
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    bool matched = false;
    for (std::string_view s : specials) {
      if (!s.empty() && text.substr(i, s.size()) == s) {
        out.emplace_back(s);
        i += s.size();
        matched = true;
        break;
      }
    }
    if (matched) continue;
    if (is_word_char(c)) {
      std::size_t j = i;
      while (j < text.size() && is_word_char(static_cast<unsigned char>(text[j]))) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else {
      out.emplace_back(1, text[i]);
      ++i;
    }
  }
  return out;
}

std::string tiny_detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && is_word_token(tokens[i - 1]) && is_word_token(tokens[i])) out += ' ';
    out += tokens[i];
  }
  return out;
}

// Offsets of each parameter block inside the flat parameter vector.
struct TinySeq2Seq::Layout {
  std::size_t d, h, features, outputs;
  std::size_t e_in, w1, b1, e_prev, e_hist, w_out, b_out, total;

  Layout(std::size_t dim, std::size_t hidden, std::size_t n_features, std::size_t n_outputs)
      : d(dim), h(hidden), features(n_features), outputs(n_outputs) {
    e_in = 0;
    w1 = e_in + features * d;
    b1 = w1 + h * d;
    e_prev = b1 + h;
    e_hist = e_prev + (outputs + 1) * h;  // last row of e_prev is the start token
    w_out = e_hist + outputs * h;
    b_out = w_out + outputs * h;
    total = b_out + outputs;
  }
  std::size_t bos() const { return outputs; }
};

TinySeq2Seq::TinySeq2Seq(TinySeq2SeqConfig config) : config_(std::move(config)) {}
TinySeq2Seq::~TinySeq2Seq() = default;

void TinySeq2Seq::build(std::vector<std::string> input_vocab,
                        std::vector<std::string> output_vocab) {
  input_vocab_ = std::move(input_vocab);
  output_vocab_ = std::move(output_vocab);
  input_index_.clear();
  output_index_.clear();
  for (std::size_t i = 0; i < input_vocab_.size(); ++i) input_index_[input_vocab_[i]] = i;
  for (std::size_t i = 0; i < output_vocab_.size(); ++i) output_index_[output_vocab_[i]] = i;
  layout_ = std::make_unique<Layout>(config_.embedding_dim, config_.hidden_dim,
                                     input_vocab_.size() + config_.bigram_buckets,
                                     output_vocab_.size());
  params_.assign(layout_->total, 0.0);
  grads_.assign(layout_->total, 0.0);
  optimizer_ = std::make_unique<AdamW>(layout_->total);
}

void TinySeq2Seq::prepare_training(std::span<const Sample> samples) {
  // Vocabulary is fixed by the first call; later phases reuse it.
  if (initialized()) return;
  std::set<std::string> in_tokens, out_tokens;
  for (const auto& s : samples) {
    for (auto& t : tiny_tokenize(s.input_text, config_)) in_tokens.insert(std::move(t));
    for (auto& t : tiny_tokenize(s.target_text, config_))
      if (t != config_.sos) out_tokens.insert(std::move(t));
  }
  out_tokens.insert(config_.sep);
  std::vector<std::string> in_vocab{kUnk};
  in_vocab.insert(in_vocab.end(), in_tokens.begin(), in_tokens.end());
  build(std::move(in_vocab), std::vector<std::string>(out_tokens.begin(), out_tokens.end()));

  Rng rng(config_.seed);
  for (double& p : params_) p = (2.0 * uniform_real(rng) - 1.0) * config_.init_scale;
  std::fill(params_.begin() + static_cast<std::ptrdiff_t>(layout_->b1),
            params_.begin() + static_cast<std::ptrdiff_t>(layout_->b1 + layout_->h), 0.0);
  std::fill(params_.begin() + static_cast<std::ptrdiff_t>(layout_->b_out), params_.end(), 0.0);
}

std::vector<std::size_t> TinySeq2Seq::features(std::string_view text) const {
  const auto tokens = tiny_tokenize(text, config_);
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto it = input_index_.find(t);
    ids.push_back(it == input_index_.end() ? 0 : it->second);
  }
  std::vector<std::size_t> out = ids;
  const std::size_t base = input_vocab_.size();
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t k = 1; k <= config_.max_skip && i + k < ids.size(); ++k) {
      std::uint64_t h = ids[i] * 0x9e3779b97f4a7c15ull ^ (ids[i + k] + 0x7f4a7c15ull) * 0xbf58476d1ce4e5b9ull;
      h ^= h >> 31;
      out.push_back(base + static_cast<std::size_t>(h % config_.bigram_buckets));
    }
  return out;
}

std::vector<std::size_t> TinySeq2Seq::target_ids(std::string_view text) const {
  auto tokens = tiny_tokenize(text, config_);
  if (!tokens.empty() && tokens.front() == config_.sos) tokens.erase(tokens.begin());
  if (tokens.empty() || tokens.back() != config_.sep) tokens.push_back(config_.sep);
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto it = output_index_.find(t);
    if (it == output_index_.end())
      throw BackendError("target token \"" + t + "\" is outside the output vocabulary");
    ids.push_back(it->second);
  }
  return ids;
}

std::size_t TinySeq2Seq::input_length(std::string_view text) const {
  return tiny_tokenize(text, config_).size();
}

double TinySeq2Seq::train_step(std::span<const Sample* const> batch, const OptimizerStep& step) {
  if (!initialized()) throw BackendError("tiny backend used before prepare_training");
  const Layout& L = *layout_;
  std::fill(grads_.begin(), grads_.end(), 0.0);

  ConstMatMap e_in(params_.data() + L.e_in, L.features, L.d);
  ConstMatMap w1(params_.data() + L.w1, L.h, L.d);
  ConstVecMap b1(params_.data() + L.b1, L.h);
  ConstMatMap e_prev(params_.data() + L.e_prev, L.outputs + 1, L.h);
  ConstMatMap e_hist(params_.data() + L.e_hist, L.outputs, L.h);
  ConstMatMap w_out(params_.data() + L.w_out, L.outputs, L.h);
  ConstVecMap b_out(params_.data() + L.b_out, L.outputs);

  MatMap g_e_in(grads_.data() + L.e_in, L.features, L.d);
  MatMap g_w1(grads_.data() + L.w1, L.h, L.d);
  VecMap g_b1(grads_.data() + L.b1, L.h);
  MatMap g_e_prev(grads_.data() + L.e_prev, L.outputs + 1, L.h);
  MatMap g_e_hist(grads_.data() + L.e_hist, L.outputs, L.h);
  MatMap g_w_out(grads_.data() + L.w_out, L.outputs, L.h);
  VecMap g_b_out(grads_.data() + L.b_out, L.outputs);

  double total_loss = 0;
  std::size_t total_tokens = 0;
  Eigen::VectorXd enc(L.d), a0(L.h), hist_sum(L.h), pre(L.h), hid(L.h), logits(L.outputs),
      dz(L.outputs), dpre(L.h), da0(L.h);

  for (const Sample* sample : batch) {
    const auto feats = features(sample->input_text);
    const auto targets = target_ids(sample->target_text);
    enc.setZero();
    for (std::size_t f : feats) enc += e_in.row(static_cast<Eigen::Index>(f)).transpose();
    if (!feats.empty()) enc /= static_cast<double>(feats.size());
    a0 = w1 * enc + b1;
    hist_sum.setZero();
    da0.setZero();

    std::size_t prev = L.bos();
    for (std::size_t t = 0; t < targets.size(); ++t) {
      pre = a0 + e_prev.row(static_cast<Eigen::Index>(prev)).transpose();
      if (t > 0) pre += hist_sum / static_cast<double>(t);
      hid = pre.array().tanh();
      logits = w_out * hid + b_out;
      const double max_logit = logits.maxCoeff();
      dz = (logits.array() - max_logit).exp();
      const double z = dz.sum();
      dz /= z;
      const auto y = static_cast<Eigen::Index>(targets[t]);
      total_loss += -std::log(std::max(dz(y), 1e-300));
      dz(y) -= 1.0;

      g_w_out.noalias() += dz * hid.transpose();
      g_b_out += dz;
      dpre = (w_out.transpose() * dz).array() * (1.0 - hid.array().square());
      g_e_prev.row(static_cast<Eigen::Index>(prev)) += dpre.transpose();
      if (t > 0) {
        const double share = 1.0 / static_cast<double>(t);
        for (std::size_t k = 0; k < t; ++k)
          g_e_hist.row(static_cast<Eigen::Index>(targets[k])) += share * dpre.transpose();
      }
      da0 += dpre;

      hist_sum += e_hist.row(y).transpose();
      prev = targets[t];
    }
    total_tokens += targets.size();

    g_b1 += da0;
    g_w1.noalias() += da0 * enc.transpose();
    if (!feats.empty()) {
      const Eigen::VectorXd denc = (w1.transpose() * da0) / static_cast<double>(feats.size());
      for (std::size_t f : feats) g_e_in.row(static_cast<Eigen::Index>(f)) += denc.transpose();
    }
  }

  if (total_tokens == 0) return 0.0;
  const double scale = 1.0 / static_cast<double>(total_tokens);
  for (double& g : grads_) g *= scale;
  optimizer_->step(params_, grads_, step.learning_rate, step.weight_decay);
  return total_loss * scale;
}

std::string TinySeq2Seq::generate(const GenerationRequest& request) const {
  if (!initialized()) throw BackendError("tiny backend has no trained parameters");
  const Layout& L = *layout_;
  ConstMatMap e_in(params_.data() + L.e_in, L.features, L.d);
  ConstMatMap w1(params_.data() + L.w1, L.h, L.d);
  ConstVecMap b1(params_.data() + L.b1, L.h);
  ConstMatMap e_prev(params_.data() + L.e_prev, L.outputs + 1, L.h);
  ConstMatMap e_hist(params_.data() + L.e_hist, L.outputs, L.h);
  ConstMatMap w_out(params_.data() + L.w_out, L.outputs, L.h);
  ConstVecMap b_out(params_.data() + L.b_out, L.outputs);

  const auto feats = features(request.input_text);
  Eigen::VectorXd enc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.d));
  for (std::size_t f : feats) enc += e_in.row(static_cast<Eigen::Index>(f)).transpose();
  if (!feats.empty()) enc /= static_cast<double>(feats.size());
  const Eigen::VectorXd a0 = w1 * enc + b1;
  Eigen::VectorXd hist_sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.h));

  const std::size_t eos = output_index_.at(config_.sep);
  std::vector<std::string> tokens;
  std::size_t prev = L.bos();
  for (std::size_t t = 0; t < request.max_new_tokens; ++t) {
    Eigen::VectorXd pre = a0 + e_prev.row(static_cast<Eigen::Index>(prev)).transpose();
    if (t > 0) pre += hist_sum / static_cast<double>(t);
    const Eigen::VectorXd logits = w_out * pre.array().tanh().matrix() + b_out;
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    const auto next = static_cast<std::size_t>(best);
    if (next == eos) break;
    tokens.push_back(output_vocab_[next]);
    hist_sum += e_hist.row(best).transpose();
    prev = next;
  }
  return config_.sos + tiny_detokenize(tokens) + config_.sep;
}

void TinySeq2Seq::save(const std::filesystem::path& path) const {
  if (!initialized()) throw BackendError("cannot save an untrained tiny backend");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw BackendError("cannot write " + path.string());
  const Json header = {{"backend", name()},
                       {"config", to_json(config_)},
                       {"input_vocab", input_vocab_},
                       {"output_vocab", output_vocab_},
                       {"parameters", params_.size()}};
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(params_.data()),
            static_cast<std::streamsize>(params_.size() * sizeof(double)));
  if (!out) throw BackendError("failed writing " + path.string());
}

void TinySeq2Seq::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BackendError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  Json header;
  try {
    header = Json::parse(line);
  } catch (const Json::exception& e) {
    throw BackendError(path.string() + ": malformed checkpoint header");
  }
  if (header.value("backend", "") != name())
    throw BackendError(path.string() + " is not a tiny-backend checkpoint");
  config_ = tiny_config_from_json(header.at("config"), config_);
  build(header.at("input_vocab").get<std::vector<std::string>>(),
        header.at("output_vocab").get<std::vector<std::string>>());
  if (header.at("parameters").get<std::size_t>() != params_.size())
    throw BackendError(path.string() + ": parameter count does not match the vocabulary");
  in.read(reinterpret_cast<char*>(params_.data()),
          static_cast<std::streamsize>(params_.size() * sizeof(double)));
  if (!in) throw BackendError(path.string() + ": truncated parameter block");
}

}  // namespace termstat
