#include "termstat/samples.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>

#include "termstat/error.hpp"
#include "termstat/random.hpp"

namespace termstat {

std::string_view to_string(Task task) {
  return task == Task::term_generation ? "term_generation" : "status_generation";
}

Task parse_task(std::string_view text) {
  if (text == "term_generation") return Task::term_generation;
  if (text == "status_generation") return Task::status_generation;
  throw ParseError("unknown task \"" + std::string(text) + "\"");
}

std::size_t NegativeRate::for_positives(std::size_t positives) const {
  if (value < 0) throw ConfigError("negative sampling rate must be non-negative");
  if (kind == Kind::count) return static_cast<std::size_t>(value);
  return static_cast<std::size_t>(std::llround(value * static_cast<double>(positives)));
}

Json to_json(const AugmentConfig& c) {
  Json j = {{"negatives",
             {{"kind", c.negatives.kind == NegativeRate::Kind::count ? "count" : "ratio"},
              {"value", c.negatives.value}}},
            {"rng_seed", c.rng_seed},
            {"term_only_sources", c.term_only_sources}};
  j["term_only_cap"] = c.term_only_cap ? Json(*c.term_only_cap) : Json(nullptr);
  return j;
}

AugmentConfig augment_config_from_json(const Json& j, AugmentConfig c) {
  if (j.contains("negatives")) {
    const Json& n = j.at("negatives");
    if (n.contains("kind")) {
      const auto kind = n.at("kind").get<std::string>();
      if (kind == "count")
        c.negatives.kind = NegativeRate::Kind::count;
      else if (kind == "ratio")
        c.negatives.kind = NegativeRate::Kind::ratio;
      else
        throw ConfigError("negatives.kind must be \"count\" or \"ratio\"");
    }
    if (n.contains("value")) c.negatives.value = n.at("value").get<double>();
  }
  if (j.contains("rng_seed")) c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  if (j.contains("term_only_sources"))
    c.term_only_sources = j.at("term_only_sources").get<std::vector<std::string>>();
  if (j.contains("term_only_cap")) {
    const Json& cap = j.at("term_only_cap");
    c.term_only_cap = cap.is_null() ? std::nullopt : std::optional(cap.get<std::size_t>());
  }
  return c;
}

namespace {

const std::vector<TermStatusPair>& gold_of(const Window& w) {
  if (!w.gold)
    throw std::invalid_argument("window " + to_string(w.key()) + " carries no gold annotation");
  return *w.gold;
}

}  // namespace

std::vector<Sample> build_term_samples(std::span<const Window> windows,
                                       const PromptConfig& config) {
  std::vector<Sample> out;
  out.reserve(windows.size());
  for (const Window& w : windows) {
    std::vector<std::string> terms;
    for (const auto& p : gold_of(w)) terms.push_back(p.term);
    out.push_back({Task::term_generation, build_term_input(w, config),
                   serialize_terms(terms, config), {w.dialogue_id, w.end_turn, std::nullopt}});
  }
  return out;
}

std::vector<Sample> build_status_samples(std::span<const Window> windows, const Schema& schema,
                                         const PromptConfig& config) {
  std::vector<Sample> out;
  for (const Window& w : windows)
    for (const auto& p : gold_of(w))
      out.push_back({Task::status_generation, build_status_input(w, p.term, schema, config),
                     serialize_status(p.status, config), {w.dialogue_id, w.end_turn, p.term}});
  return out;
}

std::vector<Sample> build_one_stage_samples(std::span<const Window> windows,
                                            const PromptConfig& config) {
  std::vector<Sample> out;
  out.reserve(windows.size());
  for (const Window& w : windows)
    out.push_back({Task::term_generation, build_term_input(w, config),
                   serialize_pairs_one_stage(gold_of(w), config),
                   {w.dialogue_id, w.end_turn, std::nullopt}});
  return out;
}

std::vector<Sample> augment_term_only(std::span<const TermOnlyRecord> records,
                                      const PromptConfig& config) {
  std::vector<Sample> out;
  out.reserve(records.size());
  for (const auto& r : records)
    out.push_back({Task::term_generation, build_term_input(r.turns, config),
                   serialize_terms(r.terms, config), {r.source_id, r.end_turn, std::nullopt}});
  return out;
}

std::vector<Sample> sample_not_mentioned_negatives(const Window& window, const Schema& schema,
                                                   const AugmentConfig& augment,
                                                   const PromptConfig& config) {
  if (!config.include_not_mentioned)
    throw std::invalid_argument("not-mentioned negatives require include_not_mentioned");
  const auto& gold = gold_of(window);
  std::set<std::string_view> gold_terms;
  for (const auto& p : gold) gold_terms.insert(p.term);

  std::vector<std::string> pool;
  for (const auto& t : schema.terms())
    if (!gold_terms.count(t)) pool.push_back(t);

  const std::size_t k = std::min(augment.negatives.for_positives(gold.size()), pool.size());
  std::vector<Sample> out;
  if (k == 0) return out;

  // Partial Fisher-Yates: the first k slots are a uniform draw without
  // replacement.
  Rng rng(mix_seed(augment.rng_seed, to_string(window.key())));
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_index(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  for (std::size_t i = 0; i < k; ++i)
    out.push_back({Task::status_generation, build_status_input(window, pool[i], schema, config),
                   serialize_status(config.not_mentioned, config),
                   {window.dialogue_id, window.end_turn, pool[i]}});
  return out;
}

std::string_view to_string(MixPolicy policy) {
  return policy == MixPolicy::joint_shuffle ? "joint_shuffle" : "alternating";
}

MixPolicy parse_mix_policy(std::string_view text) {
  if (text == "joint_shuffle") return MixPolicy::joint_shuffle;
  if (text == "alternating") return MixPolicy::alternating;
  throw ConfigError("unknown mix policy \"" + std::string(text) + "\"");
}

std::vector<std::vector<std::size_t>> mix_batches(std::span<const Sample> samples,
                                                  std::size_t batch_size, std::uint64_t seed,
                                                  MixPolicy policy) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> batches;
  auto chunk = [&](const std::vector<std::size_t>& order) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < order.size(); i += batch_size)
      out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                       order.begin() + static_cast<std::ptrdiff_t>(
                                           std::min(order.size(), i + batch_size)));
    return out;
  };

  if (policy == MixPolicy::joint_shuffle) {
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    seeded_shuffle(std::span(order), rng);
    return chunk(order);
  }

  std::vector<std::size_t> terms, statuses;
  for (std::size_t i = 0; i < samples.size(); ++i)
    (samples[i].task == Task::term_generation ? terms : statuses).push_back(i);
  seeded_shuffle(std::span(terms), rng);
  seeded_shuffle(std::span(statuses), rng);
  auto term_batches = chunk(terms);
  auto status_batches = chunk(statuses);
  std::size_t a = 0, b = 0;
  while (a < term_batches.size() || b < status_batches.size()) {
    if (a < term_batches.size()) batches.push_back(std::move(term_batches[a++]));
    if (b < status_batches.size()) batches.push_back(std::move(status_batches[b++]));
  }
  return batches;
}

Json sample_to_json(const Sample& s) {
  Json meta = {{"dialogue_id", s.meta.dialogue_id}, {"end_turn", s.meta.end_turn}};
  meta["term"] = s.meta.term ? Json(*s.meta.term) : Json(nullptr);
  return {{"task", to_string(s.task)},
          {"input_text", s.input_text},
          {"target_text", s.target_text},
          {"meta", std::move(meta)}};
}

Sample sample_from_json(const Json& record) {
  Sample s;
  s.task = parse_task(record.at("task").get<std::string>());
  s.input_text = record.at("input_text").get<std::string>();
  s.target_text = record.at("target_text").get<std::string>();
  const Json& meta = record.at("meta");
  s.meta.dialogue_id = meta.at("dialogue_id").get<std::string>();
  s.meta.end_turn = meta.at("end_turn").get<std::size_t>();
  if (meta.contains("term") && !meta.at("term").is_null())
    s.meta.term = meta.at("term").get<std::string>();
  return s;
}

void write_samples(std::ostream& out, std::span<const Sample> samples) {
  for (const auto& s : samples) out << sample_to_json(s).dump() << '\n';
}

std::vector<Sample> read_samples(std::istream& in) {
  std::vector<Sample> out;
  for_each_jsonl(in, [&](const Json& record, std::size_t line) {
    try {
      out.push_back(sample_from_json(record));
    } catch (const Json::exception& e) {
      throw ParseError(std::string("malformed sample record: ") + e.what(), line);
    }
  });
  return out;
}

}  // namespace termstat
