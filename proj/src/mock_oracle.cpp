#include "termstat/mock_oracle.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "termstat/error.hpp"
#include "termstat/random.hpp"

namespace termstat {

Json to_json(const Corruption& c) {
  return {{"term_rate", c.term_rate},
          {"status_rate", c.status_rate},
          {"status_mode", c.status_mode == Corruption::StatusMode::flip ? "flip" : "garble"},
          {"seed", c.seed}};
}

Corruption corruption_from_json(const Json& j) {
  Corruption c;
  if (j.contains("term_rate")) c.term_rate = j.at("term_rate").get<double>();
  if (j.contains("status_rate")) c.status_rate = j.at("status_rate").get<double>();
  if (j.contains("status_mode")) {
    const auto mode = j.at("status_mode").get<std::string>();
    if (mode == "flip")
      c.status_mode = Corruption::StatusMode::flip;
    else if (mode == "garble")
      c.status_mode = Corruption::StatusMode::garble;
    else
      throw ConfigError("corruption status_mode must be \"flip\" or \"garble\"");
  }
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  for (double rate : {c.term_rate, c.status_rate})
    if (rate < 0 || rate > 1) throw ConfigError("corruption rates must lie in [0, 1]");
  return c;
}

MockOracle::MockOracle(std::span<const Window> windows, const Schema& schema, PromptConfig prompts,
                       Corruption corruption)
    : schema_(&schema), prompts_(std::move(prompts)), corruption_(corruption) {
  for (const auto& w : windows)
    if (w.gold) gold_[w.key()] = *w.gold;
}

const std::vector<TermStatusPair>& MockOracle::gold_for(const RequestKey& key) const {
  auto it = gold_.find({key.dialogue_id, key.end_turn});
  if (it == gold_.end())
    throw BackendError("oracle has no gold for window " +
                       to_string(WindowKey{key.dialogue_id, key.end_turn}));
  return it->second;
}

namespace {

std::string unit_key(const RequestKey& key, std::string_view salt) {
  std::string s = key.dialogue_id + "#" + std::to_string(key.end_turn);
  if (key.term) s += "#" + *key.term;
  s += "#";
  s += salt;
  return s;
}

}  // namespace

std::vector<TermStatusPair> MockOracle::corrupt_terms(const RequestKey& key,
                                                      std::vector<TermStatusPair> gold) const {
  if (corruption_.term_rate <= 0) return gold;
  Rng rng(mix_seed(corruption_.seed, unit_key(key, "terms")));
  if (uniform_real(rng) >= corruption_.term_rate) return gold;
  // Swap the last gold term for a random term outside the gold set.
  std::set<std::string> present;
  for (const auto& p : gold) present.insert(p.term);
  if (!gold.empty()) gold.pop_back();
  std::vector<std::string> pool;
  for (const auto& t : schema_->terms())
    if (!present.count(t)) pool.push_back(t);
  if (!pool.empty()) {
    const std::string& extra = pool[uniform_index(rng, pool.size())];
    gold.push_back({extra, schema_->status_candidates(extra, false).front()});
  }
  return gold;
}

std::string MockOracle::status_answer(const RequestKey& key) const {
  const auto& gold = gold_for(key);
  const std::string& term = *key.term;
  auto it = std::find_if(gold.begin(), gold.end(), [&](const auto& p) { return p.term == term; });
  std::string status = it != gold.end() ? it->status : prompts_.not_mentioned;

  if (corruption_.status_rate <= 0) return status;
  Rng rng(mix_seed(corruption_.seed, unit_key(key, "status")));
  if (uniform_real(rng) >= corruption_.status_rate) return status;

  if (corruption_.status_mode == Corruption::StatusMode::flip && schema_->has_term(term)) {
    std::vector<std::string> others;
    for (auto& c : schema_->status_candidates(term, false))
      if (c != status) others.push_back(std::move(c));
    // A single-candidate category cannot be flipped; fall through to garble.
    if (!others.empty()) return others[uniform_index(rng, others.size())];
  }
  return "garbled " + status;
}

std::string MockOracle::generate(const GenerationRequest& request) const {
  if (!request.key) throw BackendError("oracle requests must carry a unit key");
  const RequestKey& key = *request.key;
  switch (key.stage) {
    case Stage::term: {
      const auto pairs = corrupt_terms(key, gold_for(key));
      std::vector<std::string> terms;
      for (const auto& p : pairs) terms.push_back(p.term);
      return serialize_terms(terms, prompts_);
    }
    case Stage::status:
      if (!key.term) throw BackendError("stage-2 oracle request without a term");
      return serialize_status(status_answer(key), prompts_);
    case Stage::one_stage: {
      auto pairs = corrupt_terms(key, gold_for(key));
      for (auto& p : pairs) {
        RequestKey status_key = key;
        status_key.term = p.term;
        p.status = status_answer(status_key);
        // Terms injected by corruption have no gold and come back as
        // not-mentioned; keep a real candidate so the output stays parseable.
        if (p.status == prompts_.not_mentioned)
          p.status = schema_->status_candidates(p.term, false).front();
      }
      return serialize_pairs_one_stage(pairs, prompts_);
    }
  }
  throw BackendError("unknown stage");
}

void MockOracle::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw BackendError("cannot write " + path.string());
  out << Json{{"backend", name()}, {"corruption", to_json(corruption_)}}.dump(2) << '\n';
}

void MockOracle::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw BackendError("cannot read " + path.string());
  const Json j = Json::parse(in);
  if (j.value("backend", "") != name())
    throw BackendError(path.string() + " is not an oracle checkpoint");
  corruption_ = corruption_from_json(j.value("corruption", Json::object()));
}

}  // namespace termstat
