#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "termstat/backend.hpp"
#include "termstat/corpus.hpp"
#include "termstat/prompting.hpp"
#include "termstat/schema.hpp"

namespace termstat {

/// Seeded error injection for the oracle. Rates are per unit (window for
/// stage 1 and one-stage, (window, term) for stage 2).
struct Corruption {
  enum class StatusMode {
    flip,    // replace with a different valid candidate
    garble,  // replace with text outside the candidate set
  };

  double term_rate = 0;
  double status_rate = 0;
  StatusMode status_mode = StatusMode::flip;
  std::uint64_t seed = 0;

  bool enabled() const { return term_rate > 0 || status_rate > 0; }
};

Json to_json(const Corruption& c);
Corruption corruption_from_json(const Json& j);

/// Test double that answers every request from gold annotations keyed by
/// (dialogue_id, end_turn[, term]). Without corruption its outputs are
/// exactly the gold serializations.
class MockOracle final : public Backend {
 public:
  MockOracle(std::span<const Window> windows, const Schema& schema, PromptConfig prompts,
             Corruption corruption = {});

  std::string name() const override { return "oracle"; }
  std::string generate(const GenerationRequest& request) const override;

  /// Writes the corruption spec; gold comes from the windows at construction.
  void save(const std::filesystem::path& path) const override;
  void load(const std::filesystem::path& path) override;

  const Corruption& corruption() const noexcept { return corruption_; }

 private:
  const std::vector<TermStatusPair>& gold_for(const RequestKey& key) const;
  std::vector<TermStatusPair> corrupt_terms(const RequestKey& key,
                                            std::vector<TermStatusPair> gold) const;
  std::string status_answer(const RequestKey& key) const;

  const Schema* schema_;
  PromptConfig prompts_;
  Corruption corruption_;
  std::map<WindowKey, std::vector<TermStatusPair>> gold_;
};

}  // namespace termstat
