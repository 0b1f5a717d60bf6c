#include "termstat/synthetic.hpp"

#include <algorithm>
#include <set>

#include "termstat/error.hpp"
#include "termstat/random.hpp"

namespace termstat {

namespace {

constexpr const char* kCategoryNames[] = {"symptom", "test", "surgery", "other info"};

constexpr const char* kFillers[] = {
    "how long has this been going on",
    "thank you doctor",
    "please describe it in more detail",
    "I see",
    "it started last week",
    "anything else you want to tell me",
    "okay",
    "I will do that",
};

}  // namespace

Schema synthetic_schema(std::size_t categories, std::size_t terms_per_category,
                        std::size_t statuses_per_category) {
  std::vector<CategoryDef> defs;
  for (std::size_t c = 0; c < categories; ++c) {
    CategoryDef def;
    def.name = c < std::size(kCategoryNames) ? kCategoryNames[c] : "category " + std::to_string(c);
    for (std::size_t t = 0; t < terms_per_category; ++t)
      def.terms.push_back("finding " + std::to_string(c) + " " + std::to_string(t));
    for (std::size_t s = 0; s < statuses_per_category; ++s)
      def.status_candidates.push_back("state " + std::to_string(c) + " " + std::to_string(s));
    defs.push_back(std::move(def));
  }
  return Schema("synthetic-" + std::to_string(categories) + "x" +
                    std::to_string(terms_per_category) + "x" +
                    std::to_string(statuses_per_category),
                ",", std::move(defs));
}

std::vector<Dialogue> synthetic_corpus(const Schema& schema, const SyntheticCorpusSpec& spec) {
  if (spec.dialogues == 0) return {};
  if (spec.min_turns == 0 || spec.max_turns < spec.min_turns)
    throw ConfigError("synthetic corpus needs 1 <= min_turns <= max_turns");
  if (spec.total_turns && *spec.total_turns < spec.dialogues)
    throw ConfigError("total_turns must be at least the number of dialogues");
  Rng rng(spec.seed);

  std::vector<std::size_t> lengths(spec.dialogues);
  if (spec.total_turns) {
    const std::size_t base = *spec.total_turns / spec.dialogues;
    const std::size_t rem = *spec.total_turns % spec.dialogues;
    for (std::size_t i = 0; i < spec.dialogues; ++i) lengths[i] = base + (i < rem ? 1 : 0);
    // Shuffle mass between dialogues without changing the total.
    for (std::size_t j = 0; j < spec.dialogues; ++j) {
      const std::size_t a = uniform_index(rng, spec.dialogues);
      const std::size_t b = uniform_index(rng, spec.dialogues);
      if (a == b) continue;
      const std::size_t movable = std::min<std::size_t>(lengths[a] - 1, 4);
      if (movable == 0) continue;
      const std::size_t m = uniform_index(rng, movable + 1);
      lengths[a] -= m;
      lengths[b] += m;
    }
  } else {
    for (auto& len : lengths)
      len = spec.min_turns + uniform_index(rng, spec.max_turns - spec.min_turns + 1);
  }

  const auto& terms = schema.terms();
  std::vector<Dialogue> out;
  out.reserve(spec.dialogues);
  for (std::size_t d = 0; d < spec.dialogues; ++d) {
    Dialogue dlg;
    dlg.id = "synth-" + std::to_string(d);
    std::vector<std::pair<std::string, std::string>> mentioned;  // term -> latest status
    std::size_t last_annotated = 0;
    bool any_annotated = false;

    for (std::size_t k = 0; k < lengths[d]; ++k) {
      const Speaker speaker = k % 2 == 0 ? Speaker::patient : Speaker::doctor;
      bool annotate = uniform_real(rng) < spec.annotation_rate;
      if (spec.annotate_every_window &&
          (!any_annotated || k - last_annotated >= spec.window_size))
        annotate = true;

      std::vector<std::pair<std::string, std::string>> events;
      if (annotate && !terms.empty()) {
        const std::size_t n = 1 + uniform_index(rng, std::max<std::size_t>(spec.max_events_per_turn, 1));
        std::set<std::string> used;
        for (std::size_t e = 0; e < n; ++e) {
          std::string term, status;
          if (!mentioned.empty() && uniform_real(rng) < spec.change_rate) {
            const auto& [t, old] = mentioned[uniform_index(rng, mentioned.size())];
            term = t;
            auto cands = schema.status_candidates(term, false);
            std::erase(cands, old);
            status = cands.empty() ? old : cands[uniform_index(rng, cands.size())];
          } else {
            term = terms[uniform_index(rng, terms.size())];
            const auto cands = schema.status_candidates(term, false);
            status = cands[uniform_index(rng, cands.size())];
          }
          if (!used.insert(term).second) continue;
          events.emplace_back(term, status);
          auto it = std::find_if(mentioned.begin(), mentioned.end(),
                                 [&](const auto& m) { return m.first == term; });
          if (it == mentioned.end())
            mentioned.emplace_back(term, status);
          else
            it->second = status;
        }
        any_annotated = true;
        last_annotated = k;
      }

      std::vector<std::string> sentences;
      for (const auto& [term, status] : events) sentences.push_back(term + " is " + status);
      if (sentences.empty()) sentences.push_back(kFillers[uniform_index(rng, std::size(kFillers))]);

      // Optionally write the turn as two raw same-speaker sentences.
      const bool split = sentences.size() >= 2 && uniform_real(rng) < spec.split_rate;
      const bool split_filler = sentences.size() == 1 && uniform_real(rng) < spec.split_rate;
      if (split) {
        const std::size_t first_raw = dlg.turns.size();
        dlg.turns.push_back({speaker, sentences[0] + " .", first_raw});
        std::string rest;
        for (std::size_t i = 1; i < sentences.size(); ++i)
          rest += (i > 1 ? " and " : "") + sentences[i];
        dlg.turns.push_back({speaker, rest + " .", first_raw + 1});
        for (std::size_t i = 0; i < events.size(); ++i)
          dlg.events.push_back({i == 0 ? first_raw : first_raw + 1, events[i].first, events[i].second});
      } else {
        std::string text;
        for (std::size_t i = 0; i < sentences.size(); ++i) text += (i ? " and " : "") + sentences[i];
        const std::size_t raw = dlg.turns.size();
        dlg.turns.push_back({speaker, text + " .", raw});
        for (const auto& [term, status] : events) dlg.events.push_back({raw, term, status});
        if (split_filler)
          dlg.turns.push_back({speaker, std::string(kFillers[uniform_index(rng, std::size(kFillers))]),
                               raw + 1});
      }
    }
    out.push_back(std::move(dlg));
  }
  return out;
}

}  // namespace termstat
