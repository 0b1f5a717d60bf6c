#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "support.hpp"
#include "termstat/error.hpp"
#include "termstat/evaluation.hpp"
#include "termstat/mock_oracle.hpp"
#include "termstat/synthetic.hpp"

using namespace termstat;
using Pairs = std::vector<TermStatusPair>;

namespace {

// Brute-force counter: linear scans over projected, deduplicated lists.
struct Brute {
  std::size_t tp = 0, fp = 0, fn = 0;
};

std::vector<std::string> flatten(const Pairs& pairs, EvalMode mode) {
  std::vector<std::string> out;
  for (const auto& p : pairs) {
    const std::string key = mode == EvalMode::term ? p.term : p.term + "\x1f" + p.status;
    bool seen = false;
    for (const auto& k : out) seen = seen || k == key;
    if (!seen) out.push_back(key);
  }
  return out;
}

Brute brute_count(const Pairs& pred, const Pairs& gold, EvalMode mode) {
  const auto p = flatten(pred, mode), g = flatten(gold, mode);
  Brute b;
  for (const auto& x : p) {
    bool hit = false;
    for (const auto& y : g) hit = hit || x == y;
    hit ? ++b.tp : ++b.fp;
  }
  for (const auto& y : g) {
    bool hit = false;
    for (const auto& x : p) hit = hit || x == y;
    if (!hit) ++b.fn;
  }
  return b;
}

Prf brute_prf(const Pairs& pred, const Pairs& gold, EvalMode mode) {
  const Brute b = brute_count(pred, gold, mode);
  if (flatten(gold, mode).empty()) {
    const double v = flatten(pred, mode).empty() ? 1.0 : 0.0;
    return {v, v, v};
  }
  const double p = b.tp + b.fp ? double(b.tp) / double(b.tp + b.fp) : 0.0;
  const double r = b.tp + b.fn ? double(b.tp) / double(b.tp + b.fn) : 0.0;
  return {p, r, p + r > 0 ? 2 * p * r / (p + r) : 0.0};
}

Pairs random_pairs(std::mt19937& rng, std::size_t max) {
  static const char* terms[] = {"cough", "fever", "headache", "nausea", "chest pain", "rash"};
  static const char* statuses[] = {"appear", "absent", "unknown"};
  Pairs out;
  for (std::size_t i = 0, n = rng() % (max + 1); i < n; ++i)
    out.push_back({terms[rng() % 6], statuses[rng() % 3]});
  return out;
}

// One status per term, as in real windows.
Pairs unique_pairs(std::mt19937& rng, std::size_t max) {
  Pairs out;
  for (const auto& p : random_pairs(rng, max)) {
    bool seen = false;
    for (const auto& q : out) seen = seen || q.term == p.term;
    if (!seen) out.push_back(p);
  }
  return out;
}

ExtractionResult result(std::string id, std::size_t end, Pairs pairs) {
  ExtractionResult r;
  r.key = {std::move(id), end};
  r.pairs = std::move(pairs);
  return r;
}

}  // namespace

TEST_CASE("score_window examples") {
  const Pairs gold{{"atrial fibrillation", "appear"}, {"cardiopalmus", "absent"}};
  const Pairs pred{{"atrial fibrillation", "appear"}, {"cardiopalmus", "done"}};
  CHECK(score_window(pred, gold, EvalMode::term) == Prf{1, 1, 1});
  const Prf full = score_window(pred, gold, EvalMode::full);
  CHECK(full.precision == 0.5);
  CHECK(full.recall == 0.5);
  CHECK(full.f1 == 0.5);

  CHECK(score_window(Pairs{}, Pairs{}, EvalMode::full) == Prf{1, 1, 1});
  CHECK(score_window(Pairs{{"atrial fibrillation", "appear"}}, Pairs{}, EvalMode::full) == Prf{0, 0, 0});
  CHECK(score_window(Pairs{}, gold, EvalMode::term) == Prf{0, 0, 0});
}

TEST_CASE("invalid statuses count as present terms but never match") {
  const Pairs gold{{"cough", "appear"}};
  const Pairs pred{{"cough", kInvalidStatus}};
  CHECK(score_window(pred, gold, EvalMode::term) == Prf{1, 1, 1});
  CHECK(score_window(pred, gold, EvalMode::full) == Prf{0, 0, 0});
}

TEST_CASE("score_window agrees with the brute-force counter") {
  std::mt19937 rng(1);
  for (int i = 0; i < 2000; ++i) {
    const Pairs gold = random_pairs(rng, 5), pred = random_pairs(rng, 5);
    for (EvalMode mode : {EvalMode::term, EvalMode::full}) {
      const UnitScore u = score_unit(pred, gold, mode);
      const Brute b = brute_count(pred, gold, mode);
      CHECK(u.counts.tp == b.tp);
      CHECK(u.counts.fp == b.fp);
      CHECK(u.counts.fn == b.fn);
      CHECK(u.prf == brute_prf(pred, gold, mode));
    }
  }
}

TEST_CASE("score invariants") {
  std::mt19937 rng(2);
  for (int i = 0; i < 1000; ++i) {
    const Pairs gold = unique_pairs(rng, 5), pred = unique_pairs(rng, 5);
    const Prf t = score_window(pred, gold, EvalMode::term);
    const Prf f = score_window(pred, gold, EvalMode::full);
    CHECK(t.precision >= f.precision);
    CHECK(t.recall >= f.recall);
    CHECK(t.f1 >= f.f1);
    for (const Prf& s : {t, f})
      for (double v : {s.precision, s.recall, s.f1}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    CHECK(score_window(gold, gold, EvalMode::full) == Prf{1, 1, 1});
    CHECK(score_window(gold, gold, EvalMode::term) == Prf{1, 1, 1});
    if (score_unit(pred, gold, EvalMode::full).counts.tp == 0 && !(pred.empty() && gold.empty()))
      CHECK(f.f1 == 0.0);
  }
}

TEST_CASE("aggregation") {
  const std::vector<UnitScore> mixed{score_unit(Pairs{}, Pairs{}, EvalMode::full),
                                     score_unit(Pairs{{"a", "x"}}, Pairs{}, EvalMode::full)};
  CHECK(aggregate_windows(mixed, Aggregation::per_window_mean).prf == Prf{0.5, 0.5, 0.5});

  const Pairs g{{"a", "x"}, {"b", "y"}};
  const std::vector<UnitScore> perfect{score_unit(g, g, EvalMode::full), score_unit(Pairs{}, Pairs{}, EvalMode::full)};
  CHECK(aggregate_windows(perfect, Aggregation::per_window_mean).prf == Prf{1, 1, 1});
  CHECK(aggregate_windows(perfect, Aggregation::pooled_micro).prf == Prf{1, 1, 1});
  const std::vector<UnitScore> only_empty{score_unit(Pairs{}, Pairs{}, EvalMode::full)};
  CHECK(aggregate_windows(only_empty, Aggregation::pooled_micro).prf == Prf{1, 1, 1});

  CHECK_THROWS_AS(aggregate_windows(std::vector<UnitScore>{}, Aggregation::per_window_mean), std::invalid_argument);
}

TEST_CASE("pooled aggregation matches a brute-force pool") {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<UnitScore> units;
    std::vector<std::pair<Pairs, Pairs>> raw;
    for (int i = 0; i < 100; ++i) {
      raw.emplace_back(random_pairs(rng, 5), random_pairs(rng, 5));
      units.push_back(score_unit(raw.back().first, raw.back().second, EvalMode::full));
    }
    std::size_t tp = 0, fp = 0, fn = 0, empty = 0, empty_ok = 0;
    double mean_f1 = 0;
    for (const auto& [pred, gold] : raw) {
      mean_f1 += brute_prf(pred, gold, EvalMode::full).f1;
      if (gold.empty()) {
        ++empty;
        if (pred.empty()) ++empty_ok;
        continue;
      }
      const Brute b = brute_count(pred, gold, EvalMode::full);
      tp += b.tp;
      fp += b.fp;
      fn += b.fn;
    }
    const EvalReport r = aggregate_windows(units, Aggregation::pooled_micro);
    CHECK(r.pooled.tp == tp);
    CHECK(r.pooled.fp == fp);
    CHECK(r.pooled.fn == fn);
    CHECK(r.n_empty_gold == empty);
    CHECK(r.n_empty_gold_correct == empty_ok);
    const double p = double(tp) / double(tp + fp), rc = double(tp) / double(tp + fn);
    CHECK(r.prf.precision == doctest::Approx(p).epsilon(1e-15));
    CHECK(r.prf.recall == doctest::Approx(rc).epsilon(1e-15));
    CHECK(aggregate_windows(units, Aggregation::per_window_mean).prf.f1 ==
          doctest::Approx(mean_f1 / 100.0).epsilon(1e-12));
  }
}

TEST_CASE("merge_dialogue") {
  const std::vector<ExtractionResult> change{result("d", 1, {{"thyroid function test", "suggest"}}),
                                             result("d", 3, {{"thyroid function test", "done"}})};
  CHECK(merge_dialogue(change) == Pairs{{"thyroid function test", "done"}});
  const std::vector<ExtractionResult> single{result("d", 0, {{"a", "x"}, {"b", "y"}})};
  CHECK(merge_dialogue(single) == Pairs{{"a", "x"}, {"b", "y"}});
  const std::vector<ExtractionResult> uni{result("d", 1, {{"a", "x"}}), result("d", 2, {{"b", "y"}})};
  CHECK(merge_dialogue(uni) == Pairs{{"a", "x"}, {"b", "y"}});

  std::mt19937 rng(4);
  for (int i = 0; i < 200; ++i) {
    std::vector<ExtractionResult> rs;
    for (std::size_t k = 0, n = 1 + rng() % 5; k < n; ++k) rs.push_back(result("d", k, random_pairs(rng, 4)));
    const Pairs merged = merge_dialogue(rs);
    // Idempotent.
    const std::vector<ExtractionResult> again{result("d", 0, merged)};
    CHECK(merge_dialogue(again) == merged);
    // Last writer wins per term.
    for (const auto& p : merged) {
      std::string last;
      for (const auto& r : rs)
        for (const auto& q : r.pairs)
          if (q.term == p.term) last = q.status;
      CHECK(p.status == last);
    }
  }
}

TEST_CASE("dialogue-level scoring") {
  Dialogue d;
  d.id = "d";
  d.turns = {{Speaker::patient, "I need a thyroid function test", 0},
             {Speaker::doctor, "it is done already", 1}};
  d.events = {{0, "thyroid function test", "suggest"}, {1, "thyroid function test", "done"}};
  const std::vector<Dialogue> gold{d};
  const auto windows = prepare_windows(gold, fixtures::chunyu());

  // Early window wrong, later window right.
  const std::vector<ExtractionResult> preds{result("d", 0, {{"thyroid function test", "done"}}),
                                            result("d", 1, {{"thyroid function test", "done"}})};
  CHECK(score_dialogue_level(preds, gold, EvalMode::full).prf.f1 == 1.0);
  CHECK(score_window_level(align(preds, windows), EvalMode::full).prf.f1 < 1.0);

  Dialogue empty;
  empty.id = "e";
  empty.turns = {{Speaker::patient, "hello", 0}};
  const std::vector<Dialogue> empty_gold{empty};
  const std::vector<ExtractionResult> none{result("e", 0, {})};
  CHECK(score_dialogue_level(none, empty_gold, EvalMode::full).prf == Prf{1, 1, 1});

  const std::vector<ExtractionResult> stray{result("zzz", 0, {})};
  CHECK_THROWS_AS(score_dialogue_level(stray, gold, EvalMode::full), ValidationError);
}

TEST_CASE("align reports missing and unexpected keys") {
  const auto windows = prepare_windows(std::vector<Dialogue>{fixtures::table1()}, fixtures::chunyu());
  std::vector<ExtractionResult> preds;
  for (const auto& w : windows) preds.push_back(result(w.dialogue_id, w.end_turn, *w.gold));
  CHECK(align(preds, windows).size() == windows.size());
  preds.pop_back();
  CHECK_THROWS_WITH_AS(align(preds, windows), doctest::Contains("table1#4"), ValidationError);
  preds.push_back(result("other", 0, {}));
  CHECK_THROWS_AS(align(preds, windows), ValidationError);
}

TEST_CASE("category breakdown") {
  const Schema& s = fixtures::chunyu();
  const std::vector<AlignedWindow> aligned{
      {{"d", 0}, {{"cough", "appear"}}, {{"cough", "appear"}}},
      {{"d", 1}, {{"cough", "absent"}, {"electrocardiogram", "done"}}, {{"cough", "appear"}, {"electrocardiogram", "done"}}},
  };
  const auto full = breakdown_by_category(aligned, s, EvalMode::full);
  CHECK(full.size() == 4);
  CHECK(full.at("symptom").n_units == 2);
  CHECK(full.at("symptom").prf.f1 == 0.5);
  CHECK(full.at("test").n_units == 1);
  CHECK(full.at("test").prf.f1 == 1.0);
  CHECK(full.at("surgery").empty);
  CHECK(full.at("other info").empty);
}

TEST_CASE("per-category counts recombine to the overall counts") {
  const Schema s = synthetic_schema(4, 5, 3);
  SyntheticCorpusSpec spec;
  spec.dialogues = 40;
  spec.seed = 6;
  const auto windows = prepare_windows(synthetic_corpus(s, spec), s);
  Corruption c;
  c.term_rate = 0.4;
  c.status_rate = 0.4;
  c.seed = 1;
  const PromptConfig p = PromptConfig::from_schema(s);
  const MockOracle noisy(windows, s, p, c);
  const auto run = extract_corpus(windows, noisy, s, {}, p);
  const auto aligned = align(run.results, windows);
  for (EvalMode mode : {EvalMode::term, EvalMode::full}) {
    const EvalReport overall = score_window_level(aligned, mode);
    Counts sum;
    for (const auto& [_, r] : breakdown_by_category(aligned, s, mode)) sum += r.total;
    CHECK(sum == overall.total);
    // Independent pool.
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& a : aligned) {
      const Brute b = brute_count(a.pred, a.gold, mode);
      tp += b.tp;
      fp += b.fp;
      fn += b.fn;
    }
    CHECK(overall.total == Counts{tp, fp, fn});
  }
}

TEST_CASE("term-count buckets") {
  const auto buckets = default_term_count_buckets();
  CHECK(buckets[0].label() == "num=0");
  CHECK(buckets[1].label() == "1<=num<=4");
  CHECK(buckets[2].label() == "num>=5");

  const std::vector<AlignedWindow> aligned{
      {{"d", 0}, {}, {}},
      {{"d", 1}, {{"a", "x"}}, {{"a", "x"}, {"b", "x"}, {"c", "x"}}},
      {{"d", 2}, {}, {{"a", "x"}, {"b", "x"}, {"c", "x"}, {"d", "x"}, {"e", "x"}}},
  };
  const auto r = breakdown_by_term_count(aligned, buckets, EvalMode::full);
  CHECK(r.at("num=0").n_units == 1);
  CHECK(r.at("num=0").prf == Prf{1, 1, 1});
  CHECK(r.at("1<=num<=4").n_units == 1);
  CHECK(r.at("num>=5").n_units == 1);
  std::size_t total = 0;
  for (const auto& [_, rep] : r) total += rep.n_units;
  CHECK(total == aligned.size());

  const std::vector<TermCountBucket> overlap{{0, 2}, {2, std::nullopt}};
  CHECK_THROWS_AS(breakdown_by_term_count(aligned, overlap, EvalMode::full), ConfigError);
}

TEST_CASE("changed-status filter") {
  const Dialogue t1 = fixtures::table1();
  const auto keys = filter_changed_status(std::vector<Dialogue>{t1});
  CHECK(keys == std::vector<WindowKey>{{"table1", 4}});

  Dialogue flat = t1;
  flat.events.pop_back();
  CHECK(filter_changed_status(std::vector<Dialogue>{flat}).empty());
}

TEST_CASE("changed-status filter matches a brute-force scan") {
  const Schema s = synthetic_schema(2, 3, 3);
  SyntheticCorpusSpec spec;
  spec.dialogues = 60;
  spec.change_rate = 0.5;
  spec.seed = 10;
  const auto dialogues = synthetic_corpus(s, spec);
  const auto keys = filter_changed_status(dialogues, 5);
  std::set<WindowKey> expected;
  for (const auto& raw : dialogues) {
    const Dialogue d = merge_adjacent_turns(raw);
    for (std::size_t k = 0; k < d.turns.size(); ++k) {
      const std::size_t lo = k >= 4 ? k - 4 : 0;
      for (const auto& term : s.terms()) {
        std::vector<std::string> statuses;
        for (const auto& e : d.events)
          if (e.term == term && e.turn >= lo && e.turn <= k) statuses.push_back(e.status);
        bool differs = false;
        for (const auto& x : statuses) differs = differs || x != statuses.front();
        if (differs) expected.insert({d.id, k});
      }
    }
  }
  CHECK(std::set<WindowKey>(keys.begin(), keys.end()) == expected);
  CHECK(!expected.empty());
}
