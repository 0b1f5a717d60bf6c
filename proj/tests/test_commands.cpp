#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "support.hpp"
#include "termstat/commands.hpp"
#include "termstat/error.hpp"
#include "termstat/synthetic.hpp"

using namespace termstat;
namespace fs = std::filesystem;

namespace {

void write_corpus(const fs::path& path, const std::vector<Dialogue>& dialogues) {
  std::ofstream out(path);
  for (const auto& d : dialogues) out << dialogue_to_json(d).dump() << '\n';
}

fs::path write_schema(const fs::path& dir, const Schema& schema) {
  const fs::path p = dir / "schema.yaml";
  std::ofstream(p) << dump_schema(schema);
  return p;
}

Json read_json(const fs::path& p) {
  std::ifstream in(p);
  return Json::parse(in);
}

// Synthetic corpus prepared into dir/prep; returns a config pointing at it.
RunConfig prepared(const fs::path& dir, const Schema& schema, const SyntheticCorpusSpec& spec) {
  RunConfig c;
  c.schema = write_schema(dir, schema);
  c.corpus = {dir / "corpus.jsonl"};
  write_corpus(c.corpus[0], synthetic_corpus(schema, spec));
  c.seed = 1;
  c.output_dir = dir / "prep";
  std::ostringstream log;
  cmd_prepare(c, log);
  return c;
}

}  // namespace

TEST_CASE("run config json round trip") {
  RunConfig c;
  c.schema = "s.yaml";
  c.corpus = {"a.jsonl", "b.jsonl"};
  c.seed = 42;
  c.window_size = 3;
  c.extraction.mode = ExtractionMode::one_stage;
  c.training_mode = TrainingMode::low_resource;
  c.hyperparams = Hyperparams::two_stage(42);
  c.backend.name = "tiny";
  c.backend.options = {{"hidden_dim", 16}};
  c.eval.by_category = true;
  const RunConfig back = run_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(back.seed == 42);
  CHECK(back.extraction.mode == ExtractionMode::one_stage);

  CHECK_THROWS_AS(RunConfig{}.require_seed(), ConfigError);
  CHECK(parse_training_mode(to_string(TrainingMode::low_resource)) == TrainingMode::low_resource);
  CHECK_THROWS_AS(parse_training_mode("partial"), ConfigError);
}

TEST_CASE("resolved hyperparameters follow the extraction mode") {
  RunConfig c;
  c.seed = 3;
  CHECK(c.resolved_hyperparams().epochs == 100);
  c.extraction.mode = ExtractionMode::one_stage;
  CHECK(c.resolved_hyperparams().epochs == 300);
  c.hyperparams = Hyperparams::two_stage(3);
  c.hyperparams->epochs = 7;
  CHECK(c.resolved_hyperparams().epochs == 7);
}

TEST_CASE("prepare reports corpus statistics") {
  const auto dir = fixtures::scratch("cmd_prepare_chunyu");
  RunConfig c;
  c.schema = fixtures::path("chunyu_like_schema.yaml");
  c.corpus = {dir / "corpus.jsonl"};
  SyntheticCorpusSpec spec;
  spec.dialogues = 1120;
  spec.total_turns = 18212;
  spec.seed = 8;
  write_corpus(c.corpus[0], synthetic_corpus(fixtures::chunyu(), spec));
  c.seed = 1;
  c.output_dir = dir / "out";
  std::ostringstream log;
  const PrepareStats stats = cmd_prepare(c, log);
  CHECK(stats.summary_line() == "dialogues=1120 windows=18212 terms=71 statuses=18");
  CHECK(log.str().find("dialogues=1120 windows=18212 terms=71 statuses=18") != std::string::npos);
  for (const char* f : {"windows.jsonl", "samples.jsonl", "stats.json", "manifest.json"})
    CHECK(fs::exists(c.output_dir / f));
  const Json manifest = read_json(c.output_dir / "manifest.json");
  CHECK(manifest.at("command") == "prepare");
  CHECK(manifest.at("config").at("seed") == 1);
  CHECK(manifest.at("stats").at("windows") == 18212);
}

TEST_CASE("prepare on a three-status schema of the second dataset's shape") {
  const auto dir = fixtures::scratch("cmd_prepare_cmdd");
  const Schema schema = load_schema_file(fixtures::path("cmdd_like_schema.yaml"));
  RunConfig c;
  c.schema = fixtures::path("cmdd_like_schema.yaml");
  c.corpus = {dir / "corpus.jsonl"};
  SyntheticCorpusSpec spec;
  spec.dialogues = 2067;
  spec.total_turns = 87005;
  spec.seed = 9;
  write_corpus(c.corpus[0], synthetic_corpus(schema, spec));
  c.seed = 1;
  c.output_dir = dir / "out";
  std::ostringstream log;
  CHECK(cmd_prepare(c, log).summary_line() == "dialogues=2067 windows=87005 terms=149 statuses=3");
}

TEST_CASE("prepare on a single short dialogue") {
  const auto dir = fixtures::scratch("cmd_prepare_small");
  Dialogue d;
  d.id = "x";
  d.turns = {{Speaker::patient, "I cough", 0}, {Speaker::doctor, "since when", 1},
             {Speaker::patient, "two days", 2}};
  d.events = {{0, "cough", "appear"}};
  RunConfig c;
  c.schema = fixtures::path("chunyu_like_schema.yaml");
  c.corpus = {dir / "corpus.jsonl"};
  write_corpus(c.corpus[0], {d});
  c.seed = 1;
  c.output_dir = dir / "out";
  std::ostringstream log;
  const PrepareStats stats = cmd_prepare(c, log);
  CHECK(stats.windows == 3);
  CHECK(stats.term_samples == 3);
  CHECK(stats.status_samples == 3);
  CHECK(stats.negative_samples == 0);

  c.extraction.include_not_mentioned = true;
  CHECK(cmd_prepare(c, log).negative_samples == 3);
  c.extraction.mode = ExtractionMode::one_stage;
  const PrepareStats one = cmd_prepare(c, log);
  CHECK(one.term_samples == 3);
  CHECK(one.status_samples == 0);
  CHECK(one.negative_samples == 0);
}

TEST_CASE("oracle predictions score perfectly") {
  const auto dir = fixtures::scratch("cmd_oracle");
  const Schema schema = synthetic_schema(3, 4, 3);
  SyntheticCorpusSpec spec;
  spec.dialogues = 30;
  spec.seed = 4;
  RunConfig c = prepared(dir, schema, spec);

  c.windows = dir / "prep" / "windows.jsonl";
  c.output_dir = dir / "pred";
  std::ostringstream log;
  const auto run = cmd_predict(c, log);
  CHECK(run.failures.empty());
  CHECK(fs::exists(dir / "pred" / "predictions.jsonl"));

  c.predictions = dir / "pred" / "predictions.jsonl";
  c.output_dir = dir / "eval";
  c.eval.by_category = true;
  c.eval.by_term_count = true;
  c.eval.changed_status = true;
  const auto s = cmd_evaluate(c, log);
  for (const auto* r : {&s.window_term, &s.window_full, &s.dialogue_term, &s.dialogue_full})
    CHECK(r->prf == Prf{1, 1, 1});
  CHECK(s.report.at("by_category").size() == 3);
  CHECK(s.report.at("by_term_count").size() == 3);
  CHECK(fs::exists(dir / "eval" / "report.json"));
  CHECK(log.str().find("by category") != std::string::npos);

  c.output_dir = dir / "analyze";
  c.eval = {};
  const Json analysis = cmd_analyze(c, log);
  CHECK(analysis.contains("by_category"));
  CHECK(analysis.contains("by_term_count"));
  CHECK(analysis.contains("changed_status"));
}

TEST_CASE("corrupted oracle predictions are deterministic and counted") {
  const auto dir = fixtures::scratch("cmd_garble");
  const Schema schema = synthetic_schema(2, 4, 3);
  SyntheticCorpusSpec spec;
  spec.dialogues = 20;
  spec.seed = 5;
  RunConfig c = prepared(dir, schema, spec);
  c.windows = dir / "prep" / "windows.jsonl";
  c.backend.options = {{"corruption", {{"status_rate", 0.5}, {"status_mode", "garble"}, {"seed", 2}}}};
  std::ostringstream log;

  c.output_dir = dir / "a";
  const auto a = cmd_predict(c, log);
  c.output_dir = dir / "b";
  c.extraction.workers = 4;
  const auto b = cmd_predict(c, log);
  CHECK(a.totals.invalid_status_count > 0);
  std::ifstream fa(dir / "a" / "predictions.jsonl"), fb(dir / "b" / "predictions.jsonl");
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  CHECK(sa.str() == sb.str());

  const Json manifest = read_json(dir / "a" / "manifest.json");
  CHECK(manifest.at("diagnostics").at("invalid_status_count").get<std::size_t>() ==
        a.totals.invalid_status_count);

  c.predictions = dir / "a" / "predictions.jsonl";
  c.output_dir = dir / "eval";
  const auto s = cmd_evaluate(c, log);
  CHECK(s.window_term.prf == Prf{1, 1, 1});
  CHECK(s.window_full.prf.f1 < 1.0);
  CHECK(s.diagnostics.invalid_status_count == a.totals.invalid_status_count);
}

TEST_CASE("evaluate scores a hand-built prediction file") {
  const auto dir = fixtures::scratch("cmd_micro");
  Dialogue d;
  d.id = "m";
  d.turns = {{Speaker::patient, "I had atrial fibrillation and palpitations", 0}};
  d.events = {{0, "atrial fibrillation", "appear"}, {0, "cardiopalmus", "absent"}};
  RunConfig c;
  c.schema = fixtures::path("chunyu_like_schema.yaml");
  c.corpus = {dir / "corpus.jsonl"};
  write_corpus(c.corpus[0], {d});
  c.predictions = dir / "predictions.jsonl";
  ExtractionResult r;
  r.key = {"m", 0};
  r.pairs = {{"atrial fibrillation", "appear"}, {"cardiopalmus", "done"}};
  {
    std::ofstream out(c.predictions);
    write_predictions(out, std::vector<ExtractionResult>{r});
  }
  c.output_dir = dir / "eval";
  c.eval.by_category = true;
  std::ostringstream log;
  const auto s = cmd_evaluate(c, log);
  CHECK(s.window_term.prf == Prf{1, 1, 1});
  CHECK(s.window_full.prf == Prf{0.5, 0.5, 0.5});
  CHECK(s.dialogue_full.prf == Prf{0.5, 0.5, 0.5});
  CHECK(s.report.at("by_category").size() == 4);
  CHECK(s.report.at("by_category").at("surgery").at("term").at("empty") == true);

  r.key = {"m", 7};
  {
    std::ofstream out(c.predictions);
    write_predictions(out, std::vector<ExtractionResult>{r});
  }
  CHECK_THROWS_AS(cmd_evaluate(c, log), ValidationError);
}

TEST_CASE("train writes checkpoints and manifests") {
  const auto dir = fixtures::scratch("cmd_train");
  const Schema schema = synthetic_schema(2, 3, 3);
  SyntheticCorpusSpec spec;
  spec.dialogues = 10;
  spec.seed = 6;
  RunConfig c = prepared(dir, schema, spec);
  c.samples = dir / "prep" / "samples.jsonl";
  c.valid_windows = dir / "prep" / "windows.jsonl";
  std::ostringstream log;

  SUBCASE("oracle has nothing to train") {
    c.output_dir = dir / "oracle";
    const auto s = cmd_train(c, log);
    CHECK(s.phases.empty());
    CHECK(fs::exists(s.checkpoint));
  }

  SUBCASE("tiny full-data run") {
    c.backend.name = "tiny";
    c.backend.options = {{"hidden_dim", 16}, {"embedding_dim", 8}, {"bigram_buckets", 64}};
    Hyperparams hp = Hyperparams::two_stage(1);
    hp.epochs = 2;
    hp.warmup_steps = 2;
    hp.learning_rate = 1e-2;
    hp.batch_size = 8;
    c.hyperparams = hp;
    c.output_dir = dir / "tiny";
    const auto s = cmd_train(c, log);
    REQUIRE(s.phases.size() == 1);
    CHECK(s.best_valid_f1.has_value());
    CHECK(fs::exists(dir / "tiny" / "loss.jsonl"));
    const Json manifest = read_json(dir / "tiny" / "manifest.json");
    CHECK(manifest.at("hyperparams").at("epochs") == 2);
    CHECK(manifest.at("phases").size() == 1);

    c.windows = c.valid_windows;
    c.checkpoint = s.checkpoint;
    c.output_dir = dir / "tiny_pred";
    CHECK(cmd_predict(c, log).results.size() + cmd_predict(c, log).failures.size() > 0);
    c.checkpoint.clear();
    CHECK_THROWS_AS(cmd_predict(c, log), ConfigError);
  }

  SUBCASE("low-resource run has two phases") {
    const fs::path extra = dir / "term_only.jsonl";
    {
      std::ofstream out(extra);
      out << R"({"id": "t", "turns": [{"speaker": "patient", "text": "I feel dizzy"}], )"
          << R"("annotations": [{"turn": 0, "term": "dizziness"}]})" << '\n';
    }
    c.augment.term_only_sources = {extra.string()};
    c.output_dir = dir / "prep";
    cmd_prepare(c, log);
    CHECK(fs::exists(dir / "prep" / "term_only_samples.jsonl"));

    c.backend.name = "tiny";
    c.backend.options = {{"hidden_dim", 16}, {"embedding_dim", 8}, {"bigram_buckets", 64}};
    Hyperparams hp = Hyperparams::two_stage(1);
    hp.epochs = 1;
    hp.warmup_steps = 1;
    hp.batch_size = 8;
    c.hyperparams = hp;
    c.training_mode = TrainingMode::low_resource;
    c.output_dir = dir / "low";
    const auto s = cmd_train(c, log);
    REQUIRE(s.phases.size() == 2);
    CHECK(s.phases[0].phase == "mixed");
    CHECK(s.phases[1].phase == "finetune");
    CHECK(s.phases[0].sample_count == s.phases[1].sample_count + 1);
  }
}

TEST_CASE("one-stage training defaults to 300 epochs in the manifest") {
  const auto dir = fixtures::scratch("cmd_one_stage");
  const Schema schema = synthetic_schema(2, 3, 3);
  SyntheticCorpusSpec spec;
  spec.dialogues = 2;
  spec.max_turns = 3;
  spec.seed = 7;
  RunConfig c;
  c.extraction.mode = ExtractionMode::one_stage;
  c.schema = write_schema(dir, schema);
  c.corpus = {dir / "corpus.jsonl"};
  write_corpus(c.corpus[0], synthetic_corpus(schema, spec));
  c.seed = 1;
  c.output_dir = dir / "prep";
  std::ostringstream log;
  cmd_prepare(c, log);
  c.samples = dir / "prep" / "samples.jsonl";
  c.backend.name = "tiny";
  c.backend.options = {{"hidden_dim", 8}, {"embedding_dim", 4}, {"bigram_buckets", 16}};
  c.output_dir = dir / "train";
  const auto s = cmd_train(c, log);
  REQUIRE(s.phases.size() == 1);
  const Json manifest = read_json(dir / "train" / "manifest.json");
  CHECK(manifest.at("hyperparams").at("epochs") == 300);
  CHECK(manifest.at("hyperparams").at("learning_rate") == 2e-5);
}

TEST_CASE("missing inputs are configuration errors") {
  std::ostringstream log;
  RunConfig c;
  c.schema = fixtures::path("chunyu_like_schema.yaml");
  c.seed = 1;
  c.output_dir = fixtures::scratch("cmd_missing");
  CHECK_THROWS_AS(cmd_prepare(c, log), ConfigError);
  CHECK_THROWS_AS(cmd_train(c, log), ConfigError);
  CHECK_THROWS_AS(cmd_predict(c, log), ConfigError);
  c.seed.reset();
  c.corpus = {fixtures::path("table1_dialogue.jsonl")};
  c.samples = "whatever.jsonl";
  CHECK_THROWS_AS(cmd_train(c, log), ConfigError);
  c.backend.name = "gpt";
  CHECK_THROWS_AS(make_backend(c, fixtures::chunyu(), PromptConfig::from_schema(fixtures::chunyu()), {}),
                  ConfigError);
}
