#include <CLI11.hpp>

#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "termstat/commands.hpp"
#include "termstat/error.hpp"
#include "termstat/synthetic.hpp"

using namespace termstat;

namespace {

struct Overrides {
  std::string config;
  std::string schema;
  std::vector<std::string> corpus;
  std::string windows;
  std::string samples;
  std::string valid_windows;
  std::string predictions;
  std::string checkpoint;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> window_size;
  std::string mode;
  std::string backend;
  std::string term_policy;
  std::string training_mode;
  std::string mix;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> epochs;
  std::optional<double> learning_rate;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> warmup;
  bool include_not_mentioned = false;
  bool keep_not_mentioned = false;
  bool by_category = false;
  bool by_term_count = false;
  bool changed_status = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "Run config (JSON)");
  cmd->add_option("--schema", o.schema, "Schema document (YAML)");
  cmd->add_option("-o,--out", o.output_dir, "Output directory");
  cmd->add_option("--seed", o.seed, "Random seed");
  cmd->add_option("--window-size", o.window_size, "Turns per window");
  cmd->add_option("--mode", o.mode, "two_stage or one_stage")
      ->check(CLI::IsMember({"two_stage", "one_stage"}));
  cmd->add_flag("--include-not-mentioned", o.include_not_mentioned,
                "Add the not-mentioned candidate to status prompts");
}

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (!o.schema.empty()) c.schema = o.schema;
  if (!o.corpus.empty()) c.corpus.assign(o.corpus.begin(), o.corpus.end());
  if (!o.windows.empty()) c.windows = o.windows;
  if (!o.samples.empty()) c.samples = o.samples;
  if (!o.valid_windows.empty()) c.valid_windows = o.valid_windows;
  if (!o.predictions.empty()) c.predictions = o.predictions;
  if (!o.checkpoint.empty()) c.checkpoint = o.checkpoint;
  if (!o.output_dir.empty()) c.output_dir = o.output_dir;
  if (o.seed) c.seed = o.seed;
  if (o.window_size) c.window_size = *o.window_size;
  if (!o.mode.empty()) c.extraction.mode = parse_extraction_mode(o.mode);
  if (!o.backend.empty()) c.backend.name = o.backend;
  if (!o.term_policy.empty()) c.extraction.term_parse_policy = parse_term_policy(o.term_policy);
  if (!o.training_mode.empty()) c.training_mode = parse_training_mode(o.training_mode);
  if (!o.mix.empty()) c.mix = parse_mix_policy(o.mix);
  if (o.workers) c.extraction.workers = *o.workers;
  if (o.include_not_mentioned) c.extraction.include_not_mentioned = true;
  if (o.keep_not_mentioned) c.extraction.drop_not_mentioned = false;
  if (o.by_category) c.eval.by_category = true;
  if (o.by_term_count) c.eval.by_term_count = true;
  if (o.changed_status) c.eval.changed_status = true;
  if (o.epochs || o.learning_rate || o.batch_size || o.warmup) {
    Hyperparams hp = c.resolved_hyperparams();
    if (o.epochs) hp.epochs = *o.epochs;
    if (o.learning_rate) hp.learning_rate = *o.learning_rate;
    if (o.batch_size) hp.batch_size = *o.batch_size;
    if (o.warmup) hp.warmup_steps = *o.warmup;
    c.hyperparams = hp;
  }
  if (c.window_size == 0) throw ConfigError("window size must be positive");
  return c;
}

struct SynthOptions {
  std::string out = "synthetic";
  std::size_t categories = 4;
  std::size_t terms = 6;
  std::size_t statuses = 3;
  std::size_t dialogues = 50;
  std::optional<std::size_t> total_turns;
  std::uint64_t seed = 0;
};

int run_synth(const SynthOptions& s) {
  const Schema schema = synthetic_schema(s.categories, s.terms, s.statuses);
  SyntheticCorpusSpec spec;
  spec.dialogues = s.dialogues;
  spec.total_turns = s.total_turns;
  spec.seed = s.seed;
  const auto dialogues = synthetic_corpus(schema, spec);
  const std::filesystem::path dir = s.out;
  {
    auto out = open_output(dir / "schema.yaml");
    out << dump_schema(schema);
  }
  {
    auto out = open_output(dir / "corpus.jsonl");
    for (const auto& d : dialogues) out << dialogue_to_json(d).dump() << '\n';
  }
  std::cout << "wrote " << dialogues.size() << " dialogues to " << (dir / "corpus.jsonl").string()
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Term and status extraction from medical dialogues"};
  app.require_subcommand(1);

  Overrides o;
  SynthOptions synth;

  auto* prepare = app.add_subcommand("prepare", "Build windows and training samples from a corpus");
  add_common(prepare, o);
  prepare->add_option("--corpus", o.corpus, "Dialogue corpus files (JSONL)");

  auto* train = app.add_subcommand("train", "Train a backend on prepared samples");
  add_common(train, o);
  train->add_option("--samples", o.samples, "samples.jsonl from prepare");
  train->add_option("--valid", o.valid_windows, "Validation windows for checkpoint selection");
  train->add_option("--backend", o.backend, "oracle or tiny");
  train->add_option("--training-mode", o.training_mode, "full_data or low_resource");
  train->add_option("--mix", o.mix, "joint_shuffle or alternating");
  train->add_option("--epochs", o.epochs, "Epoch count");
  train->add_option("--lr", o.learning_rate, "Peak learning rate");
  train->add_option("--batch-size", o.batch_size, "Batch size");
  train->add_option("--warmup", o.warmup, "Warmup steps");

  auto* predict = app.add_subcommand("predict", "Extract term/status pairs for every window");
  add_common(predict, o);
  predict->add_option("--windows", o.windows, "windows.jsonl from prepare");
  predict->add_option("--backend", o.backend, "oracle or tiny");
  predict->add_option("--checkpoint", o.checkpoint, "Backend checkpoint");
  predict->add_option("--term-policy", o.term_policy, "strict or keep_unknown");
  predict->add_option("--workers", o.workers, "Windows processed concurrently");
  predict->add_flag("--keep-not-mentioned", o.keep_not_mentioned,
                    "Keep not-mentioned answers instead of dropping them");

  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against gold");
  add_common(evaluate, o);
  evaluate->add_option("--corpus", o.corpus, "Gold corpus files (JSONL)");
  evaluate->add_option("--predictions", o.predictions, "predictions.jsonl from predict");
  evaluate->add_flag("--by-category", o.by_category, "Per-category breakdown");
  evaluate->add_flag("--by-term-count", o.by_term_count, "Breakdown by gold term count");
  evaluate->add_flag("--changed-status", o.changed_status, "Changed-status subset");

  auto* analyze = app.add_subcommand("analyze", "Breakdown tables only");
  add_common(analyze, o);
  analyze->add_option("--corpus", o.corpus, "Gold corpus files (JSONL)");
  analyze->add_option("--predictions", o.predictions, "predictions.jsonl from predict");
  analyze->add_flag("--by-category", o.by_category, "Per-category breakdown");
  analyze->add_flag("--by-term-count", o.by_term_count, "Breakdown by gold term count");
  analyze->add_flag("--changed-status", o.changed_status, "Changed-status subset");

  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic schema and corpus");
  synth_cmd->add_option("-o,--out", synth.out, "Output directory");
  synth_cmd->add_option("--categories", synth.categories, "Category count");
  synth_cmd->add_option("--terms", synth.terms, "Terms per category");
  synth_cmd->add_option("--statuses", synth.statuses, "Statuses per category");
  synth_cmd->add_option("--dialogues", synth.dialogues, "Dialogue count");
  synth_cmd->add_option("--total-turns", synth.total_turns, "Exact merged turn count");
  synth_cmd->add_option("--seed", synth.seed, "Random seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth_cmd) return run_synth(synth);
    const RunConfig config = resolve(o);
    if (*prepare) {
      cmd_prepare(config, std::cout);
    } else if (*train) {
      cmd_train(config, std::cout);
    } else if (*predict) {
      const auto run = cmd_predict(config, std::cout);
      for (const auto& f : run.failures)
        std::cerr << "window " << to_string(f.key) << ": " << f.message << '\n';
      if (!run.failures.empty()) return 1;
    } else if (*evaluate) {
      cmd_evaluate(config, std::cout);
    } else if (*analyze) {
      cmd_analyze(config, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
