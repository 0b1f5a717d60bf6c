#include "termstat/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "termstat/error.hpp"
#include "termstat/mock_oracle.hpp"
#include "termstat/random.hpp"
#include "termstat/tiny_seq2seq.hpp"

namespace termstat {

namespace fs = std::filesystem;

std::string_view to_string(TrainingMode mode) {
  return mode == TrainingMode::full_data ? "full_data" : "low_resource";
}

TrainingMode parse_training_mode(std::string_view text) {
  if (text == "full_data") return TrainingMode::full_data;
  if (text == "low_resource") return TrainingMode::low_resource;
  throw ConfigError("unknown training mode \"" + std::string(text) + "\"");
}

std::uint64_t RunConfig::require_seed() const {
  if (!seed) throw ConfigError("a seed is required (--seed or \"seed\" in the run config)");
  return *seed;
}

Hyperparams RunConfig::resolved_hyperparams() const {
  if (hyperparams) return *hyperparams;
  const std::uint64_t s = require_seed();
  return extraction.mode == ExtractionMode::one_stage ? Hyperparams::one_stage(s)
                                                      : Hyperparams::two_stage(s);
}

namespace {

Json paths_to_json(const std::vector<fs::path>& paths) {
  Json out = Json::array();
  for (const auto& p : paths) out.push_back(p.string());
  return out;
}

Json buckets_to_json(const std::vector<TermCountBucket>& buckets) {
  Json out = Json::array();
  for (const auto& b : buckets) out.push_back({{"lo", b.lo}, {"hi", b.hi ? Json(*b.hi) : Json(nullptr)}});
  return out;
}

}  // namespace

Json to_json(const RunConfig& c) {
  Json j = {{"schema", c.schema.string()},
            {"corpus", paths_to_json(c.corpus)},
            {"windows", c.windows.string()},
            {"samples", c.samples.string()},
            {"valid_windows", c.valid_windows.string()},
            {"predictions", c.predictions.string()},
            {"checkpoint", c.checkpoint.string()},
            {"output_dir", c.output_dir.string()},
            {"window_size", c.window_size},
            {"prompt", c.prompt},
            {"extraction", to_json(c.extraction)},
            {"augment", to_json(c.augment)},
            {"training_mode", to_string(c.training_mode)},
            {"mix", to_string(c.mix)},
            {"backend", {{"name", c.backend.name}, {"options", c.backend.options}}},
            {"eval",
             {{"by_category", c.eval.by_category},
              {"by_term_count", c.eval.by_term_count},
              {"changed_status", c.eval.changed_status},
              {"buckets", buckets_to_json(c.eval.buckets)}}}};
  j["seed"] = c.seed ? Json(*c.seed) : Json(nullptr);
  j["hyperparams"] = c.hyperparams ? to_json(*c.hyperparams) : Json(nullptr);
  j["finetune_hyperparams"] = c.finetune_hyperparams ? to_json(*c.finetune_hyperparams) : Json(nullptr);
  return j;
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  try {
    auto path = [&](const char* key, fs::path& field) {
      if (j.contains(key)) field = j.at(key).get<std::string>();
    };
    path("schema", c.schema);
    path("windows", c.windows);
    path("samples", c.samples);
    path("valid_windows", c.valid_windows);
    path("predictions", c.predictions);
    path("checkpoint", c.checkpoint);
    path("output_dir", c.output_dir);
    if (j.contains("corpus"))
      for (const auto& p : j.at("corpus")) c.corpus.emplace_back(p.get<std::string>());
    if (j.contains("seed") && !j.at("seed").is_null()) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("window_size")) c.window_size = j.at("window_size").get<std::size_t>();
    if (j.contains("prompt")) c.prompt = j.at("prompt");
    if (j.contains("extraction"))
      c.extraction = extraction_config_from_json(j.at("extraction"), c.extraction);
    if (j.contains("augment")) c.augment = augment_config_from_json(j.at("augment"), c.augment);
    if (j.contains("training_mode"))
      c.training_mode = parse_training_mode(j.at("training_mode").get<std::string>());
    if (j.contains("mix")) c.mix = parse_mix_policy(j.at("mix").get<std::string>());
    if (j.contains("hyperparams") && !j.at("hyperparams").is_null())
      c.hyperparams = hyperparams_from_json(j.at("hyperparams"), Hyperparams::two_stage(0));
    if (j.contains("finetune_hyperparams") && !j.at("finetune_hyperparams").is_null())
      c.finetune_hyperparams =
          hyperparams_from_json(j.at("finetune_hyperparams"), Hyperparams::two_stage(0));
    if (j.contains("backend")) {
      const Json& b = j.at("backend");
      if (b.contains("name")) c.backend.name = b.at("name").get<std::string>();
      if (b.contains("options")) c.backend.options = b.at("options");
    }
    if (j.contains("eval")) {
      const Json& e = j.at("eval");
      c.eval.by_category = e.value("by_category", false);
      c.eval.by_term_count = e.value("by_term_count", false);
      c.eval.changed_status = e.value("changed_status", false);
      if (e.contains("buckets")) {
        c.eval.buckets.clear();
        for (const auto& b : e.at("buckets")) {
          TermCountBucket bucket;
          bucket.lo = b.at("lo").get<std::size_t>();
          if (b.contains("hi") && !b.at("hi").is_null()) bucket.hi = b.at("hi").get<std::size_t>();
          c.eval.buckets.push_back(bucket);
        }
      }
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  }
  if (c.window_size == 0) throw ConfigError("window_size must be positive");
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  auto in = open_input(path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

PromptConfig resolve_prompts(const RunConfig& config, const Schema& schema) {
  PromptConfig prompts = prompt_config_from_json(config.prompt, PromptConfig::from_schema(schema));
  prompts.include_not_mentioned = config.extraction.mode == ExtractionMode::two_stage &&
                                  config.extraction.include_not_mentioned;
  prompts.validate(schema);
  return prompts;
}

std::string PrepareStats::summary_line() const {
  return "dialogues=" + std::to_string(dialogues) + " windows=" + std::to_string(windows) +
         " terms=" + std::to_string(terms) + " statuses=" + std::to_string(statuses);
}

Json to_json(const PrepareStats& s) {
  return {{"dialogues", s.dialogues},
          {"windows", s.windows},
          {"terms", s.terms},
          {"statuses", s.statuses},
          {"term_samples", s.term_samples},
          {"status_samples", s.status_samples},
          {"negative_samples", s.negative_samples},
          {"term_only_samples", s.term_only_samples}};
}

namespace {

Schema require_schema(const RunConfig& config) {
  if (config.schema.empty()) throw ConfigError("a schema path is required");
  return load_schema_file(config.schema);
}

void write_json(const fs::path& path, const Json& j) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
}

void add_fingerprint(Json& inputs, const fs::path& path) {
  if (!path.empty() && fs::exists(path)) inputs[path.string()] = fingerprint_file(path);
}

void write_manifest(const RunConfig& config, std::string_view command, const Schema* schema,
                    const std::vector<fs::path>& inputs, Json extra) {
  Json fingerprints = Json::object();
  for (const auto& p : inputs) add_fingerprint(fingerprints, p);
  Json manifest = {{"command", command},
                   {"config", to_json(config)},
                   {"inputs", std::move(fingerprints)}};
  if (schema) manifest["schema_version"] = schema->version();
  for (auto& [k, v] : extra.items()) manifest[k] = v;
  write_json(config.output_dir / "manifest.json", manifest);
}

std::vector<Dialogue> load_corpus(const RunConfig& config, const Schema& schema) {
  if (config.corpus.empty()) throw ConfigError("at least one corpus path is required");
  std::vector<Dialogue> dialogues;
  for (const auto& path : config.corpus) {
    auto part = ingest_dialogues_file(path, schema);
    std::move(part.begin(), part.end(), std::back_inserter(dialogues));
  }
  return dialogues;
}

std::vector<Window> load_windows(const fs::path& path) {
  auto in = open_input(path);
  try {
    return read_windows(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<Sample> load_samples(const fs::path& path) {
  auto in = open_input(path);
  try {
    return read_samples(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string percent(double v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%6.2f", 100.0 * v);
  return buf;
}

}  // namespace

PrepareStats cmd_prepare(const RunConfig& config, std::ostream& log) {
  const Schema schema = require_schema(config);
  const PromptConfig prompts = resolve_prompts(config, schema);
  const auto dialogues = load_corpus(config, schema);
  const auto windows = prepare_windows(dialogues, schema, config.window_size);

  PrepareStats stats;
  stats.dialogues = dialogues.size();
  stats.windows = windows.size();
  stats.terms = schema.term_count();
  stats.statuses = schema.distinct_status_count();

  std::vector<Sample> samples;
  if (config.extraction.mode == ExtractionMode::one_stage) {
    samples = build_one_stage_samples(windows, prompts);
    stats.term_samples = samples.size();
  } else {
    samples = build_term_samples(windows, prompts);
    stats.term_samples = samples.size();
    auto status = build_status_samples(windows, schema, prompts);
    stats.status_samples = status.size();
    std::move(status.begin(), status.end(), std::back_inserter(samples));
    if (prompts.include_not_mentioned) {
      for (const auto& w : windows) {
        auto neg = sample_not_mentioned_negatives(w, schema, config.augment, prompts);
        stats.negative_samples += neg.size();
        std::move(neg.begin(), neg.end(), std::back_inserter(samples));
      }
    }
  }

  std::vector<Sample> term_only;
  for (const auto& source : config.augment.term_only_sources) {
    auto in = open_input(source);
    const auto records = ingest_term_only(in, schema, config.window_size);
    auto part = augment_term_only(records, prompts);
    std::move(part.begin(), part.end(), std::back_inserter(term_only));
  }
  if (config.augment.term_only_cap && term_only.size() > *config.augment.term_only_cap) {
    Rng rng(mix_seed(config.require_seed(), "term_only_cap"));
    seeded_shuffle(std::span(term_only), rng);
    term_only.resize(*config.augment.term_only_cap);
  }
  stats.term_only_samples = term_only.size();

  fs::create_directories(config.output_dir);
  {
    auto out = open_output(config.output_dir / "windows.jsonl");
    write_windows(out, windows);
  }
  {
    auto out = open_output(config.output_dir / "samples.jsonl");
    write_samples(out, samples);
  }
  if (!config.augment.term_only_sources.empty()) {
    auto out = open_output(config.output_dir / "term_only_samples.jsonl");
    write_samples(out, term_only);
  }
  write_json(config.output_dir / "stats.json", to_json(stats));

  std::vector<fs::path> inputs{config.schema};
  inputs.insert(inputs.end(), config.corpus.begin(), config.corpus.end());
  for (const auto& s : config.augment.term_only_sources) inputs.emplace_back(s);
  write_manifest(config, "prepare", &schema, inputs, {{"stats", to_json(stats)}});

  log << stats.summary_line() << '\n';
  return stats;
}

std::unique_ptr<Backend> make_backend(const RunConfig& config, const Schema& schema,
                                      const PromptConfig& prompts,
                                      std::span<const Window> windows) {
  if (config.backend.name == "oracle") {
    const Corruption corruption = config.backend.options.contains("corruption")
                                      ? corruption_from_json(config.backend.options.at("corruption"))
                                      : Corruption{};
    return std::make_unique<MockOracle>(windows, schema, prompts, corruption);
  }
  if (config.backend.name == "tiny") {
    TinySeq2SeqConfig tc;
    tc.sos = prompts.sos;
    tc.sep = prompts.sep;
    tc.separator = prompts.separator;
    tc.seed = config.seed.value_or(0);
    return std::make_unique<TinySeq2Seq>(tiny_config_from_json(config.backend.options, tc));
  }
  throw ConfigError("unknown backend \"" + config.backend.name + "\" (expected oracle or tiny)");
}

TrainSummary cmd_train(const RunConfig& config, std::ostream& log) {
  const Schema schema = require_schema(config);
  const PromptConfig prompts = resolve_prompts(config, schema);
  const std::uint64_t seed = config.require_seed();
  if (config.samples.empty()) throw ConfigError("a samples path is required");
  const auto samples = load_samples(config.samples);

  std::vector<Sample> term_only;
  const fs::path term_only_path = config.samples.parent_path() / "term_only_samples.jsonl";
  if (config.training_mode == TrainingMode::low_resource && fs::exists(term_only_path))
    term_only = load_samples(term_only_path);

  std::vector<Window> valid;
  if (!config.valid_windows.empty()) valid = load_windows(config.valid_windows);

  auto backend = make_backend(config, schema, prompts, valid);
  TrainSummary summary;
  summary.checkpoint = config.output_dir / "checkpoint.bin";
  fs::create_directories(config.output_dir);

  if (!backend->trainable()) {
    log << "backend " << backend->name() << " has no trainable state; writing its spec\n";
    backend->save(summary.checkpoint);
  } else {
    Hyperparams hp = config.resolved_hyperparams();
    hp.seed = seed;
    std::optional<Hyperparams> finetune = config.finetune_hyperparams;
    if (finetune) finetune->seed = seed;

    TrainOptions options;
    options.mix = config.mix;
    bool saved_best = false;
    options.on_epoch_end = [&](const EpochEnd& e) {
      log << "epoch " << e.epoch + 1 << " steps " << e.steps << " loss " << e.mean_loss;
      if (!valid.empty()) {
        const auto run = extract_corpus(valid, *backend, schema, config.extraction, prompts);
        const auto aligned = align(run.results, valid);
        const double f1 = aligned.empty() ? 0.0 : score_window_level(aligned, EvalMode::full).prf.f1;
        log << " valid_full_f1 " << f1;
        if (!summary.best_valid_f1 || f1 > *summary.best_valid_f1) {
          summary.best_valid_f1 = f1;
          summary.best_epoch = e.epoch;
          backend->save(summary.checkpoint);
          saved_best = true;
        }
      }
      log << '\n';
    };

    if (config.training_mode == TrainingMode::low_resource) {
      summary.phases =
          low_resource_schedule(*backend, term_only, samples, hp, finetune, options).phases;
    } else {
      summary.phases.push_back(train(*backend, samples, hp, options));
    }
    if (!saved_best) backend->save(summary.checkpoint);

    auto loss_out = open_output(config.output_dir / "loss.jsonl");
    for (const auto& phase : summary.phases)
      for (std::size_t i = 0; i < phase.losses.size(); ++i)
        loss_out << Json{{"phase", phase.phase}, {"step", i}, {"loss", phase.losses[i]}}.dump()
                 << '\n';
  }

  Json phases = Json::array();
  for (const auto& p : summary.phases) {
    Json ph = {{"phase", p.phase}, {"samples", p.sample_count}, {"steps", p.steps}};
    if (!p.losses.empty()) {
      ph["first_loss"] = p.losses.front();
      ph["last_loss"] = p.losses.back();
    }
    phases.push_back(std::move(ph));
  }
  Json extra = {{"phases", phases},
                {"checkpoint", summary.checkpoint.string()},
                {"hyperparams", backend->trainable() ? to_json(config.resolved_hyperparams())
                                                     : Json(nullptr)}};
  if (summary.best_valid_f1) {
    extra["best_valid_full_f1"] = *summary.best_valid_f1;
    extra["best_epoch"] = *summary.best_epoch;
  }
  std::vector<fs::path> inputs{config.schema, config.samples, config.valid_windows};
  if (!term_only.empty()) inputs.push_back(term_only_path);
  write_manifest(config, "train", &schema, inputs, extra);
  return summary;
}

CorpusExtraction cmd_predict(const RunConfig& config, std::ostream& log) {
  const Schema schema = require_schema(config);
  const PromptConfig prompts = resolve_prompts(config, schema);
  if (config.windows.empty()) throw ConfigError("a windows path is required");
  const auto windows = load_windows(config.windows);

  auto backend = make_backend(config, schema, prompts, windows);
  if (!config.checkpoint.empty())
    backend->load(config.checkpoint);
  else if (backend->trainable())
    throw ConfigError("backend " + backend->name() + " needs a checkpoint");

  auto run = extract_corpus(windows, *backend, schema, config.extraction, prompts);
  {
    auto out = open_output(config.output_dir / "predictions.jsonl");
    write_predictions(out, run.results);
  }
  Json failures = Json::array();
  for (const auto& f : run.failures)
    failures.push_back({{"window", to_string(f.key)}, {"error", f.message}});
  write_manifest(config, "predict", &schema,
                 {config.schema, config.windows, config.checkpoint},
                 {{"windows", windows.size()},
                  {"predicted", run.results.size()},
                  {"failures", failures},
                  {"diagnostics", to_json(run.totals)}});
  log << "predicted " << run.results.size() << "/" << windows.size() << " windows";
  if (!run.failures.empty()) log << ", " << run.failures.size() << " failed";
  log << "; diagnostics unknown_terms=" << run.totals.unknown_term_count
      << " invalid_statuses=" << run.totals.invalid_status_count
      << " dropped_not_mentioned=" << run.totals.dropped_not_mentioned_count
      << " malformed=" << run.totals.malformed_fragment_count << '\n';
  return run;
}

namespace {

struct EvalInputs {
  Schema schema;
  std::vector<Dialogue> dialogues;
  std::vector<Window> windows;
  std::vector<ExtractionResult> predictions;
  std::vector<AlignedWindow> aligned;
};

EvalInputs load_eval_inputs(const RunConfig& config) {
  Schema schema = require_schema(config);
  auto dialogues = load_corpus(config, schema);
  auto windows = prepare_windows(dialogues, schema, config.window_size);
  if (config.predictions.empty()) throw ConfigError("a predictions path is required");
  auto in = open_input(config.predictions);
  auto predictions = read_predictions(in);
  auto aligned = align(predictions, windows);
  return {std::move(schema), std::move(dialogues), std::move(windows), std::move(predictions),
          std::move(aligned)};
}

Json breakdowns(const RunConfig& config, const EvalInputs& in, std::ostream& log,
                bool by_category, bool by_term_count, bool changed_status) {
  Json out = Json::object();
  auto print_row = [&](const std::string& name, const EvalReport& term, const EvalReport& full) {
    log << "  " << std::left << std::setw(16) << name << std::right;
    if (term.empty) {
      log << "  (empty)\n";
      return;
    }
    for (const Prf* p : {&term.prf, &full.prf})
      log << "  " << percent(p->precision) << "  " << percent(p->recall) << "  " << percent(p->f1);
    log << "   n=" << term.n_units << '\n';
  };
  auto header = [&](const std::string& title) {
    log << title << "\n  " << std::left << std::setw(16) << "slice" << std::right;
    for (const char* col : {"term P", "term R", "term F1", "full P", "full R", "full F1"})
      log << std::setw(8) << col;
    log << '\n';
  };

  if (by_category) {
    const auto term = breakdown_by_category(in.aligned, in.schema, EvalMode::term);
    const auto full = breakdown_by_category(in.aligned, in.schema, EvalMode::full);
    header("by category");
    Json j = Json::object();
    for (const auto& [name, r] : term) {
      j[name] = {{"term", to_json(r)}, {"full", to_json(full.at(name))}};
      print_row(name, r, full.at(name));
    }
    out["by_category"] = std::move(j);
  }
  if (by_term_count) {
    const auto term = breakdown_by_term_count(in.aligned, config.eval.buckets, EvalMode::term);
    const auto full = breakdown_by_term_count(in.aligned, config.eval.buckets, EvalMode::full);
    header("by gold term count");
    Json j = Json::object();
    for (const auto& b : config.eval.buckets) {
      const auto label = b.label();
      j[label] = {{"term", to_json(term.at(label))}, {"full", to_json(full.at(label))}};
      print_row(label, term.at(label), full.at(label));
    }
    out["by_term_count"] = std::move(j);
  }
  if (changed_status) {
    const auto keys = filter_changed_status(in.dialogues, config.window_size);
    const std::set<WindowKey> selected(keys.begin(), keys.end());
    std::vector<AlignedWindow> subset;
    for (const auto& a : in.aligned)
      if (selected.count(a.key)) subset.push_back(a);
    header("changed-status windows");
    Json j = {{"windows", subset.size()}};
    if (!subset.empty()) {
      const auto term = score_window_level(subset, EvalMode::term);
      const auto full = score_window_level(subset, EvalMode::full);
      j["term"] = to_json(term);
      j["full"] = to_json(full);
      print_row("changed", term, full);
    } else {
      log << "  (no windows)\n";
    }
    out["changed_status"] = std::move(j);
  }
  return out;
}

}  // namespace

EvaluationSummary cmd_evaluate(const RunConfig& config, std::ostream& log) {
  const EvalInputs in = load_eval_inputs(config);
  EvaluationSummary s;
  s.window_term = score_window_level(in.aligned, EvalMode::term);
  s.window_full = score_window_level(in.aligned, EvalMode::full);
  s.dialogue_term = score_dialogue_level(in.predictions, in.dialogues, EvalMode::term);
  s.dialogue_full = score_dialogue_level(in.predictions, in.dialogues, EvalMode::full);
  for (const auto& p : in.predictions) s.diagnostics += p.diagnostics;

  Json levels = Json::array();
  for (const auto* r : {&s.window_term, &s.window_full, &s.dialogue_term, &s.dialogue_full})
    levels.push_back(to_json(*r));
  Json pooled = Json::array();
  pooled.push_back(to_json(score_window_level(in.aligned, EvalMode::term, Aggregation::pooled_micro)));
  pooled.push_back(to_json(score_window_level(in.aligned, EvalMode::full, Aggregation::pooled_micro)));
  pooled.push_back(to_json(
      score_dialogue_level(in.predictions, in.dialogues, EvalMode::term, Aggregation::pooled_micro)));
  pooled.push_back(to_json(
      score_dialogue_level(in.predictions, in.dialogues, EvalMode::full, Aggregation::pooled_micro)));

  log << "level     mode   precision  recall      f1\n";
  for (const auto* r : {&s.window_term, &s.window_full, &s.dialogue_term, &s.dialogue_full})
    log << std::left << std::setw(10) << to_string(r->level) << std::setw(5) << to_string(r->mode)
        << "   " << percent(r->prf.precision) << "   " << percent(r->prf.recall) << "  "
        << percent(r->prf.f1) << '\n';

  s.report = {{"reports", std::move(levels)},
              {"pooled_micro", std::move(pooled)},
              {"diagnostics", to_json(s.diagnostics)},
              {"windows", in.windows.size()},
              {"dialogues", in.dialogues.size()}};
  const Json extra = breakdowns(config, in, log, config.eval.by_category,
                                config.eval.by_term_count, config.eval.changed_status);
  for (auto& [k, v] : extra.items()) s.report[k] = v;

  write_json(config.output_dir / "report.json", s.report);
  std::vector<fs::path> inputs{config.schema, config.predictions};
  inputs.insert(inputs.end(), config.corpus.begin(), config.corpus.end());
  write_manifest(config, "evaluate", &in.schema, inputs, {{"report", "report.json"}});
  return s;
}

Json cmd_analyze(const RunConfig& config, std::ostream& log) {
  const EvalInputs in = load_eval_inputs(config);
  const bool any = config.eval.by_category || config.eval.by_term_count || config.eval.changed_status;
  const Json report = any ? breakdowns(config, in, log, config.eval.by_category,
                                       config.eval.by_term_count, config.eval.changed_status)
                          : breakdowns(config, in, log, true, true, true);
  write_json(config.output_dir / "analysis.json", report);
  std::vector<fs::path> inputs{config.schema, config.predictions};
  inputs.insert(inputs.end(), config.corpus.begin(), config.corpus.end());
  write_manifest(config, "analyze", &in.schema, inputs, {{"report", "analysis.json"}});
  return report;
}

}  // namespace termstat
