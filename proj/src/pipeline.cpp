#include "termstat/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <istream>
#include <optional>
#include <ostream>
#include <thread>

#include "termstat/error.hpp"

namespace termstat {

std::string_view to_string(ExtractionMode mode) {
  return mode == ExtractionMode::two_stage ? "two_stage" : "one_stage";
}

ExtractionMode parse_extraction_mode(std::string_view text) {
  if (text == "two_stage") return ExtractionMode::two_stage;
  if (text == "one_stage") return ExtractionMode::one_stage;
  throw ConfigError("unknown extraction mode \"" + std::string(text) + "\"");
}

Json to_json(const ExtractionConfig& c) {
  return {{"mode", to_string(c.mode)},
          {"term_parse_policy", to_string(c.term_parse_policy)},
          {"include_not_mentioned", c.include_not_mentioned},
          {"max_new_tokens_terms", c.max_new_tokens_terms},
          {"max_new_tokens_status", c.max_new_tokens_status},
          {"max_new_tokens_pairs", c.max_new_tokens_pairs},
          {"drop_not_mentioned", c.drop_not_mentioned},
          {"workers", c.workers}};
}

ExtractionConfig extraction_config_from_json(const Json& j, ExtractionConfig c) {
  if (j.contains("mode")) c.mode = parse_extraction_mode(j.at("mode").get<std::string>());
  if (j.contains("term_parse_policy"))
    c.term_parse_policy = parse_term_policy(j.at("term_parse_policy").get<std::string>());
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("include_not_mentioned", c.include_not_mentioned);
  get("max_new_tokens_terms", c.max_new_tokens_terms);
  get("max_new_tokens_status", c.max_new_tokens_status);
  get("max_new_tokens_pairs", c.max_new_tokens_pairs);
  get("drop_not_mentioned", c.drop_not_mentioned);
  get("workers", c.workers);
  if (c.workers == 0) throw ConfigError("workers must be positive");
  return c;
}

Diagnostics& Diagnostics::operator+=(const Diagnostics& o) {
  unknown_term_count += o.unknown_term_count;
  invalid_status_count += o.invalid_status_count;
  dropped_not_mentioned_count += o.dropped_not_mentioned_count;
  malformed_fragment_count += o.malformed_fragment_count;
  return *this;
}

std::size_t Diagnostics::total() const {
  return unknown_term_count + invalid_status_count + dropped_not_mentioned_count +
         malformed_fragment_count;
}

Json to_json(const Diagnostics& d) {
  return {{"unknown_term_count", d.unknown_term_count},
          {"invalid_status_count", d.invalid_status_count},
          {"dropped_not_mentioned_count", d.dropped_not_mentioned_count},
          {"malformed_fragment_count", d.malformed_fragment_count}};
}

std::span<const Turn> fit_turns(std::span<const Turn> turns, const Backend& backend,
                                const std::function<std::string(std::span<const Turn>)>& build) {
  const auto limit = backend.max_input_length();
  if (!limit) return turns;
  while (turns.size() > 1 && backend.input_length(build(turns)) > *limit)
    turns = turns.subspan(1);
  return turns;
}

namespace {

std::string call(const Backend& backend, GenerationRequest request) {
  const std::string tag = std::string("stage ") + std::string(to_string(request.key->stage));
  try {
    return backend.generate(request);
  } catch (const BackendError& e) {
    throw BackendError(tag + ": " + e.what());
  } catch (const std::exception& e) {
    throw BackendError(tag + ": " + e.what());
  }
}

}  // namespace

ExtractionResult extract_two_stage(const Window& window, const Backend& backend,
                                   const Schema& schema, const ExtractionConfig& config,
                                   const PromptConfig& base_prompts) {
  PromptConfig prompts = base_prompts;
  prompts.include_not_mentioned = config.include_not_mentioned;

  ExtractionResult result;
  result.key = window.key();

  const std::span<const Turn> all_turns(window.turns);
  const auto term_turns = fit_turns(all_turns, backend, [&](std::span<const Turn> t) {
    return build_term_input(t, prompts);
  });
  GenerationRequest term_request{build_term_input(term_turns, prompts),
                                 config.max_new_tokens_terms, DecodeStrategy::greedy,
                                 RequestKey{Stage::term, window.dialogue_id, window.end_turn, {}}};
  const TermParse parsed =
      parse_terms(call(backend, std::move(term_request)), schema, config.term_parse_policy, prompts);
  result.diagnostics.unknown_term_count += parsed.unknown_count;

  for (const auto& term : parsed.terms) {
    if (!schema.has_term(term)) {
      // keep_unknown: no prompt can be built without a schema lookup.
      result.pairs.push_back({term, kInvalidStatus});
      continue;
    }
    const auto candidates = schema.status_candidates(term, prompts.include_not_mentioned);
    const auto status_turns = fit_turns(all_turns, backend, [&](std::span<const Turn> t) {
      return build_status_input(t, term, schema, prompts);
    });
    GenerationRequest status_request{
        build_status_input(status_turns, term, schema, prompts), config.max_new_tokens_status,
        DecodeStrategy::greedy, RequestKey{Stage::status, window.dialogue_id, window.end_turn, term}};
    const auto status = parse_status(call(backend, std::move(status_request)), candidates, prompts);
    if (!status) {
      ++result.diagnostics.invalid_status_count;
      result.pairs.push_back({term, kInvalidStatus});
    } else if (*status == prompts.not_mentioned && config.drop_not_mentioned) {
      ++result.diagnostics.dropped_not_mentioned_count;
    } else {
      result.pairs.push_back({term, *status});
    }
  }
  return result;
}

ExtractionResult extract_one_stage(const Window& window, const Backend& backend,
                                   const Schema& schema, const ExtractionConfig& config,
                                   const PromptConfig& base_prompts) {
  PromptConfig prompts = base_prompts;
  prompts.include_not_mentioned = false;

  ExtractionResult result;
  result.key = window.key();
  const auto turns = fit_turns(std::span<const Turn>(window.turns), backend,
                               [&](std::span<const Turn> t) { return build_term_input(t, prompts); });
  GenerationRequest request{build_term_input(turns, prompts), config.max_new_tokens_pairs,
                            DecodeStrategy::greedy,
                            RequestKey{Stage::one_stage, window.dialogue_id, window.end_turn, {}}};
  PairParse parsed = parse_pairs_one_stage(call(backend, std::move(request)), schema,
                                           config.term_parse_policy, prompts);
  result.pairs = std::move(parsed.pairs);
  result.diagnostics.unknown_term_count = parsed.unknown_term_count;
  result.diagnostics.invalid_status_count = parsed.invalid_status_count;
  result.diagnostics.malformed_fragment_count = parsed.malformed_fragment_count;
  return result;
}

ExtractionResult extract(const Window& window, const Backend& backend, const Schema& schema,
                         const ExtractionConfig& config, const PromptConfig& prompts) {
  return config.mode == ExtractionMode::two_stage
             ? extract_two_stage(window, backend, schema, config, prompts)
             : extract_one_stage(window, backend, schema, config, prompts);
}

CorpusExtraction extract_corpus(std::span<const Window> windows, const Backend& backend,
                                const Schema& schema, const ExtractionConfig& config,
                                const PromptConfig& prompts) {
  std::vector<std::optional<ExtractionResult>> slots(windows.size());
  std::vector<std::optional<std::string>> errors(windows.size());
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    for (std::size_t i = next++; i < windows.size(); i = next++) {
      try {
        slots[i] = extract(windows[i], backend, schema, config, prompts);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };

  const std::size_t n_threads = std::min(std::max<std::size_t>(config.workers, 1), windows.size());
  if (n_threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
  }

  CorpusExtraction out;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (slots[i]) {
      out.totals += slots[i]->diagnostics;
      out.results.push_back(std::move(*slots[i]));
    } else {
      out.failures.push_back({windows[i].key(), errors[i].value_or("unknown error")});
    }
  }
  return out;
}

Json result_to_json(const ExtractionResult& r) {
  Json pairs = Json::array();
  for (const auto& p : r.pairs)
    pairs.push_back({{"term", p.term}, {"status", is_invalid(p) ? Json(nullptr) : Json(p.status)}});
  return {{"dialogue_id", r.key.dialogue_id},
          {"end_turn", r.key.end_turn},
          {"pairs", std::move(pairs)},
          {"diagnostics", to_json(r.diagnostics)}};
}

ExtractionResult result_from_json(const Json& record) {
  ExtractionResult r;
  r.key.dialogue_id = record.at("dialogue_id").get<std::string>();
  r.key.end_turn = record.at("end_turn").get<std::size_t>();
  for (const auto& p : record.at("pairs")) {
    const Json& status = p.at("status");
    r.pairs.push_back(
        {p.at("term").get<std::string>(), status.is_null() ? kInvalidStatus : status.get<std::string>()});
  }
  if (record.contains("diagnostics")) {
    const Json& d = record.at("diagnostics");
    r.diagnostics.unknown_term_count = d.value("unknown_term_count", std::size_t{0});
    r.diagnostics.invalid_status_count = d.value("invalid_status_count", std::size_t{0});
    r.diagnostics.dropped_not_mentioned_count = d.value("dropped_not_mentioned_count", std::size_t{0});
    r.diagnostics.malformed_fragment_count = d.value("malformed_fragment_count", std::size_t{0});
  }
  return r;
}

void write_predictions(std::ostream& out, std::span<const ExtractionResult> results) {
  for (const auto& r : results) out << result_to_json(r).dump() << '\n';
}

std::vector<ExtractionResult> read_predictions(std::istream& in) {
  std::vector<ExtractionResult> out;
  for_each_jsonl(in, [&](const Json& record, std::size_t line) {
    try {
      out.push_back(result_from_json(record));
    } catch (const Json::exception& e) {
      throw ParseError(std::string("malformed prediction record: ") + e.what(), line);
    }
  });
  return out;
}

}  // namespace termstat
