#include "termstat/prompting.hpp"

#include <algorithm>
#include <set>

#include "termstat/error.hpp"

namespace termstat {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

// Removes a leading begin sentinel and everything from the first end sentinel.
std::string_view strip_sentinels(std::string_view text, const PromptConfig& config) {
  text = trim(text);
  if (text.substr(0, config.sos.size()) == config.sos) text.remove_prefix(config.sos.size());
  if (const auto end = text.find(config.sep); end != std::string_view::npos)
    text = text.substr(0, end);
  return trim(text);
}

std::vector<std::string_view> split(std::string_view text, std::string_view delimiter) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = text.find(delimiter, pos);
    if (next == std::string_view::npos) {
      out.push_back(text.substr(pos));
      return out;
    }
    out.push_back(text.substr(pos, next - pos));
    pos = next + delimiter.size();
  }
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos;
       pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}

template <typename Range>
std::string join(const Range& items, std::string_view delimiter) {
  std::string out;
  bool first = true;
  for (const auto& item : items) {
    if (!first) out += delimiter;
    out += item;
    first = false;
  }
  return out;
}

}  // namespace

PromptConfig PromptConfig::from_schema(const Schema& schema) {
  PromptConfig c;
  const LocaleStrings& loc = schema.locale();
  c.term_prompt = loc.term_prompt;
  c.status_template = loc.status_template;
  c.patient_tag = loc.patient;
  c.doctor_tag = loc.doctor;
  c.category_display = loc.category_display;
  c.not_mentioned = loc.not_mentioned;
  c.sos = schema.sentinels().begin;
  c.sep = schema.sentinels().end;
  c.separator = schema.separator();
  c.candidate_joiner = schema.separator() + " ";
  return c;
}

void PromptConfig::validate(const Schema& schema) const {
  if (separator != schema.separator())
    throw ConfigError("prompt separator \"" + separator + "\" differs from schema separator \"" +
                      schema.separator() + "\"");
  if (sos != schema.sentinels().begin || sep != schema.sentinels().end)
    throw ConfigError("prompt sentinels differ from the schema's sentinels");
  for (const char* slot : {"{category}", "{term}", "{candidates}"})
    if (status_template.find(slot) == std::string::npos)
      throw ConfigError(std::string("status template lacks the ") + slot + " slot");
  const std::string_view tail = "{candidates}";
  if (status_template.size() < tail.size() ||
      status_template.compare(status_template.size() - tail.size(), tail.size(), tail) != 0)
    throw ConfigError("status template must end with {candidates}");
  if (pair_delimiter.empty()) throw ConfigError("pair delimiter must not be empty");
}

const std::string& PromptConfig::display_category(const std::string& category) const {
  auto it = category_display.find(category);
  return it == category_display.end() ? category : it->second;
}

Json to_json(const PromptConfig& c) {
  return {{"term_prompt", c.term_prompt},
          {"status_template", c.status_template},
          {"patient_tag", c.patient_tag},
          {"doctor_tag", c.doctor_tag},
          {"category_display", c.category_display},
          {"not_mentioned", c.not_mentioned},
          {"include_not_mentioned", c.include_not_mentioned},
          {"sos", c.sos},
          {"sep", c.sep},
          {"separator", c.separator},
          {"candidate_joiner", c.candidate_joiner},
          {"pair_delimiter", c.pair_delimiter},
          {"status_target_sentinels", c.status_target_sentinels}};
}

PromptConfig prompt_config_from_json(const Json& j, PromptConfig c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("term_prompt", c.term_prompt);
  get("status_template", c.status_template);
  get("patient_tag", c.patient_tag);
  get("doctor_tag", c.doctor_tag);
  get("category_display", c.category_display);
  get("not_mentioned", c.not_mentioned);
  get("include_not_mentioned", c.include_not_mentioned);
  get("sos", c.sos);
  get("sep", c.sep);
  get("separator", c.separator);
  get("candidate_joiner", c.candidate_joiner);
  get("pair_delimiter", c.pair_delimiter);
  get("status_target_sentinels", c.status_target_sentinels);
  return c;
}

std::string render_dialogue(std::span<const Turn> turns, const PromptConfig& config) {
  std::string out;
  for (const Turn& t : turns) {
    if (!out.empty()) out += ' ';
    out += t.speaker == Speaker::patient ? config.patient_tag : config.doctor_tag;
    out += ": ";
    out += normalize_whitespace(t.text);
  }
  return out;
}

std::string build_term_input(std::span<const Turn> turns, const PromptConfig& config) {
  return render_dialogue(turns, config) + " " + config.term_prompt;
}

std::string build_term_input(const Window& window, const PromptConfig& config) {
  return build_term_input(std::span<const Turn>(window.turns), config);
}

std::string render_status_prompt(std::string_view term, const Schema& schema,
                                 const PromptConfig& config) {
  const std::string& category = schema.category_of(term);
  std::vector<std::string> candidates = schema.status_candidates(term, false);
  if (config.include_not_mentioned) candidates.push_back(config.not_mentioned);
  std::string prompt = config.status_template;
  replace_all(prompt, "{category}", config.display_category(category));
  replace_all(prompt, "{term}", term);
  replace_all(prompt, "{candidates}", join(candidates, config.candidate_joiner));
  return prompt;
}

std::string build_status_input(std::span<const Turn> turns, std::string_view term,
                               const Schema& schema, const PromptConfig& config) {
  return render_dialogue(turns, config) + " " + render_status_prompt(term, schema, config);
}

std::string build_status_input(const Window& window, std::string_view term, const Schema& schema,
                               const PromptConfig& config) {
  return build_status_input(std::span<const Turn>(window.turns), term, schema, config);
}

std::string serialize_terms(std::span<const std::string> terms, const PromptConfig& config) {
  return config.sos + join(terms, config.separator) + config.sep;
}

std::string_view to_string(TermParsePolicy policy) {
  return policy == TermParsePolicy::strict ? "strict" : "keep_unknown";
}

TermParsePolicy parse_term_policy(std::string_view text) {
  if (text == "strict") return TermParsePolicy::strict;
  if (text == "keep_unknown") return TermParsePolicy::keep_unknown;
  throw ConfigError("unknown term parse policy \"" + std::string(text) + "\"");
}

TermParse parse_terms(std::string_view text, const Schema& schema, TermParsePolicy policy,
                      const PromptConfig& config) {
  TermParse out;
  const std::string_view body = strip_sentinels(text, config);
  if (body.empty()) return out;
  std::set<std::string_view> seen;
  for (std::string_view fragment : split(body, config.separator)) {
    fragment = trim(fragment);
    if (fragment.empty() || !seen.insert(fragment).second) continue;
    if (!schema.has_term(fragment)) {
      ++out.unknown_count;
      if (policy == TermParsePolicy::strict) continue;
    }
    out.terms.emplace_back(fragment);
  }
  return out;
}

std::string serialize_status(std::string_view status, const PromptConfig& config) {
  if (!config.status_target_sentinels) return std::string(status);
  return config.sos + std::string(status) + config.sep;
}

std::optional<std::string> parse_status(std::string_view text,
                                        std::span<const std::string> candidates,
                                        const PromptConfig& config) {
  const std::string_view cleaned = strip_sentinels(text, config);
  for (const auto& c : candidates)
    if (c == cleaned) return c;
  return std::nullopt;
}

std::string serialize_pairs_one_stage(std::span<const TermStatusPair> pairs,
                                      const PromptConfig& config) {
  std::vector<std::string> items;
  items.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.term.find(config.pair_delimiter) != std::string::npos ||
        p.status.find(config.pair_delimiter) != std::string::npos)
      throw std::invalid_argument("pair (" + p.term + ", " + p.status +
                                  ") contains the pair delimiter");
    items.push_back(p.term + config.pair_delimiter + p.status);
  }
  return config.sos + join(items, config.separator) + config.sep;
}

PairParse parse_pairs_one_stage(std::string_view text, const Schema& schema,
                                TermParsePolicy policy, const PromptConfig& config) {
  PairParse out;
  const std::string_view body = strip_sentinels(text, config);
  if (body.empty()) return out;
  std::set<std::string_view> seen;
  for (std::string_view fragment : split(body, config.separator)) {
    fragment = trim(fragment);
    if (fragment.empty()) continue;
    const auto delim = fragment.find(config.pair_delimiter);
    if (delim == std::string_view::npos) {
      ++out.malformed_fragment_count;
      continue;
    }
    const std::string_view term = trim(fragment.substr(0, delim));
    const std::string_view status = trim(fragment.substr(delim + config.pair_delimiter.size()));
    if (term.empty()) {
      ++out.malformed_fragment_count;
      continue;
    }
    if (!seen.insert(term).second) continue;
    if (!schema.has_term(term)) {
      ++out.unknown_term_count;
      if (policy == TermParsePolicy::strict) continue;
      out.pairs.push_back({std::string(term), kInvalidStatus});
      continue;
    }
    const auto candidates = schema.status_candidates(term, false);
    const auto match = std::find(candidates.begin(), candidates.end(), status);
    if (match == candidates.end()) {
      ++out.invalid_status_count;
      out.pairs.push_back({std::string(term), kInvalidStatus});
    } else {
      out.pairs.push_back({std::string(term), *match});
    }
  }
  return out;
}

}  // namespace termstat
