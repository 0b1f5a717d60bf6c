#include "termstat/schema.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "termstat/error.hpp"

namespace termstat {

namespace {

bool has_edge_whitespace(std::string_view s) {
  auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  return !s.empty() && (ws(s.front()) || ws(s.back()));
}

bool has_control_char(std::string_view s) {
  return std::any_of(s.begin(), s.end(),
                     [](char c) { return static_cast<unsigned char>(c) < 0x20; });
}

void check_token(std::string_view kind, std::string_view value, const std::string& separator,
                 const Sentinels& sentinels) {
  const std::string name = std::string(kind) + " \"" + std::string(value) + "\"";
  if (value.empty()) throw ValidationError("empty " + std::string(kind));
  if (has_edge_whitespace(value))
    throw ValidationError(name + " has leading or trailing whitespace");
  if (has_control_char(value)) throw ValidationError(name + " contains a control character");
  if (value.find(separator) != std::string_view::npos)
    throw ValidationError(name + " contains the separator \"" + separator + "\"");
  if (value.find(sentinels.begin) != std::string_view::npos ||
      value.find(sentinels.end) != std::string_view::npos)
    throw ValidationError(name + " contains a sentinel string");
}

}  // namespace

Schema::Schema(std::string version, std::string separator, std::vector<CategoryDef> categories,
               LocaleStrings locale, Sentinels sentinels)
    : version_(std::move(version)),
      separator_(std::move(separator)),
      categories_(std::move(categories)),
      locale_(std::move(locale)),
      sentinels_(std::move(sentinels)) {
  if (separator_.empty()) throw ValidationError("separator must not be empty");
  if (sentinels_.begin.empty() || sentinels_.end.empty())
    throw ValidationError("sentinel strings must not be empty");
  if (categories_.empty()) throw ValidationError("schema defines no categories");

  std::set<std::string> category_names;
  for (std::size_t c = 0; c < categories_.size(); ++c) {
    const CategoryDef& cat = categories_[c];
    if (cat.name.empty()) throw ValidationError("category with empty name");
    if (!category_names.insert(cat.name).second)
      throw ValidationError("duplicate category \"" + cat.name + "\"");
    if (cat.status_candidates.empty())
      throw ValidationError("category \"" + cat.name + "\" has no status candidates");

    std::set<std::string_view> seen_status;
    for (const auto& status : cat.status_candidates) {
      check_token("status", status, separator_, sentinels_);
      if (status == locale_.not_mentioned)
        throw ValidationError("status \"" + status + "\" in category \"" + cat.name +
                              "\" collides with the special not-mentioned status");
      if (!seen_status.insert(status).second)
        throw ValidationError("duplicate status \"" + status + "\" in category \"" + cat.name +
                              "\"");
    }
    for (const auto& term : cat.terms) {
      check_token("term", term, separator_, sentinels_);
      if (!term_lookup_.emplace(term, all_terms_.size()).second)
        throw ValidationError("duplicate term \"" + term + "\" (category \"" + cat.name + "\")");
      all_terms_.push_back(term);
      term_category_.push_back(c);
    }
  }
  for (const auto& [key, _] : locale_.category_display)
    if (!category_names.count(key))
      throw ValidationError("locale string for unknown category \"" + key + "\"");
}

std::size_t Schema::term_index(std::string_view term) const {
  auto it = term_lookup_.find(std::string(term));
  if (it == term_lookup_.end()) throw LookupError("unknown term \"" + std::string(term) + "\"");
  return it->second;
}

bool Schema::has_term(std::string_view term) const {
  return term_lookup_.count(std::string(term)) != 0;
}

const std::string& Schema::category_of(std::string_view term) const {
  return categories_[term_category_[term_index(term)]].name;
}

const CategoryDef& Schema::category(std::string_view name) const {
  for (const auto& cat : categories_)
    if (cat.name == name) return cat;
  throw LookupError("unknown category \"" + std::string(name) + "\"");
}

std::vector<std::string> Schema::status_candidates(std::string_view term,
                                                   bool include_not_mentioned) const {
  std::vector<std::string> out = categories_[term_category_[term_index(term)]].status_candidates;
  if (include_not_mentioned) out.push_back(locale_.not_mentioned);
  return out;
}

std::size_t Schema::term_rank(std::string_view term) const { return term_index(term); }

std::size_t Schema::distinct_status_count() const {
  std::set<std::string_view> all;
  for (const auto& cat : categories_)
    for (const auto& s : cat.status_candidates) all.insert(s);
  return all.size();
}

// ---------------------------------------------------------------------------
// Document format

namespace {

ParseError at(const YAML::Node& node, const std::string& what) {
  const YAML::Mark mark = node.Mark();
  if (mark.is_null()) return ParseError(what);
  return ParseError(what, static_cast<std::size_t>(mark.line) + 1,
                    static_cast<std::size_t>(mark.column) + 1);
}

std::string scalar(const YAML::Node& node, const std::string& field) {
  if (!node || !node.IsScalar()) throw at(node, "field \"" + field + "\" must be a string");
  return node.as<std::string>();
}

std::vector<std::string> string_list(const YAML::Node& node, const std::string& field) {
  if (!node || !node.IsSequence()) throw at(node, "field \"" + field + "\" must be a list");
  std::vector<std::string> out;
  out.reserve(node.size());
  for (const auto& item : node) out.push_back(scalar(item, field));
  return out;
}

void reject_unknown_keys(const YAML::Node& map, std::initializer_list<std::string_view> allowed,
                         const std::string& where) {
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw at(kv.first, "unknown key \"" + key + "\" in " + where);
  }
}

}  // namespace

Schema load_schema(std::string_view source) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(source));
  } catch (const YAML::ParserException& e) {
    throw ParseError(e.msg, static_cast<std::size_t>(e.mark.line) + 1,
                     static_cast<std::size_t>(e.mark.column) + 1);
  }
  if (!root || root.IsNull()) throw ValidationError("schema defines no categories");
  if (!root.IsMap()) throw at(root, "schema document must be a mapping");
  reject_unknown_keys(root, {"version", "separator", "sentinels", "categories", "locale_strings"},
                      "schema");

  std::string version = root["version"] ? scalar(root["version"], "version") : "";
  std::string separator = root["separator"] ? scalar(root["separator"], "separator") : ",";

  Sentinels sentinels;
  if (const auto s = root["sentinels"]) {
    if (!s.IsMap()) throw at(s, "\"sentinels\" must be a mapping");
    reject_unknown_keys(s, {"begin", "end"}, "sentinels");
    if (s["begin"]) sentinels.begin = scalar(s["begin"], "sentinels.begin");
    if (s["end"]) sentinels.end = scalar(s["end"], "sentinels.end");
  }

  std::vector<CategoryDef> categories;
  if (const auto cats = root["categories"]; cats && !cats.IsNull()) {
    if (!cats.IsSequence()) throw at(cats, "\"categories\" must be a list");
    for (const auto& node : cats) {
      if (!node.IsMap()) throw at(node, "category entry must be a mapping");
      reject_unknown_keys(node, {"name", "status_candidates", "terms"}, "category");
      CategoryDef def;
      def.name = scalar(node["name"], "name");
      def.status_candidates = string_list(node["status_candidates"], "status_candidates");
      def.terms = node["terms"] ? string_list(node["terms"], "terms") : std::vector<std::string>{};
      categories.push_back(std::move(def));
    }
  }

  LocaleStrings locale;
  if (const auto loc = root["locale_strings"]) {
    if (!loc.IsMap()) throw at(loc, "\"locale_strings\" must be a mapping");
    reject_unknown_keys(loc,
                        {"categories", "patient", "doctor", "term_prompt", "status_template",
                         "not_mentioned"},
                        "locale_strings");
    if (const auto c = loc["categories"]) {
      if (!c.IsMap()) throw at(c, "\"locale_strings.categories\" must be a mapping");
      for (const auto& kv : c)
        locale.category_display[kv.first.as<std::string>()] =
            scalar(kv.second, "locale_strings.categories");
    }
    if (loc["patient"]) locale.patient = scalar(loc["patient"], "patient");
    if (loc["doctor"]) locale.doctor = scalar(loc["doctor"], "doctor");
    if (loc["term_prompt"]) locale.term_prompt = scalar(loc["term_prompt"], "term_prompt");
    if (loc["status_template"])
      locale.status_template = scalar(loc["status_template"], "status_template");
    if (loc["not_mentioned"]) locale.not_mentioned = scalar(loc["not_mentioned"], "not_mentioned");
  }

  return Schema(std::move(version), std::move(separator), std::move(categories),
                std::move(locale), std::move(sentinels));
}

Schema load_schema_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return load_schema(buf.str());
}

std::string dump_schema(const Schema& schema) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "version" << YAML::Value << YAML::DoubleQuoted << schema.version();
  out << YAML::Key << "separator" << YAML::Value << YAML::DoubleQuoted << schema.separator();
  out << YAML::Key << "sentinels" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "begin" << YAML::Value << YAML::DoubleQuoted << schema.sentinels().begin;
  out << YAML::Key << "end" << YAML::Value << YAML::DoubleQuoted << schema.sentinels().end;
  out << YAML::EndMap;
  out << YAML::Key << "categories" << YAML::Value << YAML::BeginSeq;
  for (const auto& cat : schema.categories()) {
    out << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << cat.name;
    out << YAML::Key << "status_candidates" << YAML::Value << YAML::Flow << cat.status_candidates;
    out << YAML::Key << "terms" << YAML::Value << YAML::Flow << cat.terms;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  const LocaleStrings& loc = schema.locale();
  out << YAML::Key << "locale_strings" << YAML::Value << YAML::BeginMap;
  if (!loc.category_display.empty()) {
    out << YAML::Key << "categories" << YAML::Value << YAML::BeginMap;
    for (const auto& [k, v] : loc.category_display) out << YAML::Key << k << YAML::Value << v;
    out << YAML::EndMap;
  }
  out << YAML::Key << "patient" << YAML::Value << loc.patient;
  out << YAML::Key << "doctor" << YAML::Value << loc.doctor;
  out << YAML::Key << "term_prompt" << YAML::Value << loc.term_prompt;
  out << YAML::Key << "status_template" << YAML::Value << YAML::DoubleQuoted
      << loc.status_template;
  out << YAML::Key << "not_mentioned" << YAML::Value << loc.not_mentioned;
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace termstat
