#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace termstat {

struct CategoryDef {
  std::string name;
  std::vector<std::string> terms;
  // Order is significant: it is rendered verbatim into status prompts.
  std::vector<std::string> status_candidates;
};

/// Display strings used when rendering prompts. The extraction method is
/// language independent; everything the model reads comes from here.
struct LocaleStrings {
  std::map<std::string, std::string> category_display;
  std::string patient = "Patient";
  std::string doctor = "Doctor";
  std::string term_prompt = "the mentioned medical terms";
  std::string status_template =
      "{category}: {term}'s status. Status candidates: {candidates}";
  std::string not_mentioned = "not mentioned";
};

struct Sentinels {
  std::string begin = "[SOS]";
  std::string end = "[SEP]";
};

/// Immutable, validated extraction schema: categories, their terms and the
/// category-dependent status candidates.
class Schema {
 public:
  /// Validates and indexes. Throws ValidationError naming the offending
  /// category, term or status.
  Schema(std::string version, std::string separator, std::vector<CategoryDef> categories,
         LocaleStrings locale = {}, Sentinels sentinels = {});

  const std::string& version() const noexcept { return version_; }
  const std::string& separator() const noexcept { return separator_; }
  const std::vector<CategoryDef>& categories() const noexcept { return categories_; }
  const LocaleStrings& locale() const noexcept { return locale_; }
  const Sentinels& sentinels() const noexcept { return sentinels_; }
  const std::string& not_mentioned() const noexcept { return locale_.not_mentioned; }

  bool has_term(std::string_view term) const;
  const std::string& category_of(std::string_view term) const;
  const CategoryDef& category(std::string_view name) const;
  std::vector<std::string> status_candidates(std::string_view term,
                                             bool include_not_mentioned) const;

  /// Position of the term in schema order (categories in order, then terms).
  std::size_t term_rank(std::string_view term) const;
  /// All terms in schema order.
  const std::vector<std::string>& terms() const noexcept { return all_terms_; }
  std::size_t term_count() const noexcept { return all_terms_.size(); }
  /// Number of distinct status strings over all categories.
  std::size_t distinct_status_count() const;

 private:
  std::size_t term_index(std::string_view term) const;

  std::string version_;
  std::string separator_;
  std::vector<CategoryDef> categories_;
  LocaleStrings locale_;
  Sentinels sentinels_;
  std::vector<std::string> all_terms_;
  std::vector<std::size_t> term_category_;
  std::unordered_map<std::string, std::size_t> term_lookup_;
};

/// Parses a schema document (YAML). Throws ParseError with a location for
/// malformed documents and ValidationError for invariant violations.
Schema load_schema(std::string_view source);
Schema load_schema_file(const std::filesystem::path& path);

/// Emits a schema document that load_schema reads back to an equal schema.
std::string dump_schema(const Schema& schema);

}  // namespace termstat
