#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "support.hpp"
#include "termstat/error.hpp"
#include "termstat/schema.hpp"

using namespace termstat;

TEST_CASE("chunyu-shaped schema loads with 71 terms and 18 statuses") {
  const Schema& s = fixtures::chunyu();
  CHECK(s.categories().size() == 4);
  CHECK(s.term_count() == 71);

  std::set<std::string> statuses;
  for (const auto& c : s.categories()) statuses.insert(c.status_candidates.begin(), c.status_candidates.end());
  CHECK(statuses.size() == 18);
  CHECK(s.distinct_status_count() == 18);
}

TEST_CASE("cmdd-shaped schema") {
  const Schema s = load_schema_file(fixtures::path("cmdd_like_schema.yaml"));
  CHECK(s.term_count() == 149);
  CHECK(s.distinct_status_count() == 3);
  CHECK(s.status_candidates("symptom 0", false) == std::vector<std::string>{"True", "False", "Uncertain"});
}

TEST_CASE("empty document is a validation error") {
  CHECK_THROWS_AS(load_schema(""), ValidationError);
  CHECK_THROWS_AS(load_schema("categories: []\n"), ValidationError);
}

TEST_CASE("term listed under two categories") {
  const char* doc = R"(categories:
  - name: symptom
    status_candidates: [appear, absent]
    terms: [chest pain]
  - name: test
    status_candidates: [done]
    terms: [chest pain]
)";
  CHECK_THROWS_WITH_AS(load_schema(doc), doctest::Contains("duplicate term"), ValidationError);
}

TEST_CASE("malformed documents report a location") {
  try {
    load_schema("categories:\n  - name: [unclosed\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line") != std::string::npos);
  }
  CHECK_THROWS_AS(load_schema("categories:\n  - name: a\n    status_candidates: [x]\n    bogus: 1\n"),
                  ParseError);
}

TEST_CASE("separator and sentinels are rejected inside tokens") {
  auto make = [](std::vector<std::string> terms, std::vector<std::string> statuses) {
    return Schema("v", ",", {{"symptom", std::move(terms), std::move(statuses)}});
  };
  CHECK_THROWS_AS(make({"a,b"}, {"x"}), ValidationError);
  CHECK_THROWS_AS(make({"a"}, {"x,y"}), ValidationError);
  CHECK_THROWS_AS(make({"[SOS]a"}, {"x"}), ValidationError);
  CHECK_THROWS_AS(make({"a"}, {"y[SEP]"}), ValidationError);
  CHECK_THROWS_AS(make({"a"}, {}), ValidationError);
  CHECK_THROWS_AS(make({"a"}, {"x", "x"}), ValidationError);
  CHECK_THROWS_AS(make({"a"}, {"not mentioned"}), ValidationError);
  CHECK_THROWS_AS(make({" a"}, {"x"}), ValidationError);
  CHECK_NOTHROW(make({"a"}, {"x"}));
}

TEST_CASE("category_of") {
  const Schema& s = fixtures::chunyu();
  CHECK(s.category_of("radiofrequency ablation") == "surgery");
  CHECK(s.category_of("thyroid function test") == "test");
  CHECK_THROWS_AS(s.category_of("nonexistent term"), LookupError);
}

TEST_CASE("status_candidates") {
  const Schema& s = fixtures::chunyu();
  const std::vector<std::string> surgery{"done", "not done", "suggest", "deprecated", "unknown"};
  CHECK(s.status_candidates("radiofrequency ablation", false) == surgery);
  auto with = surgery;
  with.push_back("not mentioned");
  CHECK(s.status_candidates("radiofrequency ablation", true) == with);
  CHECK_THROWS_AS(s.status_candidates("nonexistent term", false), LookupError);
}

TEST_CASE("every term belongs to the category that owns it") {
  const Schema& s = fixtures::chunyu();
  for (const auto& t : s.terms()) {
    const auto& terms = s.category(s.category_of(t)).terms;
    CHECK(std::find(terms.begin(), terms.end(), t) != terms.end());
    auto with = s.status_candidates(t, false);
    with.push_back(s.not_mentioned());
    CHECK(s.status_candidates(t, true) == with);
  }
}

TEST_CASE("loading is deterministic and dump round-trips") {
  const std::string source = fixtures::read("chunyu_like_schema.yaml");
  const Schema a = load_schema(source);
  const Schema b = load_schema(source);
  CHECK(dump_schema(a) == dump_schema(b));

  const Schema c = load_schema(dump_schema(a));
  CHECK(c.version() == a.version());
  CHECK(c.terms() == a.terms());
  REQUIRE(c.categories().size() == a.categories().size());
  for (std::size_t i = 0; i < a.categories().size(); ++i) {
    CHECK(c.categories()[i].name == a.categories()[i].name);
    CHECK(c.categories()[i].status_candidates == a.categories()[i].status_candidates);
  }
  CHECK(c.locale().category_display == a.locale().category_display);
  CHECK(dump_schema(c) == dump_schema(a));
}

TEST_CASE("term rank follows categories then terms") {
  const Schema& s = fixtures::chunyu();
  for (std::size_t i = 0; i < s.terms().size(); ++i) CHECK(s.term_rank(s.terms()[i]) == i);
  CHECK(s.term_rank("radiofrequency ablation") < s.term_rank("thyroid function test"));
}
