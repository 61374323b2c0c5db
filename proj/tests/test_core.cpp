#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "dime/core.hpp"
#include "dime/io.hpp"

using namespace dime;

namespace {

bool is_permutation_of_k(const Ordering& o, std::size_t k) {
  std::vector<std::size_t> s = o.slots();
  std::sort(s.begin(), s.end());
  for (std::size_t i = 0; i < k; ++i)
    if (s.size() != k || s[i] != i) return false;
  return true;
}

OutcomeSchema mixed_schema() {
  return OutcomeSchema({OutcomeSpec::continuous("y1"), OutcomeSpec::categorical("grade", 3)});
}

}  // namespace

TEST_CASE("build_orderings enumerates every permutation when there are few") {
  const auto all = build_orderings(3, 100, 0);
  CHECK(all.size() == 6);
  std::set<std::vector<std::size_t>> unique;
  for (const auto& o : all) {
    CHECK(is_permutation_of_k(o, 3));
    unique.insert(o.slots());
  }
  CHECK(unique.size() == 6);
  CHECK(all.front() == Ordering::identity(3));

  const auto one = build_orderings(1, 100, 0);
  REQUIRE(one.size() == 1);
  CHECK(one[0].slots() == std::vector<std::size_t>{0});
}

TEST_CASE("build_orderings samples distinct orderings reproducibly") {
  const auto a = build_orderings(5, 10, 7);
  const auto b = build_orderings(5, 10, 7);
  CHECK(a == b);
  REQUIRE(a.size() == 10);
  CHECK(a.front() == Ordering::identity(5));
  std::set<std::vector<std::size_t>> unique;
  for (const auto& o : a) {
    CHECK(is_permutation_of_k(o, 5));
    unique.insert(o.slots());
  }
  CHECK(unique.size() == 10);
  CHECK(build_orderings(5, 10, 8) != a);
}

TEST_CASE("build_orderings property: valid and duplicate free across sizes and caps") {
  for (std::size_t k = 1; k <= 6; ++k) {
    for (std::size_t cap : {1, 2, 5, 8, 24, 1000}) {
      for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto os = build_orderings(k, cap, seed);
        std::size_t fact = 1;
        for (std::size_t i = 2; i <= k; ++i) fact *= i;
        CHECK(os.size() == std::min(fact, cap));
        CHECK(os.front() == Ordering::identity(k));
        std::set<std::vector<std::size_t>> unique;
        for (const auto& o : os) {
          CHECK(is_permutation_of_k(o, k));
          unique.insert(o.slots());
        }
        CHECK(unique.size() == os.size());
      }
    }
  }
  CHECK_THROWS(build_orderings(0, 3, 0));
  CHECK_THROWS(build_orderings(2, 0, 0));
}

TEST_CASE("masks_for_step examples") {
  // sigma = (2,1) in 1-based notation, second position
  auto m = masks_for_step(Ordering({1, 0}), 1, {1, 1});
  CHECK(m.target == Mask{1, 0});
  CHECK(m.conditional == Mask{0, 1});
  CHECK(m.input == Mask{1, 1});

  m = masks_for_step(Ordering::identity(3), 0, {1, 1, 1});
  CHECK(m.target == Mask{1, 0, 0});
  CHECK(m.conditional == Mask{0, 0, 0});

  CHECK_THROWS_AS(masks_for_step(Ordering::identity(2), 1, {1, 0}), std::invalid_argument);
  CHECK_THROWS_AS(masks_for_step(Ordering::identity(2), 2, {1, 1}), std::invalid_argument);
}

TEST_CASE("masks_for_step property: exhaustive over k <= 4") {
  for (std::size_t k = 1; k <= 4; ++k) {
    const auto orderings = build_orderings(k, 1000, 0);
    for (std::uint32_t bits = 0; bits < (1u << k); ++bits) {
      Mask observed(k);
      for (std::size_t i = 0; i < k; ++i) observed[i] = (bits >> i) & 1u;
      for (const auto& o : orderings) {
        for (std::size_t pos = 0; pos < k; ++pos) {
          if (!observed[o[pos]]) {
            CHECK_THROWS(masks_for_step(o, pos, observed));
            continue;
          }
          const auto m = masks_for_step(o, pos, observed);
          int ones = 0;
          for (std::size_t i = 0; i < k; ++i) {
            ones += m.target[i];
            CHECK((m.target[i] & m.conditional[i]) == 0);
            const bool before = o.position_of(i) < pos;
            CHECK(m.conditional[i] == ((before && observed[i]) ? 1 : 0));
          }
          CHECK(ones == 1);
          CHECK(m.target[o[pos]] == 1);
        }
      }
    }
  }
}

TEST_CASE("validate_record examples") {
  const auto schema = mixed_schema();
  ObservationalRecord r{{0.5}, 1, {3.2, 2}};
  CHECK_FALSE(validate_record(r, schema).has_value());

  r.y = {3.2, 0};
  auto v = validate_record(r, schema);
  REQUIRE(v.has_value());
  CHECK(v->field == Violation::Field::kOutcome);
  CHECK(v->slot == 1);

  r.y = {3.2, 2.5};
  CHECK(validate_record(r, schema).has_value());
  r.y = {3.2, 4};
  CHECK(validate_record(r, schema).has_value());

  r.y = {3.2, 2};
  r.a = 2;
  v = validate_record(r, schema);
  REQUIRE(v.has_value());
  CHECK(v->field == Violation::Field::kTreatment);

  r.a = 0;
  r.y = {NAN, 1};  // unobserved outcomes are allowed in records
  CHECK_FALSE(validate_record(r, schema).has_value());
  CHECK(validate_outcomes(r.y, schema).has_value());

  r.y = {INFINITY, 1};
  CHECK(validate_record(r, schema).has_value());
  r.y = {1.0};
  CHECK(validate_record(r, schema).has_value());
  r.y = {1.0, 1};
  r.x = {NAN};
  CHECK(validate_record(r, schema)->field == Violation::Field::kCovariates);
  r.x = {0.0, 1.0};
  CHECK(validate_record(r, schema, 1)->field == Violation::Field::kCovariates);
}

TEST_CASE("schema construction rejects malformed schemas") {
  CHECK_THROWS_AS(OutcomeSchema(std::vector<OutcomeSpec>{}), SchemaError);
  CHECK_THROWS_AS(OutcomeSchema({OutcomeSpec::categorical("c", 1)}), SchemaError);
  CHECK_THROWS_AS(OutcomeSchema({OutcomeSpec::continuous("y"), OutcomeSpec::continuous("y")}), SchemaError);
  CHECK_THROWS_AS(OutcomeSchema({OutcomeSpec::continuous("")}), SchemaError);
  CHECK_THROWS(Ordering({0, 0}));
  CHECK_THROWS(Ordering({1, 2}));
}

TEST_CASE("observed_mask and mix_seed") {
  CHECK(observed_mask({1.0, NAN, 2.0}) == Mask{1, 0, 1});
  CHECK(mix_seed(1, 2) == mix_seed(1, 2));
  CHECK(mix_seed(1, 2) != mix_seed(2, 1));
  CHECK(mix_seed(0, 0) != mix_seed(0, 1));
}

TEST_CASE("schema JSON round trip and hash") {
  const auto schema = mixed_schema();
  const auto j = io::schema_to_json(schema);
  CHECK(j["outcomes"][1]["kind"] == "categorical");
  CHECK(j["outcomes"][1]["num_categories"] == 3);
  CHECK(io::schema_from_json(j) == schema);
  CHECK(io::schema_hash(schema).size() == 16);
  CHECK(io::schema_hash(schema) != io::schema_hash(OutcomeSchema({OutcomeSpec::continuous("y1")})));
  CHECK_THROWS_AS(io::schema_from_json(nlohmann::json::object()), SchemaError);
  CHECK_THROWS_AS(io::schema_from_json(nlohmann::json::parse(R"({"outcomes":[{"name":"q","kind":"ordinal"}]})")),
                  SchemaError);
}

TEST_CASE("dataset CSV round trip is exact") {
  Dataset d;
  d.schema = mixed_schema();
  d.covariate_dim = 2;
  d.records = {{{0.1, -1.0 / 3.0}, 0, {1e-300, 1}}, {{5.0, 2.5}, 1, {NAN, 3}}, {{-0.0, 7.0}, 1, {-2.75, 2}}};
  std::stringstream s;
  io::write_dataset_csv(s, d);
  const std::string text = s.str();
  CHECK(text.rfind(io::dataset_header(2, 2) + "\n", 0) == 0);
  CHECK(io::dataset_header(2, 2) == "x_0,x_1,a,y_1,y_2");

  std::stringstream in(text);
  const Dataset back = io::read_dataset_csv(in, d.schema);
  REQUIRE(back.size() == 3);
  CHECK(back.covariate_dim == 2);
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(back.records[r].x == d.records[r].x);
    CHECK(back.records[r].a == d.records[r].a);
    CHECK(back.records[r].y[1] == d.records[r].y[1]);
  }
  CHECK(back.records[0].y[0] == 1e-300);
  CHECK(std::isnan(back.records[1].y[0]));

  std::stringstream again;
  io::write_dataset_csv(again, back);
  CHECK(again.str() == text);
}

TEST_CASE("dataset CSV rejects malformed input") {
  const auto schema = mixed_schema();
  auto parse = [&](const std::string& text) {
    std::stringstream in(text);
    return io::read_dataset_csv(in, schema);
  };
  CHECK_THROWS_AS(parse(""), DataError);
  CHECK_THROWS_AS(parse("x_0,a,y_9,y_2\n"), DataError);
  CHECK_THROWS_AS(parse("x_0,a,y_1,y_2\n1,0,2\n"), DataError);
  CHECK_THROWS_AS(parse("x_0,a,y_1,y_2\n1,2,2,1\n"), DataError);
  CHECK_THROWS_AS(parse("x_0,a,y_1,y_2\n1,0,2,7\n"), DataError);
  CHECK_THROWS_AS(parse("x_0,a,y_1,y_2\n1,0,abc,1\n"), DataError);
  CHECK(parse("x_0,a,y_1,y_2\n1,0,2,1\n").size() == 1);
}

TEST_CASE("format_double round trips") {
  for (double v : {0.1, 1.0 / 3.0, -1e-17, 12345.678, 5e-324, 1.7976931348623157e308}) {
    CHECK(io::parse_double(io::format_double(v), "t") == v);
  }
  CHECK(io::split_csv_line("a,,b") == std::vector<std::string>{"a", "", "b"});
}
