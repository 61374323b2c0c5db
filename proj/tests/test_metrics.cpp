#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "dime/metrics.hpp"
#include "support.hpp"

using namespace dime;
using namespace dime::metrics;

namespace {

const OutcomeSchema kOne({OutcomeSpec::continuous("y")});
const OutcomeSchema kTwo({OutcomeSpec::continuous("y1"), OutcomeSpec::continuous("y2")});
const OutcomeSchema kMixed({OutcomeSpec::continuous("y1"), OutcomeSpec::categorical("c", 3)});

Samples scalar(const std::vector<double>& v) {
  Samples s;
  for (double e : v) s.push_back({e});
  return s;
}

Eigen::MatrixXd random_matrix(int n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 10.0);
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = u(rng);
  return m;
}

Samples random_pairs(std::size_t n, Rng& rng) {
  std::normal_distribution<double> g;
  Samples s(n, OutcomeVector(2));
  for (auto& y : s) y = {g(rng), g(rng)};
  return s;
}

double brute_w1(const Samples& p, const Samples& q, const OutcomeSchema& schema) {
  return testing::brute_force_assignment(cost_matrix(p, q, schema)) / static_cast<double>(p.size());
}

}  // namespace

TEST_CASE("ground_cost examples") {
  CHECK(ground_cost({1.5, 2.0}, {1.5, 2.0}, kTwo) == 0.0);
  CHECK(ground_cost({0.0, 0.0}, {3.0, 4.0}, kTwo) == 5.0);
  CHECK(ground_cost({0.5, 1}, {0.5, 3}, kMixed) == 1.0);
  CHECK(ground_cost({0.0, 1}, {1.0, 2}, kMixed) == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS(ground_cost({0.0}, {1.0, 2.0}, kTwo));
  CHECK_THROWS(ground_cost({0.0, 4}, {1.0, 2}, kMixed));
}

TEST_CASE("solve_assignment examples") {
  Eigen::MatrixXd a(2, 2);
  a << 0, 9, 9, 0;
  auto r = solve_assignment(a);
  CHECK(r.column_of_row == std::vector<std::size_t>{0, 1});
  CHECK(r.total_cost == 0.0);
  a << 1, 2, 2, 1;
  CHECK(solve_assignment(a).total_cost == 2.0);
  a << 5, 1, 1, 5;
  r = solve_assignment(a);
  CHECK(r.column_of_row == std::vector<std::size_t>{1, 0});
  CHECK(r.total_cost == 2.0);

  CHECK_THROWS(solve_assignment(Eigen::MatrixXd::Zero(2, 3)));
  a(0, 1) = NAN;
  CHECK_THROWS(solve_assignment(a));
  Eigen::MatrixXd one(1, 1);
  one << 3.5;
  CHECK(solve_assignment(one).total_cost == 3.5);
}

TEST_CASE("solve_assignment equals brute force for n <= 8") {
  Rng rng(2024);
  for (int n = 1; n <= 8; ++n) {
    for (int trial = 0; trial < 100; ++trial) {
      const auto m = random_matrix(n, rng);
      const auto r = solve_assignment(m);
      std::vector<std::uint8_t> used(static_cast<std::size_t>(n), 0);
      double sum = 0.0;
      for (int i = 0; i < n; ++i) {
        const auto c = r.column_of_row[static_cast<std::size_t>(i)];
        REQUIRE(c < static_cast<std::size_t>(n));
        CHECK(used[c] == 0);
        used[c] = 1;
        sum += m(i, static_cast<Eigen::Index>(c));
      }
      CHECK(sum == r.total_cost);
      CHECK(r.total_cost == testing::brute_force_assignment(m));
    }
  }
}

TEST_CASE("solve_assignment handles ties and negative costs") {
  Rng rng(5);
  std::uniform_int_distribution<int> u(-3, 3);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd m(6, 6);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) m(i, j) = u(rng);
    CHECK(solve_assignment(m).total_cost == testing::brute_force_assignment(m));
  }
}

TEST_CASE("empirical_w1 examples") {
  CHECK(empirical_w1(scalar({0, 2}), scalar({1, 3}), kOne).value == 1.0);
  Rng rng(1);
  const auto p = random_pairs(50, rng);
  const auto w = empirical_w1(p, p, kTwo);
  CHECK(w.value == 0.0);
  CHECK(w.n == 50);
  CHECK_FALSE(w.subsampled);

  const auto a = scalar(testing::normal_draws(2000, 0, 1, 11));
  const auto b = scalar(testing::normal_draws(2000, 0, 1, 12));
  CHECK(empirical_w1(a, b, kOne).value < 0.08);

  CHECK_THROWS(empirical_w1(Samples{}, p, kTwo));
  CHECK_THROWS(empirical_w1(scalar({1.0}), p, kTwo));
}

TEST_CASE("empirical_w1 matches the sorted 1-D solution") {
  const auto a = testing::normal_draws(400, 0, 1, 3);
  const auto b = testing::normal_draws(400, 0.5, 2, 4);
  CHECK(empirical_w1(scalar(a), scalar(b), kOne).value == doctest::Approx(testing::sorted_w1(a, b)).epsilon(1e-12));
}

TEST_CASE("empirical_w1 subsamples unequal or oversized sets reproducibly") {
  Rng rng(2);
  const auto p = random_pairs(80, rng);
  const auto q = random_pairs(50, rng);
  const auto w = empirical_w1(p, q, kTwo, 9);
  CHECK(w.subsampled);
  CHECK(w.n == 50);
  CHECK(empirical_w1(p, q, kTwo, 9).value == w.value);

  const auto c = empirical_w1(p, p, kTwo, 4, 30);
  CHECK(c.subsampled);
  CHECK(c.n == 30);
}

TEST_CASE("empirical_w1 behaves as a metric on small multisets") {
  Rng rng(77);
  std::uniform_int_distribution<int> cat(1, 3);
  std::normal_distribution<double> g;
  auto draw_mixed = [&](std::size_t n) {
    Samples s(n, OutcomeVector(2));
    for (auto& y : s) y = {g(rng), static_cast<double>(cat(rng))};
    return s;
  };
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_pairs(6, rng), q = random_pairs(6, rng), r = random_pairs(6, rng);
    const double pq = empirical_w1(p, q, kTwo).value;
    CHECK(pq == empirical_w1(q, p, kTwo).value);
    CHECK(pq == doctest::Approx(brute_w1(p, q, kTwo)).epsilon(1e-12));
    const double qr = empirical_w1(q, r, kTwo).value, pr = empirical_w1(p, r, kTwo).value;
    CHECK(pr <= pq + qr + 1e-12);
    CHECK(pq > 0.0);

    auto shuffled = p;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(empirical_w1(p, shuffled, kTwo).value == 0.0);

    const auto m1 = draw_mixed(5), m2 = draw_mixed(5);
    CHECK(empirical_w1(m1, m2, kMixed).value == doctest::Approx(brute_w1(m1, m2, kMixed)).epsilon(1e-12));
  }
}

TEST_CASE("kde_fit examples") {
  const auto s = scalar(testing::normal_draws(5000, 0, 1, 21));
  const auto kde = kde_fit(s, kOne);
  REQUIRE(kde.bandwidths().size() == 1);
  CHECK(kde.bandwidths()[0] > 0.0);
  CHECK(kde.density(s[17]) > 0.0);
  const double truth = 1.0 / std::sqrt(2 * std::numbers::pi);
  CHECK(std::abs(kde.density({0.0}) - truth) < 0.15 * truth);

  double integral = 0.0;
  const int grid = 4000;
  const double h = 12.0 / grid;
  for (int i = 0; i < grid; ++i) integral += kde.density({-6.0 + (i + 0.5) * h}) * h;
  CHECK(std::abs(integral - 1.0) < 1e-2);

  CHECK(kde.density({40.0}) >= 0.0);
  CHECK(std::isfinite(kde.log_density({40.0})));

  Samples constant(40, OutcomeVector{2.0});
  const auto flat = kde_fit(constant, kOne);
  CHECK(flat.bandwidths()[0] == kBandwidthFloor);
  CHECK(flat.density({2.0}) > 0.0);

  CHECK_THROWS(kde_fit(scalar({1, 2, 3}), kOne));
}

TEST_CASE("kde tables over categorical configurations normalize") {
  Rng rng(8);
  std::normal_distribution<double> g;
  Samples s;
  for (int i = 0; i < 600; ++i) {
    const double c = i % 10 < 6 ? 1 : 2;  // category 3 never appears
    s.push_back({g(rng) + 3 * c, c});
  }
  const auto kde = kde_fit(s, kMixed);
  double total = 0.0;
  for (double c : {1.0, 2.0, 3.0}) total += kde.configuration_probability({0.0, c});
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(kde.configuration_probability({0.0, 1.0}) == doctest::Approx(0.6).epsilon(1e-4));
  CHECK(kde.configuration_probability({0.0, 3.0}) > 0.0);
  CHECK(kde.density({3.0, 1.0}) > kde.density({3.0, 2.0}));
  CHECK(kde.density({3.0, 3.0}) > 0.0);
}

TEST_CASE("empirical_kl oracles") {
  const auto p = scalar(testing::normal_draws(5000, 0, 1, 31));
  const auto q1 = scalar(testing::normal_draws(5000, 1, 1, 32));
  const auto q4 = scalar(testing::normal_draws(5000, 0, 2, 33));
  const auto p_hat = kde_fit(p, kOne);
  CHECK(empirical_kl(p, p_hat, p_hat) == 0.0);
  CHECK(std::abs(empirical_kl(p, p_hat, kde_fit(q1, kOne)) - 0.5) < 0.1);
  const double closed = 0.5 * (0.25 - 1 + std::log(4.0));
  CHECK(closed == doctest::Approx(0.318).epsilon(1e-3));
  CHECK(std::abs(empirical_kl(p, p_hat, kde_fit(q4, kOne)) - closed) < 0.12);
  CHECK_THROWS(empirical_kl(Samples{}, p_hat, p_hat));
}

TEST_CASE("empirical_kl over categorical slots uses smoothed pmfs") {
  const OutcomeSchema cat({OutcomeSpec::categorical("c", 2)});
  Samples p, q;
  for (int i = 0; i < 100; ++i) {
    p.push_back({i < 50 ? 1.0 : 2.0});
    q.push_back({i < 90 ? 1.0 : 2.0});
  }
  const double closed = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
  CHECK(empirical_kl(p, kde_fit(p, cat), kde_fit(q, cat)) == doctest::Approx(closed).epsilon(1e-4));

  Samples only_one(100, OutcomeVector{1.0});
  const double v = empirical_kl(p, kde_fit(p, cat), kde_fit(only_one, cat));
  CHECK(std::isfinite(v));
  CHECK(v > 1.0);
}

TEST_CASE("pehe examples and properties") {
  const std::vector<double> t{0.5, -1.0, 2.0, 3.5};
  CHECK(pehe(t, t) == 0.0);
  std::vector<double> shifted = t;
  for (auto& v : shifted) v += 1.0;
  CHECK(pehe(shifted, t) == doctest::Approx(1.0).epsilon(1e-14));

  const auto truth = testing::normal_draws(10000, 0, 1, 41);
  const auto noise = testing::normal_draws(10000, 0, 0.5, 42);
  std::vector<double> noisy(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) noisy[i] = truth[i] + noise[i];
  const double e = pehe(noisy, truth);
  CHECK(std::abs(e - 0.5) < 0.02);

  Rng rng(3);
  std::vector<std::size_t> perm(truth.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> pn, pt;
  for (auto i : perm) {
    pn.push_back(noisy[i]);
    pt.push_back(truth[i]);
  }
  CHECK(pehe(pn, pt) == doctest::Approx(e).epsilon(1e-12));
  CHECK(pehe(pn, pt) >= 0.0);

  CHECK(pehe_mean({shifted, t}, {t, t}) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK_THROWS(pehe({}, {}));
  CHECK_THROWS(pehe({1.0}, {1.0, 2.0}));
}

TEST_CASE("correlation_probe examples") {
  const auto a = testing::normal_draws(10000, 0, 1, 51);
  const auto b = testing::normal_draws(10000, 0, 1, 52);
  Samples same, indep, corr;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same.push_back({a[i], a[i]});
    indep.push_back({a[i], b[i]});
    if (i < 1000) corr.push_back({a[i], 0.8 * a[i] + 0.6 * b[i]});
  }
  CHECK(correlation_probe(same, 0, 1, kTwo) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(correlation_probe(indep, 0, 1, kTwo)) < 0.03);
  const double r = correlation_probe(corr, 0, 1, kTwo);
  CHECK(r > 0.65);
  CHECK(r < 0.9);

  SampleSet set;
  set.draws = corr;
  CHECK(correlation_probe(set, 0, 1, kTwo) == r);

  Samples flat(100, OutcomeVector{1.0, 2.0});
  CHECK_THROWS(correlation_probe(flat, 0, 1, kTwo));
  CHECK_THROWS(correlation_probe(Samples(same.begin(), same.begin() + 10), 0, 1, kTwo));
  CHECK_THROWS(correlation_probe(Samples(40, OutcomeVector{0.0, 1.0}), 0, 1, kMixed));
}
