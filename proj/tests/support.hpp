#pragma once

// Helpers shared by the test executables: finite-difference gradient checks,
// brute-force assignment, 1-D sorted W1 and simple moments.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dime/core.hpp"

namespace testing {

struct FdReport {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
};

// Central differences of `loss` with respect to randomly chosen entries of
// `params`, compared with `analytic`. The relative error uses
// max(|analytic|, |numeric|, floor) as denominator.
inline FdReport fd_check(std::span<double> params, std::span<const double> analytic,
                         const std::function<double()>& loss, std::size_t probes, std::uint64_t seed,
                         double h = 1e-4, double floor = 1e-8) {
  FdReport r;
  dime::Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, params.size() - 1);
  std::vector<std::size_t> idx;
  if (params.size() <= probes) {
    idx.resize(params.size());
    std::iota(idx.begin(), idx.end(), 0);
  } else {
    for (std::size_t p = 0; p < probes; ++p) idx.push_back(pick(rng));
  }
  for (const std::size_t i : idx) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = loss();
    params[i] = keep - h;
    const double down = loss();
    params[i] = keep;
    const double numeric = (up - down) / (2 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    r.max_rel_error = std::max(r.max_rel_error, std::abs(analytic[i] - numeric) / denom);
    ++r.probes;
  }
  return r;
}

// Minimum of sum_i cost(i, perm(i)) over all permutations.
inline double brute_force_assignment(const Eigen::MatrixXd& cost) {
  const auto n = static_cast<int>(cost.rows());
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += cost(i, perm[static_cast<std::size_t>(i)]);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Exact 1-D W1 between equal-size samples: match sorted order.
inline double sorted_w1(std::vector<double> p, std::vector<double> q) {
  std::sort(p.begin(), p.end());
  std::sort(q.begin(), q.end());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return s / static_cast<double>(p.size());
}

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (const double e : v) s += (e - m) * (e - m);
  return s / static_cast<double>(v.size() - 1);
}

inline double stddev(const std::vector<double>& v) { return std::sqrt(variance(v)); }

inline double covariance(const std::vector<double>& u, const std::vector<double>& v) {
  const double mu = mean(u), mv = mean(v);
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += (u[i] - mu) * (v[i] - mv);
  return s / static_cast<double>(u.size() - 1);
}

inline double pearson(const std::vector<double>& u, const std::vector<double>& v) {
  return covariance(u, v) / std::sqrt(variance(u) * variance(v));
}

inline std::vector<double> normal_draws(std::size_t n, double mu, double sd, std::uint64_t seed) {
  dime::Rng rng(seed);
  std::normal_distribution<double> g(mu, sd);
  std::vector<double> out(n);
  for (auto& v : out) v = g(rng);
  return out;
}

}  // namespace testing
