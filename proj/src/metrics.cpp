#include "dime/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace dime::metrics {

namespace {

void check_conforms(const OutcomeVector& y, const OutcomeSchema& schema) {
  if (auto v = validate_outcomes(y, schema)) throw std::invalid_argument("sample does not match schema: " + v->message);
}

Samples subsample(const Samples& s, std::size_t m, Rng& rng) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // partial Fisher-Yates
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(i, idx.size() - 1)(rng);
    std::swap(idx[i], idx[j]);
  }
  Samples out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) out.push_back(s[idx[i]]);
  return out;
}

double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

namespace {

double unchecked_cost(const OutcomeVector& u, const OutcomeVector& v, const OutcomeSchema& schema) {
  double acc = 0.0;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (schema[i].is_categorical()) {
      acc += u[i] != v[i] ? 1.0 : 0.0;
    } else {
      const double d = u[i] - v[i];
      acc += d * d;
    }
  }
  return std::sqrt(acc);
}

}  // namespace

double ground_cost(const OutcomeVector& u, const OutcomeVector& v, const OutcomeSchema& schema) {
  if (u.size() != schema.size() || v.size() != schema.size())
    throw std::invalid_argument("ground_cost: outcome vectors do not match the schema");
  check_conforms(u, schema);
  check_conforms(v, schema);
  return unchecked_cost(u, v, schema);
}

CostMatrix cost_matrix(const Samples& p, const Samples& q, const OutcomeSchema& schema) {
  for (const auto& y : p) check_conforms(y, schema);
  for (const auto& y : q) check_conforms(y, schema);
  CostMatrix c(static_cast<Eigen::Index>(p.size()), static_cast<Eigen::Index>(q.size()));
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < q.size(); ++j)
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = unchecked_cost(p[i], q[j], schema);
  return c;
}

Assignment solve_assignment(const CostMatrix& cost) {
  const auto n = static_cast<std::size_t>(cost.rows());
  if (cost.rows() != cost.cols()) throw std::invalid_argument("solve_assignment needs a square matrix");
  if (!cost.allFinite()) throw std::invalid_argument("solve_assignment: non-finite cost entry");
  Assignment out;
  if (n == 0) return out;

  // 1-based potentials; p[j] is the row matched to column j, column 0 is a
  // virtual start.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  out.column_of_row.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) out.column_of_row[p[j] - 1] = j - 1;
  for (std::size_t i = 0; i < n; ++i)
    out.total_cost += cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(out.column_of_row[i]));
  return out;
}

W1Result empirical_w1(const Samples& p, const Samples& q, const OutcomeSchema& schema, std::uint64_t seed,
                      std::size_t cap) {
  if (p.empty() || q.empty()) throw std::invalid_argument("empirical_w1: empty sample set");
  if (cap < 1) throw std::invalid_argument("empirical_w1: cap must be >= 1");
  const std::size_t m = std::min({p.size(), q.size(), cap});
  W1Result r;
  r.n = m;
  r.subsampled = p.size() != m || q.size() != m;
  Rng rng(mix_seed(seed, 0xa55));
  const Samples ps = p.size() == m ? p : subsample(p, m, rng);
  const Samples qs = q.size() == m ? q : subsample(q, m, rng);
  const CostMatrix cost = cost_matrix(ps, qs, schema);
  const Assignment match = solve_assignment(cost);
  // Sum matched costs in sorted order so that W1(p, q) == W1(q, p) bit for bit.
  std::vector<double> matched(m);
  for (std::size_t i = 0; i < m; ++i)
    matched[i] = cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(match.column_of_row[i]));
  std::sort(matched.begin(), matched.end());
  r.value = std::accumulate(matched.begin(), matched.end(), 0.0) / static_cast<double>(m);
  return r;
}

W1Result empirical_w1(const SampleSet& p, const SampleSet& q, const OutcomeSchema& schema, std::uint64_t seed,
                      std::size_t cap) {
  return empirical_w1(p.draws, q.draws, schema, seed, cap);
}

std::size_t DensityEstimate::configuration_key(const OutcomeVector& y) const {
  std::size_t key = 0;
  for (std::size_t c : categorical_) {
    const auto levels = static_cast<std::size_t>(schema_[c].num_categories);
    key = key * levels + (static_cast<std::size_t>(y[c]) - 1);
  }
  return key;
}

double DensityEstimate::kernel_log_mean(const std::vector<Eigen::VectorXd>& points, const OutcomeVector& y) const {
  if (continuous_.empty()) return 0.0;
  const std::size_t d = continuous_.size();
  Eigen::VectorXd q(static_cast<Eigen::Index>(d));
  double log_norm = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    q(static_cast<Eigen::Index>(j)) = y[continuous_[j]] / bandwidths_[j];
    log_norm += std::log(bandwidths_[j]) + 0.5 * std::log(2.0 * M_PI);
  }
  std::vector<double> terms(points.size());
  for (std::size_t s = 0; s < points.size(); ++s) terms[s] = -0.5 * (points[s] - q).squaredNorm();
  return log_sum_exp(terms) - std::log(static_cast<double>(points.size())) - log_norm;
}

double DensityEstimate::configuration_probability(const OutcomeVector& y) const {
  if (categorical_.empty()) return 1.0;
  const std::size_t key = configuration_key(y);
  return std::exp(group_seen_[key] ? groups_[key].log_prob : unseen_log_prob_);
}

double DensityEstimate::log_density(const OutcomeVector& y) const {
  check_conforms(y, schema_);
  if (categorical_.empty()) return kernel_log_mean(pooled_, y);
  const std::size_t key = configuration_key(y);
  if (!group_seen_[key]) return unseen_log_prob_ + kernel_log_mean(pooled_, y);
  return groups_[key].log_prob + kernel_log_mean(groups_[key].points, y);
}

double DensityEstimate::density(const OutcomeVector& y) const { return std::exp(log_density(y)); }

DensityEstimate kde_fit(const Samples& samples, const OutcomeSchema& schema) {
  if (samples.size() < 30) throw std::invalid_argument("kde_fit needs at least 30 samples");
  for (const auto& y : samples) check_conforms(y, schema);
  DensityEstimate e;
  e.schema_ = schema;
  for (std::size_t i = 0; i < schema.size(); ++i) (schema[i].is_categorical() ? e.categorical_ : e.continuous_).push_back(i);

  const std::size_t n = samples.size();
  const std::size_t d = e.continuous_.size();
  const double factor = std::pow(static_cast<double>(n), -1.0 / (static_cast<double>(d) + 4.0));
  for (std::size_t slot : e.continuous_) {
    double mean = 0.0;
    for (const auto& y : samples) mean += y[slot];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& y : samples) var += (y[slot] - mean) * (y[slot] - mean);
    var /= static_cast<double>(n - 1);
    e.bandwidths_.push_back(std::max(kBandwidthFloor, factor * std::sqrt(var)));
  }

  // Points are stored pre-divided by the bandwidth.
  auto scaled = [&](const OutcomeVector& y) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) v(static_cast<Eigen::Index>(j)) = y[e.continuous_[j]] / e.bandwidths_[j];
    return v;
  };
  e.pooled_.reserve(n);
  for (const auto& y : samples) e.pooled_.push_back(scaled(y));

  if (!e.categorical_.empty()) {
    std::size_t configs = 1;
    for (std::size_t c : e.categorical_) configs *= static_cast<std::size_t>(schema[c].num_categories);
    e.groups_.resize(configs);
    e.group_seen_.assign(configs, 0);
    std::vector<double> counts(configs, 0.0);
    for (const auto& y : samples) {
      const std::size_t key = e.configuration_key(y);
      e.groups_[key].points.push_back(scaled(y));
      counts[key] += 1.0;
      e.group_seen_[key] = 1;
    }
    const double denom = static_cast<double>(n) + kPmfSmoothing * static_cast<double>(configs);
    for (std::size_t key = 0; key < configs; ++key) e.groups_[key].log_prob = std::log((counts[key] + kPmfSmoothing) / denom);
    e.unseen_log_prob_ = std::log(kPmfSmoothing / denom);
  }
  return e;
}

double empirical_kl(const Samples& samples_from_p, const DensityEstimate& p_hat, const DensityEstimate& q_hat) {
  if (samples_from_p.empty()) throw std::invalid_argument("empirical_kl: empty sample set");
  double acc = 0.0;
  for (const auto& y : samples_from_p) acc += p_hat.log_density(y) - q_hat.log_density(y);
  return acc / static_cast<double>(samples_from_p.size());
}

double pehe(const std::vector<double>& predicted_cate, const std::vector<double>& true_cate) {
  if (predicted_cate.empty()) throw std::invalid_argument("pehe: empty input");
  if (predicted_cate.size() != true_cate.size()) throw std::invalid_argument("pehe: length mismatch");
  double acc = 0.0;
  for (std::size_t j = 0; j < predicted_cate.size(); ++j) {
    const double e = predicted_cate[j] - true_cate[j];
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(predicted_cate.size()));
}

double pehe_mean(const std::vector<std::vector<double>>& predicted, const std::vector<std::vector<double>>& truth) {
  if (predicted.empty()) throw std::invalid_argument("pehe_mean: no outcomes");
  if (predicted.size() != truth.size()) throw std::invalid_argument("pehe_mean: outcome count mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) acc += pehe(predicted[i], truth[i]);
  return acc / static_cast<double>(predicted.size());
}

double correlation_probe(const Samples& samples, std::size_t slot_i, std::size_t slot_j, const OutcomeSchema& schema) {
  if (slot_i >= schema.size() || slot_j >= schema.size()) throw std::invalid_argument("correlation_probe: slot out of range");
  if (schema[slot_i].is_categorical() || schema[slot_j].is_categorical())
    throw std::invalid_argument("correlation_probe needs continuous slots");
  if (samples.size() < 30) throw std::invalid_argument("correlation_probe needs at least 30 draws");
  const double n = static_cast<double>(samples.size());
  double mi = 0.0, mj = 0.0;
  for (const auto& y : samples) {
    mi += y.at(slot_i);
    mj += y.at(slot_j);
  }
  mi /= n;
  mj /= n;
  double sij = 0.0, sii = 0.0, sjj = 0.0;
  for (const auto& y : samples) {
    const double di = y[slot_i] - mi, dj = y[slot_j] - mj;
    sij += di * dj;
    sii += di * di;
    sjj += dj * dj;
  }
  if (!(sii > 0.0) || !(sjj > 0.0)) throw std::invalid_argument("correlation_probe: zero variance");
  return sij / std::sqrt(sii * sjj);
}

double correlation_probe(const SampleSet& samples, std::size_t slot_i, std::size_t slot_j, const OutcomeSchema& schema) {
  return correlation_probe(samples.draws, slot_i, slot_j, schema);
}

}  // namespace dime::metrics
