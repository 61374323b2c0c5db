#include "dime/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace dime::synth {
namespace {

using Vec = std::vector<double>;

double dot(const Vec& u, const Vec& v) {
  double s = 0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

double squared_norm(const Vec& v) { return dot(v, v); }

Vec uniform_vec(std::size_t d, double scale, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec v(d);
  for (auto& e : v) e = scale * u(rng);
  return v;
}

void require_dim(const Vec& v, std::size_t d, const char* name) {
  if (v.size() != d) throw std::invalid_argument(std::string("coefficient ") + name + " has wrong dimension");
}

Vec draw_covariates(std::size_t d, Rng& rng) {
  std::normal_distribution<double> n01;
  Vec x(d);
  for (auto& e : x) e = std::clamp(n01(rng), -kCovariateClamp, kCovariateClamp);
  return x;
}

Dataset empty_dataset(std::size_t d) {
  Dataset ds;
  ds.schema = two_continuous_schema();
  ds.covariate_dim = d;
  return ds;
}

void draw_bvn(const BivariateNormalParams& p, Rng& rng, double& y1, double& y2) {
  std::normal_distribution<double> n01;
  const double z1 = n01(rng);
  const double z2 = n01(rng);
  y1 = p.mu1 + p.sigma1 * z1;
  y2 = p.mu2 + p.sigma2 * (p.rho * z1 + std::sqrt(1.0 - p.rho * p.rho) * z2);
}

}  // namespace

OutcomeSchema two_continuous_schema() {
  return OutcomeSchema({OutcomeSpec::continuous("y1"), OutcomeSpec::continuous("y2")});
}

RhoDgpConfig RhoDgpConfig::sample(std::size_t d_x, double rho, std::uint64_t coef_seed, double sigma_noise) {
  if (d_x == 0) throw std::invalid_argument("d_x must be >= 1");
  RhoDgpConfig c;
  c.d_x = d_x;
  c.rho = rho;
  c.sigma_noise = sigma_noise;
  c.coef_seed = coef_seed;
  Rng rng(mix_seed(coef_seed, 0x7a0));
  const double s = 1.0 / std::sqrt(static_cast<double>(d_x));
  c.beta1 = uniform_vec(d_x, s, rng);
  c.beta2 = uniform_vec(d_x, s, rng);
  c.delta1 = uniform_vec(d_x, s, rng);
  c.delta2 = uniform_vec(d_x, s, rng);
  c.theta1 = uniform_vec(d_x, s, rng);
  c.theta2 = uniform_vec(d_x, s, rng);
  c.phi1 = uniform_vec(d_x, s, rng);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double* arr : {c.gamma, c.xi, c.alpha, c.eta})
    for (int i = 0; i < 3; ++i) arr[i] = s * u(rng);
  c.validate();
  return c;
}

void RhoDgpConfig::validate() const {
  if (d_x == 0) throw std::invalid_argument("d_x must be >= 1");
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("rho must lie in [0, 1]");
  if (!(sigma_noise > 0.0)) throw std::invalid_argument("sigma_noise must be positive");
  for (const auto* v : {&beta1, &beta2, &delta1, &delta2, &theta1, &theta2, &phi1})
    require_dim(*v, d_x, "vector");
}

BivariateNormalDgpConfig BivariateNormalDgpConfig::sample(std::size_t d_x, std::uint64_t coef_seed) {
  if (d_x == 0) throw std::invalid_argument("d_x must be >= 1");
  BivariateNormalDgpConfig c;
  c.d_x = d_x;
  c.coef_seed = coef_seed;
  Rng rng(mix_seed(coef_seed, 0xb7));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  c.beta1 = uniform_vec(d_x, 1.0, rng);
  c.beta2 = u(rng);
  c.beta3 = u(rng);
  c.w = uniform_vec(d_x, 1.0, rng);
  c.gamma1 = uniform_vec(d_x, 1.0, rng);
  c.gamma2 = u(rng);
  c.gamma3 = u(rng);
  c.gamma4 = uniform_vec(d_x, 1.0, rng);
  c.delta1 = uniform_vec(d_x, 1.0, rng);
  c.delta2 = u(rng);
  c.delta3 = uniform_vec(d_x, 1.0, rng);
  c.delta4 = u(rng);
  c.eta1 = uniform_vec(d_x, 1.0, rng);
  c.eta2 = u(rng);
  c.validate();
  return c;
}

void BivariateNormalDgpConfig::validate() const {
  if (d_x == 0) throw std::invalid_argument("d_x must be >= 1");
  for (const auto* v : {&beta1, &w, &gamma1, &gamma4, &delta1, &delta3, &eta1}) {
    require_dim(*v, d_x, "vector");
    for (double e : *v)
      if (!(e >= -1.0 && e <= 1.0)) throw std::invalid_argument("coefficients must lie in [-1, 1]");
  }
  for (double e : {beta2, beta3, gamma2, gamma3, delta2, delta4, eta2})
    if (!(e >= -1.0 && e <= 1.0)) throw std::invalid_argument("coefficients must lie in [-1, 1]");
}

BivariateNormalParams bvn_params(const BivariateNormalDgpConfig& c, const Vec& x, int a) {
  if (x.size() != c.d_x) throw std::invalid_argument("covariate dimension mismatch");
  const double fa = a;
  double mu1 = c.beta2 * fa + c.beta3 * dot(c.w, x) * fa;
  double mu2 = dot(c.gamma1, x) + c.gamma2 * fa + c.gamma3 * dot(c.w, x) * fa;
  for (std::size_t j = 0; j < c.d_x; ++j) {
    mu1 += c.beta1[j] * x[j] * x[j];
    mu2 += c.gamma4[j] * std::log1p(std::abs(x[j])) * fa;
  }
  const double s1 = std::exp(0.5 * (dot(c.delta1, x) + c.delta2 * fa));
  const double s2 = std::exp(0.5 * (dot(c.delta3, x) + c.delta4 * fa));
  const double rho = std::tanh(dot(c.eta1, x) + c.eta2 * fa);
  if (!(s1 > 0) || !(s2 > 0) || !(std::abs(rho) < 1.0) || !std::isfinite(s1 * s2))
    throw NumericError("bivariate normal covariance is not positive definite");
  return {mu1, mu2, s1, s2, rho};
}

double bvn_true_density(const BivariateNormalDgpConfig& c, const Vec& x, int a, double y1, double y2) {
  const auto p = bvn_params(c, x, a);
  const double z1 = (y1 - p.mu1) / p.sigma1;
  const double z2 = (y2 - p.mu2) / p.sigma2;
  const double q = 1.0 - p.rho * p.rho;
  const double quad = (z1 * z1 - 2.0 * p.rho * z1 * z2 + z2 * z2) / q;
  return std::exp(-0.5 * quad) / (2.0 * std::numbers::pi * p.sigma1 * p.sigma2 * std::sqrt(q));
}

double rho_f1(const RhoDgpConfig& c, const Vec& x, int a) {
  const double fa = a;
  const double lin = dot(c.beta1, x) + dot(c.delta1, x) * fa;
  return std::max(lin, 0.0) + c.gamma[0] * fa + c.gamma[1] * fa * fa + c.gamma[2] * std::sin(fa) +
         c.alpha[0] * squared_norm(x) + c.alpha[1] * std::exp(dot(x, c.theta1)) +
         c.alpha[2] * std::cos(dot(x, c.theta2));
}

double rho_f2(const RhoDgpConfig& c, const Vec& x, int a) {
  const double fa = a;
  return dot(c.beta2, x) + c.xi[0] * fa + c.xi[1] * fa * fa + c.xi[2] * std::sin(fa) +
         dot(c.delta2, x) * fa + c.eta[0] * std::log1p(std::sqrt(squared_norm(x))) +
         c.eta[1] * squared_norm(x) + c.eta[2] * std::exp(dot(x, c.phi1));
}

namespace {

void rho_means(const RhoDgpConfig& c, const Vec& x, int a, double& m1, double& m2) {
  const double f1 = rho_f1(c, x, a);
  const double f2 = rho_f2(c, x, a);
  m1 = f1;
  m2 = c.rho * f1 + (1.0 - c.rho) * f2;
}

}  // namespace

GeneratedData generate_rho_dataset(const RhoDgpConfig& config, std::size_t n, std::uint64_t seed) {
  config.validate();
  if (n == 0) throw std::invalid_argument("n must be >= 1");
  GeneratedData out{empty_dataset(config.d_x), {}};
  out.dataset.records.reserve(n);
  out.oracle.reserve(2 * n);
  for (std::size_t u = 0; u < n; ++u) {
    Rng rng(mix_seed(seed, u));
    Vec x = draw_covariates(config.d_x, rng);
    const int a = std::bernoulli_distribution(config.propensity)(rng) ? 1 : 0;
    std::normal_distribution<double> noise(0.0, config.sigma_noise);
    OutcomeVector factual;
    for (int arm = 0; arm <= 1; ++arm) {
      OracleRow row{u, arm, Vec(2), Vec(2)};
      rho_means(config, x, arm, row.mean[0], row.mean[1]);
      row.draw[0] = row.mean[0] + noise(rng);
      row.draw[1] = row.mean[1] + noise(rng);
      if (arm == a) factual = row.draw;
      out.oracle.push_back(std::move(row));
    }
    out.dataset.records.push_back({std::move(x), a, std::move(factual)});
  }
  return out;
}

GeneratedData generate_bvn_dataset(const BivariateNormalDgpConfig& config, std::size_t n, std::uint64_t seed) {
  config.validate();
  if (n == 0) throw std::invalid_argument("n must be >= 1");
  GeneratedData out{empty_dataset(config.d_x), {}};
  out.dataset.records.reserve(n);
  out.oracle.reserve(2 * n);
  for (std::size_t u = 0; u < n; ++u) {
    Rng rng(mix_seed(seed, u));
    Vec x = draw_covariates(config.d_x, rng);
    const int a = std::bernoulli_distribution(config.propensity)(rng) ? 1 : 0;
    OutcomeVector factual;
    for (int arm = 0; arm <= 1; ++arm) {
      const auto p = bvn_params(config, x, arm);
      OracleRow row{u, arm, {p.mu1, p.mu2}, Vec(2)};
      draw_bvn(p, rng, row.draw[0], row.draw[1]);
      if (arm == a) factual = row.draw;
      out.oracle.push_back(std::move(row));
    }
    out.dataset.records.push_back({std::move(x), a, std::move(factual)});
  }
  return out;
}

std::vector<OutcomeVector> sample_bvn(const BivariateNormalDgpConfig& config, const Vec& x, int a,
                                      std::size_t n, Rng& rng) {
  const auto p = bvn_params(config, x, a);
  std::vector<OutcomeVector> out(n, OutcomeVector(2));
  for (auto& y : out) draw_bvn(p, rng, y[0], y[1]);
  return out;
}

std::vector<OutcomeVector> sample_rho(const RhoDgpConfig& config, const Vec& x, int a, std::size_t n,
                                      Rng& rng) {
  double m1 = 0, m2 = 0;
  rho_means(config, x, a, m1, m2);
  std::normal_distribution<double> noise(0.0, config.sigma_noise);
  std::vector<OutcomeVector> out(n, OutcomeVector(2));
  for (auto& y : out) {
    y[0] = m1 + noise(rng);
    y[1] = m2 + noise(rng);
  }
  return out;
}

CapoCate oracle_capo_cate(const BivariateNormalDgpConfig& config, const Vec& x, std::size_t outcome) {
  if (outcome > 1) throw std::out_of_range("bivariate normal process has two outcomes");
  const auto p0 = bvn_params(config, x, 0);
  const auto p1 = bvn_params(config, x, 1);
  CapoCate r;
  r.capo0 = outcome == 0 ? p0.mu1 : p0.mu2;
  r.capo1 = outcome == 0 ? p1.mu1 : p1.mu2;
  r.cate = r.capo1 - r.capo0;
  return r;
}

CapoCate oracle_capo_cate(const RhoDgpConfig& config, const Vec& x, std::size_t outcome) {
  if (outcome > 1) throw std::out_of_range("rho process has two outcomes");
  double m[2][2];
  rho_means(config, x, 0, m[0][0], m[0][1]);
  rho_means(config, x, 1, m[1][0], m[1][1]);
  CapoCate r;
  r.capo0 = m[0][outcome];
  r.capo1 = m[1][outcome];
  r.cate = r.capo1 - r.capo0;
  return r;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("test_fraction must lie in (0, 1)");
  const std::size_t n = dataset.size();
  const auto n_train = static_cast<std::size_t>(
      std::ceil(static_cast<double>(n) * (1.0 - test_fraction) - 1e-9));

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(mix_seed(seed, 0x5e1));
  std::shuffle(idx.begin(), idx.end(), rng);
  std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::sort(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());

  auto take = [&](std::size_t lo, std::size_t hi) {
    Dataset part;
    part.schema = dataset.schema;
    part.covariate_dim = dataset.covariate_dim;
    for (std::size_t i = lo; i < hi; ++i) {
      part.records.push_back(dataset.records[idx[i]]);
      part.unit_ids.push_back(dataset.unit_id(idx[i]));
    }
    return part;
  };
  return {take(0, n_train), take(n_train, n)};
}

}  // namespace dime::synth
