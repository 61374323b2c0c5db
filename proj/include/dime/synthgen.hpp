#pragma once

// Synthetic data-generating processes with known interventional laws.
//
// Two generators are provided. The rho-correlated process mixes two
// nonlinear mean functions to control how strongly the second outcome
// tracks the first. The bivariate-normal process draws both outcomes from a
// covariate-dependent Gaussian, so its joint conditional density is known in
// closed form and serves as an exact evaluation oracle.

#include <cstdint>
#include <utility>
#include <vector>

#include "dime/core.hpp"

namespace dime::synth {

// Covariates are standard normal with every component clamped to this bound.
inline constexpr double kCovariateClamp = 5.0;

struct RhoDgpConfig {
  std::size_t d_x = 10;
  double rho = 0.5;
  double sigma_noise = 1.0;
  std::uint64_t coef_seed = 0;
  double propensity = 0.5;

  std::vector<double> beta1, beta2, delta1, delta2, theta1, theta2, phi1;
  double gamma[3] = {0, 0, 0};
  double xi[3] = {0, 0, 0};
  double alpha[3] = {0, 0, 0};
  double eta[3] = {0, 0, 0};

  // Draws every coefficient from Uniform(-1, 1) / sqrt(d_x).
  static RhoDgpConfig sample(std::size_t d_x, double rho, std::uint64_t coef_seed,
                             double sigma_noise = 1.0);
  void validate() const;
};

struct BivariateNormalDgpConfig {
  std::size_t d_x = 10;
  std::uint64_t coef_seed = 0;
  double propensity = 0.5;

  // mu1 = beta1'(x*x) + beta2 a + beta3 (w'x) a
  std::vector<double> beta1;
  double beta2 = 0, beta3 = 0;
  // Shared direction for the x'a interaction terms.
  std::vector<double> w;
  // mu2 = gamma1'x + gamma2 a + gamma3 (w'x) a + gamma4' log(1+|x|) a
  std::vector<double> gamma1, gamma4;
  double gamma2 = 0, gamma3 = 0;
  // sigma1^2 = exp(delta1'x + delta2 a), sigma2^2 = exp(delta3'x + delta4 a)
  std::vector<double> delta1, delta3;
  double delta2 = 0, delta4 = 0;
  // rho = tanh(eta1'x + eta2 a)
  std::vector<double> eta1;
  double eta2 = 0;

  // Draws every coefficient from Uniform(-1, 1).
  static BivariateNormalDgpConfig sample(std::size_t d_x, std::uint64_t coef_seed);
  void validate() const;
};

struct BivariateNormalParams {
  double mu1, mu2, sigma1, sigma2, rho;
};

BivariateNormalParams bvn_params(const BivariateNormalDgpConfig& config, const std::vector<double>& x, int a);

// Exact joint conditional density of (Y1, Y2) given (x, a).
double bvn_true_density(const BivariateNormalDgpConfig& config, const std::vector<double>& x, int a,
                        double y1, double y2);

// Noise-free means of the rho-correlated process.
double rho_f1(const RhoDgpConfig& config, const std::vector<double>& x, int a);
double rho_f2(const RhoDgpConfig& config, const std::vector<double>& x, int a);

// Both potential outcomes of one unit under one arm.
struct OracleRow {
  std::size_t unit_id = 0;
  int a = 0;
  std::vector<double> mean;
  std::vector<double> draw;
};

struct GeneratedData {
  Dataset dataset;                 // factual (x, a, y) only
  std::vector<OracleRow> oracle;   // two rows per unit: a = 0 then a = 1
};

GeneratedData generate_rho_dataset(const RhoDgpConfig& config, std::size_t n, std::uint64_t seed);
GeneratedData generate_bvn_dataset(const BivariateNormalDgpConfig& config, std::size_t n, std::uint64_t seed);

// n independent draws of (Y1, Y2) at a fixed (x, a).
std::vector<OutcomeVector> sample_bvn(const BivariateNormalDgpConfig& config, const std::vector<double>& x,
                                      int a, std::size_t n, Rng& rng);
std::vector<OutcomeVector> sample_rho(const RhoDgpConfig& config, const std::vector<double>& x, int a,
                                      std::size_t n, Rng& rng);

struct CapoCate {
  double capo0 = 0, capo1 = 0, cate = 0;
};

// Exact CAPOs and CATE of outcome `outcome` (0-based).
CapoCate oracle_capo_cate(const BivariateNormalDgpConfig& config, const std::vector<double>& x,
                          std::size_t outcome);
CapoCate oracle_capo_cate(const RhoDgpConfig& config, const std::vector<double>& x, std::size_t outcome);

OutcomeSchema two_continuous_schema();

// Disjoint split: ceil(n (1 - f)) training rows, the rest test. Rows keep
// their original relative order and unit ids.
std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, double test_fraction, std::uint64_t seed);

}  // namespace dime::synth
