#pragma once

// Sample-based evaluation: exact empirical Wasserstein-1 through linear
// assignment, KL divergence through density estimates, PEHE and a Pearson
// correlation probe.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "dime/core.hpp"
#include "dime/orchestrator.hpp"

namespace dime::metrics {

using Samples = std::vector<OutcomeVector>;

// Euclidean over continuous slots plus the 0/1 metric over categorical ones.
double ground_cost(const OutcomeVector& u, const OutcomeVector& v, const OutcomeSchema& schema);

using CostMatrix = Eigen::MatrixXd;
CostMatrix cost_matrix(const Samples& p, const Samples& q, const OutcomeSchema& schema);

struct Assignment {
  std::vector<std::size_t> column_of_row;
  double total_cost = 0.0;  // summed over rows in order
};

// Exact minimum-cost perfect matching of a square matrix (shortest
// augmenting paths with potentials, O(n^3)).
Assignment solve_assignment(const CostMatrix& cost);

inline constexpr std::size_t kMaxAssignmentSize = 2000;

struct W1Result {
  double value = 0.0;
  std::size_t n = 0;        // matched pairs
  bool subsampled = false;  // true if either set was reduced
};

// Unequal sets are reduced to the smaller size, and both are capped at
// `cap`, by seeded subsampling without replacement.
W1Result empirical_w1(const Samples& p, const Samples& q, const OutcomeSchema& schema, std::uint64_t seed = 0,
                      std::size_t cap = kMaxAssignmentSize);
W1Result empirical_w1(const SampleSet& p, const SampleSet& q, const OutcomeSchema& schema, std::uint64_t seed = 0,
                      std::size_t cap = kMaxAssignmentSize);

inline constexpr double kPmfSmoothing = 1e-6;
inline constexpr double kBandwidthFloor = 1e-3;

// Product-Gaussian kernel density over continuous slots, times a smoothed
// empirical pmf over the joint categorical configuration. With categorical
// slots present, each configuration gets its own kernel estimate over the
// samples that share it, falling back to the pooled estimate for
// configurations never seen.
class DensityEstimate {
 public:
  const std::vector<double>& bandwidths() const { return bandwidths_; }
  const std::vector<std::size_t>& continuous_slots() const { return continuous_; }

  double log_density(const OutcomeVector& y) const;
  double density(const OutcomeVector& y) const;
  // Smoothed probability of the categorical configuration of y (1 if none).
  double configuration_probability(const OutcomeVector& y) const;

 private:
  friend DensityEstimate kde_fit(const Samples& samples, const OutcomeSchema& schema);
  struct Group {
    std::vector<Eigen::VectorXd> points;
    double log_prob = 0.0;
  };
  double kernel_log_mean(const std::vector<Eigen::VectorXd>& points, const OutcomeVector& y) const;
  std::size_t configuration_key(const OutcomeVector& y) const;

  OutcomeSchema schema_;
  std::vector<std::size_t> continuous_, categorical_;
  std::vector<double> bandwidths_;
  std::vector<Eigen::VectorXd> pooled_;
  std::vector<Group> groups_;             // indexed by configuration key
  std::vector<std::uint8_t> group_seen_;
  double unseen_log_prob_ = 0.0;
};

// Scott's rule bandwidth n^(-1/(d+4)) * std per continuous dimension,
// floored at kBandwidthFloor. Needs at least 30 samples.
DensityEstimate kde_fit(const Samples& samples, const OutcomeSchema& schema);

// Mean of log(p_hat / q_hat) over samples drawn from p. Not clamped.
double empirical_kl(const Samples& samples_from_p, const DensityEstimate& p_hat, const DensityEstimate& q_hat);

double pehe(const std::vector<double>& predicted_cate, const std::vector<double>& true_cate);
// Per-outcome PEHE averaged across outcomes.
double pehe_mean(const std::vector<std::vector<double>>& predicted, const std::vector<std::vector<double>>& truth);

double correlation_probe(const Samples& samples, std::size_t slot_i, std::size_t slot_j,
                         const OutcomeSchema& schema);
double correlation_probe(const SampleSet& samples, std::size_t slot_i, std::size_t slot_j,
                         const OutcomeSchema& schema);

}  // namespace dime::metrics
