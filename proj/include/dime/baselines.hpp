#pragma once

// Product-of-marginals competitor: one generator per outcome conditioned on
// (x, a) only, so cross-outcome dependence is discarded by construction.

#include "dime/orchestrator.hpp"

namespace dime {

// Same generators, curriculum length, optimizer and per-slot seeds as
// hierarchical_train, with every conditioning mask empty.
DimeModel train_marginal_product(const Dataset& train, const std::vector<Ordering>& orderings,
                                 const DimeConfig& config);
DimeModel train_marginal_product(const Dataset& train, const DimeConfig& config);

// Each slot drawn independently given (x, a).
SampleSet sample_marginal_product(const DimeModel& model, const std::vector<double>& x, int a, std::size_t n,
                                  Rng& rng);

}  // namespace dime
