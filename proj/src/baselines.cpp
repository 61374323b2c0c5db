#include "dime/baselines.hpp"

#include <stdexcept>

namespace dime {

DimeModel train_marginal_product(const Dataset& train, const std::vector<Ordering>& orderings,
                                 const DimeConfig& config) {
  return train_model(train, orderings, config, Method::kMarginalProduct);
}

DimeModel train_marginal_product(const Dataset& train, const DimeConfig& config) {
  return train_marginal_product(train, build_orderings(train.schema.size(), config.max_orderings, config.seed),
                                config);
}

SampleSet sample_marginal_product(const DimeModel& model, const std::vector<double>& x, int a, std::size_t n,
                                  Rng& rng) {
  if (model.method() != Method::kMarginalProduct)
    throw std::invalid_argument("sample_marginal_product needs a marginal-product model");
  return autoregressive_sample(model, x, a, 0, n, rng);
}

}  // namespace dime
