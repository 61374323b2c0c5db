#include "dime/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace dime {

std::vector<double> train_slot(SlotModel& model, const SlotTrainingData& data, const SlotTrainingPlan& plan,
                               const TrainOptions& options) {
  const std::size_t n = data.size();
  const auto k = static_cast<std::size_t>(data.y.rows());
  if (n == 0) throw std::invalid_argument("train_slot: no training examples");
  if (plan.target >= k) throw std::invalid_argument("train_slot: target slot out of range");
  if (plan.orderings.empty()) throw std::invalid_argument("train_slot: no orderings");
  if (options.batch_size < 1) throw std::invalid_argument("train_slot: batch size must be >= 1");
  if (!(options.ema_decay >= 0.0 && options.ema_decay < 1.0))
    throw std::invalid_argument("train_slot: EMA decay must lie in [0, 1)");

  // Orderings that place the target at each position.
  std::vector<std::vector<std::size_t>> by_position(k);
  for (std::size_t o = 0; o < plan.orderings.size(); ++o)
    by_position[plan.orderings[o].position_of(plan.target)].push_back(o);

  Rng rng(options.seed);
  model.initialize(rng);
  nn::AdamState adam(model.params().size(), options.learning_rate);
  nn::ParamStore grads = model.params().zeros_like();
  const bool use_ema = options.ema_decay > 0.0;
  std::vector<double> ema;
  if (use_ema) ema.assign(model.params().values().begin(), model.params().values().end());
  std::size_t step = 0;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> trace;
  trace.reserve(plan.stages.size());

  const auto d = data.x.rows();
  std::vector<std::size_t> cols;
  std::vector<Mask> masks;
  for (std::size_t epoch = 0; epoch < plan.stages.size(); ++epoch) {
    const int stage = plan.stages[epoch];
    if (stage >= static_cast<int>(k)) throw std::invalid_argument("train_slot: stage exceeds outcome count");
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end = std::min(n, begin + static_cast<std::size_t>(options.batch_size));
      cols.clear();
      masks.clear();
      for (std::size_t r = begin; r < end; ++r) {
        const std::size_t row = order[r];
        Mask observed(k);
        for (std::size_t i = 0; i < k; ++i)
          observed[i] = std::isnan(data.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(row))) ? 0 : 1;
        if (!observed[plan.target]) continue;
        std::size_t s = 0;
        if (stage >= 0) {
          s = static_cast<std::size_t>(stage);
        } else if (k > 1) {
          s = std::uniform_int_distribution<std::size_t>(0, k - 1)(rng);
        }
        const auto& candidates = by_position[s];
        if (candidates.empty()) continue;
        std::size_t pick = 0;
        if (candidates.size() > 1) pick = std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng);
        auto m = masks_for_step(plan.orderings[candidates[pick]], s, observed);
        if (plan.marginal_only) std::fill(m.conditional.begin(), m.conditional.end(), 0);
        cols.push_back(row);
        masks.push_back(std::move(m.conditional));
      }
      if (cols.empty()) continue;

      const auto b = static_cast<Eigen::Index>(cols.size());
      nn::ConditionBatch cond;
      cond.x.resize(d, b);
      cond.y.resize(static_cast<Eigen::Index>(k), b);
      cond.a.resize(cols.size());
      cond.mask.resize(k * cols.size());
      cond.target = plan.target;
      std::vector<double> y0(cols.size());
      for (std::size_t c = 0; c < cols.size(); ++c) {
        const auto col = static_cast<Eigen::Index>(cols[c]);
        cond.x.col(static_cast<Eigen::Index>(c)) = data.x.col(col);
        cond.a[c] = data.a[cols[c]];
        for (std::size_t i = 0; i < k; ++i) {
          const bool use = masks[c][i] != 0;
          cond.mask[c * k + i] = use ? 1 : 0;
          cond.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
              use ? data.y(static_cast<Eigen::Index>(i), col) : 0.0;
        }
        y0[c] = data.y(static_cast<Eigen::Index>(plan.target), col);
      }

      grads.set_zero();
      const double loss = model.loss_and_gradient(y0, cond, rng, grads);
      if (!std::isfinite(loss))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " (stage " +
                           (stage < 0 ? std::string("mixed") : std::to_string(stage)) + ") for slot " +
                           std::to_string(plan.target + 1));
      nn::adam_step(adam, model.params().values(), grads.values());
      if (use_ema) {
        // Short warm-up so the random initialization fades quickly.
        ++step;
        const double decay = std::min(options.ema_decay, (1.0 + step) / (10.0 + step));
        const auto p = model.params().values();
        for (std::size_t j = 0; j < ema.size(); ++j) ema[j] = decay * ema[j] + (1.0 - decay) * p[j];
      }
      loss_sum += loss * static_cast<double>(cols.size());
      loss_count += cols.size();
    }
    trace.push_back(loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0);
  }
  if (use_ema) std::copy(ema.begin(), ema.end(), model.params().values().begin());
  return trace;
}

}  // namespace dime
