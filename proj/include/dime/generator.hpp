#pragma once

// Per-slot generator interface and the shared minibatch trainer.
//
// A slot generator draws one outcome slot given a batch of conditioning
// inputs. Trainable generators additionally expose their parameters and a
// loss with exact gradients; the trainer drives them with Adam over a stage
// plan that controls how many other outcomes each example conditions on.

#include <cstdint>
#include <vector>

#include "json.hpp"

#include "dime/core.hpp"
#include "dime/nn.hpp"

namespace dime {

class SlotGenerator {
 public:
  virtual ~SlotGenerator() = default;
  // One draw per column of `cond`, in model space (standardized continuous
  // value or 1-based category).
  virtual std::vector<double> sample(const nn::ConditionBatch& cond, Rng& rng) const = 0;
};

class SlotModel : public SlotGenerator {
 public:
  virtual nn::ParamStore& params() = 0;
  virtual const nn::ParamStore& params() const = 0;
  virtual void initialize(Rng& rng) = 0;
  // Mean loss over the batch; gradients are accumulated into `grads`.
  virtual double loss_and_gradient(const std::vector<double>& y0, const nn::ConditionBatch& cond, Rng& rng,
                                   nn::ParamStore& grads) const = 0;
  virtual nlohmann::json hyperparameters() const = 0;
};

// Training examples for one target slot, in model space. Missing outcomes
// are NaN.
struct SlotTrainingData {
  nn::Matrix x;        // d_x x n
  std::vector<int> a;  // n
  nn::Matrix y;        // k x n

  std::size_t size() const { return a.size(); }
};

struct TrainOptions {
  int batch_size = 256;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  // Decay of an exponential moving average of the weights, copied into the
  // model when training ends. 0 keeps the last Adam iterate.
  double ema_decay = 0.0;
};

// Each stage-plan entry is one epoch. Entry s >= 0 conditions every example on
// exactly s other outcomes (the prefix before the target in an ordering that
// places it at position s); kMixedStage draws s uniformly per example.
inline constexpr int kMixedStage = -1;

struct SlotTrainingPlan {
  std::size_t target = 0;
  std::vector<Ordering> orderings;
  std::vector<int> stages;
  // Forces an empty conditioning mask while consuming randomness exactly as
  // the masked plan would.
  bool marginal_only = false;
};

// Initializes the model from the seed, then runs the plan. Returns the mean
// loss of each epoch. Throws NumericError on a non-finite loss.
std::vector<double> train_slot(SlotModel& model, const SlotTrainingData& data, const SlotTrainingPlan& plan,
                               const TrainOptions& options);

}  // namespace dime
