#pragma once

// Conditional score-based diffusion for one continuous outcome slot.
//
// Forward process: variance-preserving SDE dy = -1/2 beta(t) y dt + sqrt(beta(t)) dw
// with a linear beta schedule, so that
//   y_t | y_0 ~ N(alpha(t) y_0, sigma(t)^2),  alpha = exp(-1/2 int_0^t beta),
//   sigma^2 = 1 - alpha^2.
// The score network is trained by denoising score matching and sampled
// with Euler-Maruyama on the reverse-time SDE.

#include <functional>
#include <vector>

#include "dime/generator.hpp"
#include "dime/nn.hpp"

namespace dime::diffusion {

struct DiffusionSchedule {
  double beta_min = 0.1;
  double beta_max = 20.0;
  double T = 1.0;
  double t_min = 1e-3;
  int num_steps = 200;

  void validate() const;
};

struct ScheduleCoefficients {
  double alpha = 1.0;
  double sigma = 0.0;
  double beta = 0.0;
};

ScheduleCoefficients schedule_coefficients(const DiffusionSchedule& schedule, double t);

struct Perturbed {
  double y_t = 0.0;
  double score_target = 0.0;  // -eps / sigma
};

// Throws std::invalid_argument at t = 0 where the target score is undefined.
Perturbed forward_perturb(const DiffusionSchedule& schedule, double y0, double t, double eps);

enum class LossWeighting {
  kSigmaSquared,  // lambda(t) = sigma(t)^2
  kGSquared,      // lambda(t) = beta(t) = g(t)^2
};

struct ScoreNetConfig {
  nn::EmbeddingConfig embedding;
  std::vector<int> hidden = {128, 128, 128};
  LossWeighting weighting = LossWeighting::kSigmaSquared;
};

// Scores for a batch of states at one time.
using ScoreFn = std::function<nn::Vector(const nn::Vector& y, double t)>;

// Euler-Maruyama integration of the reverse SDE from T down to t_min,
// starting from N(0, 1) draws. One output per column.
std::vector<double> integrate_reverse_sde(const DiffusionSchedule& schedule, std::size_t n, const ScoreFn& score,
                                          Rng& rng);

// s_theta(y_t, t | cond) = net(W_y y_t + W_c c + b + temb(t)) / sigma(t),
// where c is the masked condition embedding and net a SiLU MLP with scalar
// output.
class ScoreModel : public SlotModel {
 public:
  ScoreModel(const OutcomeSchema& schema, std::size_t covariate_dim, std::size_t target, ScoreNetConfig config,
             DiffusionSchedule schedule);

  const DiffusionSchedule& schedule() const { return schedule_; }
  const ScoreNetConfig& config() const { return config_; }
  std::size_t target() const { return target_; }

  nn::ParamStore& params() override { return params_; }
  const nn::ParamStore& params() const override { return params_; }
  void initialize(Rng& rng) override;

  // Score at (y_t, t) for each column of `cond`.
  nn::Vector score(const nn::ConditionBatch& cond, const nn::Vector& y_t, double t) const;

  // Denoising score-matching loss at fixed per-example times and noises.
  double dsm_loss_at(const std::vector<double>& y0, const nn::ConditionBatch& cond, const std::vector<double>& times,
                     const std::vector<double>& noises, nn::ParamStore* grads) const;

  double loss_and_gradient(const std::vector<double>& y0, const nn::ConditionBatch& cond, Rng& rng,
                           nn::ParamStore& grads) const override;
  std::vector<double> sample(const nn::ConditionBatch& cond, Rng& rng) const override;
  nlohmann::json hyperparameters() const override;

 private:
  OutcomeSchema schema_;
  std::size_t target_ = 0;
  ScoreNetConfig config_;
  DiffusionSchedule schedule_;
  nn::ParamStore params_;
  nn::ConditionEmbedder embedder_;
  std::size_t w_y_ = 0, w_c_ = 0, b_in_ = 0;
  nn::Mlp net_;
};

struct DsmResult {
  double loss = 0.0;
  nn::ParamStore gradients;
};

// Draws t ~ U[t_min, T] and eps ~ N(0, 1) per example.
DsmResult dsm_loss(const ScoreModel& model, const std::vector<double>& y0, const nn::ConditionBatch& cond, Rng& rng);

struct TrainingRun {
  std::vector<double> loss_trace;
};

// Trains on every example with an empty conditioning mask.
TrainingRun train_conditional_score(ScoreModel& model, const SlotTrainingData& data, int epochs, int batch_size,
                                    std::uint64_t seed, double learning_rate = 1e-3, double ema_decay = 0.0);

// n draws for one condition (a single-column batch).
std::vector<double> reverse_sample(const ScoreModel& model, const nn::ConditionBatch& condition, std::size_t n,
                                   Rng& rng);

}  // namespace dime::diffusion
