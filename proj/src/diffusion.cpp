#include "dime/diffusion.hpp"

#include <cmath>
#include <stdexcept>

namespace dime::diffusion {

void DiffusionSchedule::validate() const {
  if (!(beta_min > 0.0 && beta_min < beta_max)) throw std::invalid_argument("schedule needs 0 < beta_min < beta_max");
  if (!(T > 0.0)) throw std::invalid_argument("schedule needs T > 0");
  if (!(t_min > 0.0 && t_min < T)) throw std::invalid_argument("schedule needs 0 < t_min < T");
  if (num_steps < 2) throw std::invalid_argument("schedule needs at least 2 steps");
}

ScheduleCoefficients schedule_coefficients(const DiffusionSchedule& s, double t) {
  if (!(t >= 0.0 && t <= s.T)) throw std::invalid_argument("diffusion time out of [0, T]");
  const double integral = s.beta_min * t + 0.5 * (s.beta_max - s.beta_min) * t * t / s.T;
  ScheduleCoefficients c;
  c.alpha = std::exp(-0.5 * integral);
  c.sigma = std::sqrt(-std::expm1(-integral));
  c.beta = s.beta_min + (s.beta_max - s.beta_min) * t / s.T;
  return c;
}

Perturbed forward_perturb(const DiffusionSchedule& schedule, double y0, double t, double eps) {
  const auto c = schedule_coefficients(schedule, t);
  if (!(c.sigma > 0.0)) throw std::invalid_argument("score target undefined at t = 0");
  return {c.alpha * y0 + c.sigma * eps, -eps / c.sigma};
}

std::vector<double> integrate_reverse_sde(const DiffusionSchedule& schedule, std::size_t n, const ScoreFn& score,
                                          Rng& rng) {
  schedule.validate();
  std::normal_distribution<double> n01;
  nn::Vector y(static_cast<Eigen::Index>(n));
  for (auto& v : y) v = n01(rng);
  const double dt = (schedule.T - schedule.t_min) / schedule.num_steps;
  for (int step = 0; step < schedule.num_steps; ++step) {
    const double t = schedule.T - step * dt;
    const auto c = schedule_coefficients(schedule, t);
    const nn::Vector s = score(y, t);
    const double noise_scale = std::sqrt(c.beta * dt);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double drift = -0.5 * c.beta * y(i) - c.beta * s(i);
      y(i) = y(i) - drift * dt + noise_scale * n01(rng);
    }
    if (!y.allFinite()) throw NumericError("reverse diffusion produced a non-finite state");
  }
  return {y.data(), y.data() + y.size()};
}

ScoreModel::ScoreModel(const OutcomeSchema& schema, std::size_t covariate_dim, std::size_t target,
                       ScoreNetConfig config, DiffusionSchedule schedule)
    : schema_(schema), target_(target), config_(std::move(config)), schedule_(schedule) {
  schedule_.validate();
  if (target_ >= schema_.size() || schema_[target_].is_categorical())
    throw std::invalid_argument("score model needs a continuous target slot");
  const int e = config_.embedding.dim;
  if (e % 2 != 0) throw std::invalid_argument("embedding dimension must be even for the time embedding");
  embedder_ = nn::ConditionEmbedder(schema_, covariate_dim, config_.embedding, params_, "cond");
  w_y_ = params_.add("score.y_proj", e, 1);
  w_c_ = params_.add("score.cond_proj", e, embedder_.output_dim());
  b_in_ = params_.add("score.in_bias", e, 1);
  net_ = nn::Mlp({e, config_.hidden, 1}, params_, "score.net");
}

void ScoreModel::initialize(Rng& rng) {
  embedder_.initialize(params_, rng);
  auto uniform_fill = [&](std::size_t slot) {
    auto w = params_.tensor(slot);
    const double bound = std::sqrt(3.0 / static_cast<double>(w.cols()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
  };
  uniform_fill(w_y_);
  uniform_fill(w_c_);
  params_.tensor(b_in_).setZero();
  net_.initialize(params_, rng);
}

nn::Vector ScoreModel::score(const nn::ConditionBatch& cond, const nn::Vector& y_t, double t) const {
  const auto n = static_cast<Eigen::Index>(cond.size());
  if (y_t.size() != n) throw std::invalid_argument("score: state and condition sizes differ");
  const auto c = schedule_coefficients(schedule_, t);
  if (!(c.sigma > 0.0)) throw std::invalid_argument("score undefined at t = 0");
  nn::Matrix h = params_.tensor(w_c_) * embedder_.forward(params_, cond);
  h.colwise() += params_.tensor(b_in_).col(0) + nn::sinusoidal_time_embed(t, config_.embedding.dim);
  h.noalias() += params_.tensor(w_y_) * y_t.transpose();
  return net_.forward(params_, h).row(0).transpose() / c.sigma;
}

double ScoreModel::dsm_loss_at(const std::vector<double>& y0, const nn::ConditionBatch& cond,
                               const std::vector<double>& times, const std::vector<double>& noises,
                               nn::ParamStore* grads) const {
  const std::size_t n = cond.size();
  if (n == 0) throw std::invalid_argument("dsm loss needs a nonempty batch");
  if (y0.size() != n || times.size() != n || noises.size() != n)
    throw std::invalid_argument("dsm loss inputs have mismatched sizes");
  const auto e = static_cast<Eigen::Index>(config_.embedding.dim);
  const auto cols = static_cast<Eigen::Index>(n);

  nn::EmbedTape embed_tape;
  const nn::Matrix cond_embed = embedder_.forward(params_, cond, grads ? &embed_tape : nullptr);
  nn::Matrix h = params_.tensor(w_c_) * cond_embed;
  h.colwise() += params_.tensor(b_in_).col(0);
  nn::Vector y_t(cols);
  std::vector<double> weight(n);  // lambda / sigma^2
  for (std::size_t b = 0; b < n; ++b) {
    const auto c = schedule_coefficients(schedule_, times[b]);
    if (!(c.sigma > 0.0)) throw std::invalid_argument("dsm loss needs t > 0");
    y_t(static_cast<Eigen::Index>(b)) = c.alpha * y0[b] + c.sigma * noises[b];
    const double lambda = config_.weighting == LossWeighting::kSigmaSquared ? c.sigma * c.sigma : c.beta;
    weight[b] = lambda / (c.sigma * c.sigma);
    h.col(static_cast<Eigen::Index>(b)) += nn::sinusoidal_time_embed(times[b], static_cast<int>(e));
  }
  h.noalias() += params_.tensor(w_y_) * y_t.transpose();

  nn::MlpTape tape;
  const nn::Matrix out = net_.forward(params_, h, grads ? &tape : nullptr);
  // sigma * (s_theta - target) = out + eps
  double loss = 0.0;
  nn::Matrix d_out(1, cols);
  for (std::size_t b = 0; b < n; ++b) {
    const double r = out(0, static_cast<Eigen::Index>(b)) + noises[b];
    loss += weight[b] * r * r;
    d_out(0, static_cast<Eigen::Index>(b)) = 2.0 * weight[b] * r / static_cast<double>(n);
  }
  loss /= static_cast<double>(n);
  if (!grads) return loss;

  const nn::Matrix d_h = net_.backward(params_, tape, d_out, *grads);
  grads->tensor(w_y_).noalias() += d_h * y_t;
  grads->tensor(w_c_).noalias() += d_h * cond_embed.transpose();
  grads->tensor(b_in_).col(0) += d_h.rowwise().sum();
  const nn::Matrix d_cond = params_.tensor(w_c_).transpose() * d_h;
  embedder_.backward(params_, cond, embed_tape, d_cond, *grads);
  return loss;
}

double ScoreModel::loss_and_gradient(const std::vector<double>& y0, const nn::ConditionBatch& cond, Rng& rng,
                                     nn::ParamStore& grads) const {
  std::uniform_real_distribution<double> ut(schedule_.t_min, schedule_.T);
  std::normal_distribution<double> n01;
  std::vector<double> times(cond.size()), noises(cond.size());
  for (std::size_t b = 0; b < cond.size(); ++b) {
    times[b] = ut(rng);
    noises[b] = n01(rng);
  }
  return dsm_loss_at(y0, cond, times, noises, &grads);
}

std::vector<double> ScoreModel::sample(const nn::ConditionBatch& cond, Rng& rng) const {
  const auto e = config_.embedding.dim;
  nn::Matrix proj = params_.tensor(w_c_) * embedder_.forward(params_, cond);
  proj.colwise() += params_.tensor(b_in_).col(0);
  const auto w_y = params_.tensor(w_y_);
  nn::Matrix h(proj.rows(), proj.cols());
  auto fn = [&](const nn::Vector& y, double t) -> nn::Vector {
    const auto c = schedule_coefficients(schedule_, t);
    h = proj;
    h.colwise() += nn::sinusoidal_time_embed(t, e);
    h.noalias() += w_y * y.transpose();
    return net_.forward(params_, h).row(0).transpose() / c.sigma;
  };
  return integrate_reverse_sde(schedule_, cond.size(), fn, rng);
}

nlohmann::json ScoreModel::hyperparameters() const {
  return {{"kind", "score"},
          {"target", target_},
          {"embedding_dim", config_.embedding.dim},
          {"encoder_hidden", config_.embedding.encoder_hidden},
          {"hidden", config_.hidden},
          {"weighting", config_.weighting == LossWeighting::kSigmaSquared ? "sigma2" : "g2"},
          {"beta_min", schedule_.beta_min},
          {"beta_max", schedule_.beta_max},
          {"T", schedule_.T},
          {"t_min", schedule_.t_min},
          {"num_steps", schedule_.num_steps}};
}

DsmResult dsm_loss(const ScoreModel& model, const std::vector<double>& y0, const nn::ConditionBatch& cond, Rng& rng) {
  DsmResult r{0.0, model.params().zeros_like()};
  r.loss = model.loss_and_gradient(y0, cond, rng, r.gradients);
  return r;
}

TrainingRun train_conditional_score(ScoreModel& model, const SlotTrainingData& data, int epochs, int batch_size,
                                    std::uint64_t seed, double learning_rate, double ema_decay) {
  SlotTrainingPlan plan;
  plan.target = model.target();
  plan.orderings = {Ordering::identity(static_cast<std::size_t>(data.y.rows()))};
  if (plan.target != 0) {
    // Put the target first so stage 0 is always available.
    std::vector<std::size_t> sigma{plan.target};
    for (std::size_t i = 0; i < static_cast<std::size_t>(data.y.rows()); ++i)
      if (i != plan.target) sigma.push_back(i);
    plan.orderings = {Ordering(std::move(sigma))};
  }
  plan.stages.assign(static_cast<std::size_t>(epochs), 0);
  return {train_slot(model, data, plan, {batch_size, learning_rate, seed, ema_decay})};
}

std::vector<double> reverse_sample(const ScoreModel& model, const nn::ConditionBatch& condition, std::size_t n,
                                   Rng& rng) {
  if (condition.size() != 1) throw std::invalid_argument("reverse_sample expects a single condition");
  nn::ConditionBatch rep;
  rep.x = condition.x.replicate(1, static_cast<Eigen::Index>(n));
  rep.a.assign(n, condition.a[0]);
  rep.y = condition.y.replicate(1, static_cast<Eigen::Index>(n));
  rep.mask.reserve(condition.mask.size() * n);
  for (std::size_t i = 0; i < n; ++i) rep.mask.insert(rep.mask.end(), condition.mask.begin(), condition.mask.end());
  rep.target = condition.target;
  if (n == 0) return {};
  return model.sample(rep, rng);
}

}  // namespace dime::diffusion
