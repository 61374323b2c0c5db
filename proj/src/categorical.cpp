#include "dime/categorical.hpp"

#include <cmath>
#include <stdexcept>

namespace dime::categorical {

nn::Vector softmax(const nn::Vector& logits) {
  const double m = logits.maxCoeff();
  nn::Vector p = (logits.array() - m).exp();
  return p / p.sum();
}

int sample_category(const nn::Vector& pmf, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (Eigen::Index c = 0; c < pmf.size(); ++c) {
    acc += pmf(c);
    if (u < acc) return static_cast<int>(c) + 1;
  }
  // u landed in the rounding gap above the last cumulative sum
  for (Eigen::Index c = pmf.size(); c-- > 0;)
    if (pmf(c) > 0.0) return static_cast<int>(c) + 1;
  return static_cast<int>(pmf.size());
}

CategoricalModel::CategoricalModel(const OutcomeSchema& schema, std::size_t covariate_dim, std::size_t target,
                                   CategoricalConfig config)
    : schema_(schema), target_(target), config_(std::move(config)) {
  if (target_ >= schema_.size() || !schema_[target_].is_categorical())
    throw std::invalid_argument("categorical model needs a categorical target slot");
  num_categories_ = schema_[target_].num_categories;
  embedder_ = nn::ConditionEmbedder(schema_, covariate_dim, config_.embedding, params_, "cond");
  head_ = nn::Mlp({static_cast<int>(embedder_.output_dim()), config_.hidden, num_categories_}, params_, "head");
}

void CategoricalModel::initialize(Rng& rng) {
  embedder_.initialize(params_, rng);
  head_.initialize(params_, rng, 0.1);
}

nn::Matrix CategoricalModel::logits(const nn::ConditionBatch& cond) const {
  return head_.forward(params_, embedder_.forward(params_, cond));
}

nn::Matrix CategoricalModel::probabilities(const nn::ConditionBatch& cond) const {
  nn::Matrix z = logits(cond);
  for (Eigen::Index c = 0; c < z.cols(); ++c) z.col(c) = softmax(z.col(c));
  return z;
}

double CategoricalModel::ce_loss(const std::vector<double>& labels, const nn::ConditionBatch& cond,
                                 nn::ParamStore* grads) const {
  const std::size_t n = cond.size();
  if (n == 0 || labels.size() != n) throw std::invalid_argument("ce loss needs one label per condition");
  nn::EmbedTape embed_tape;
  nn::MlpTape head_tape;
  const nn::Matrix c = embedder_.forward(params_, cond, grads ? &embed_tape : nullptr);
  const nn::Matrix z = head_.forward(params_, c, grads ? &head_tape : nullptr);
  double loss = 0.0;
  nn::Matrix d_z(z.rows(), z.cols());
  for (std::size_t b = 0; b < n; ++b) {
    const double label = labels[b];
    if (label != std::floor(label) || label < 1 || label > num_categories_)
      throw std::invalid_argument("label out of range");
    const auto col = static_cast<Eigen::Index>(b);
    const auto li = static_cast<Eigen::Index>(label) - 1;
    const double m = z.col(col).maxCoeff();
    const double lse = m + std::log((z.col(col).array() - m).exp().sum());
    loss += lse - z(li, col);
    d_z.col(col) = (z.col(col).array() - lse).exp();
    d_z(li, col) -= 1.0;
  }
  const double inv = 1.0 / static_cast<double>(n);
  if (grads) {
    d_z *= inv;
    const nn::Matrix d_c = head_.backward(params_, head_tape, d_z, *grads);
    embedder_.backward(params_, cond, embed_tape, d_c, *grads);
  }
  return loss * inv;
}

double CategoricalModel::loss_and_gradient(const std::vector<double>& y0, const nn::ConditionBatch& cond, Rng&,
                                           nn::ParamStore& grads) const {
  return ce_loss(y0, cond, &grads);
}

std::vector<double> CategoricalModel::sample(const nn::ConditionBatch& cond, Rng& rng) const {
  const nn::Matrix p = probabilities(cond);
  std::vector<double> out(cond.size());
  for (std::size_t b = 0; b < out.size(); ++b) out[b] = sample_category(p.col(static_cast<Eigen::Index>(b)), rng);
  return out;
}

nlohmann::json CategoricalModel::hyperparameters() const {
  return {{"kind", "categorical"},
          {"target", target_},
          {"num_categories", num_categories_},
          {"embedding_dim", config_.embedding.dim},
          {"encoder_hidden", config_.embedding.encoder_hidden},
          {"hidden", config_.hidden}};
}

nn::Vector cat_forward(const CategoricalModel& model, const nn::ConditionBatch& condition) {
  if (condition.size() != 1) throw std::invalid_argument("cat_forward expects a single condition");
  return model.probabilities(condition).col(0);
}

CeResult ce_loss(const CategoricalModel& model, const std::vector<double>& labels, const nn::ConditionBatch& cond) {
  CeResult r{0.0, model.params().zeros_like()};
  r.loss = model.ce_loss(labels, cond, &r.gradients);
  return r;
}

std::vector<int> cat_sample(const CategoricalModel& model, const nn::ConditionBatch& condition, std::size_t n,
                            Rng& rng) {
  const nn::Vector pmf = cat_forward(model, condition);
  std::vector<int> out(n);
  for (auto& v : out) v = sample_category(pmf, rng);
  return out;
}

}  // namespace dime::categorical
