#pragma once

// Single-step conditional generator for categorical outcome slots, trained
// with cross-entropy instead of score matching.

#include <vector>

#include "dime/generator.hpp"
#include "dime/nn.hpp"

namespace dime::categorical {

struct CategoricalConfig {
  nn::EmbeddingConfig embedding;
  std::vector<int> hidden = {128};
};

nn::Vector softmax(const nn::Vector& logits);

// 1-based category drawn from `pmf`.
int sample_category(const nn::Vector& pmf, Rng& rng);

class CategoricalModel : public SlotModel {
 public:
  CategoricalModel(const OutcomeSchema& schema, std::size_t covariate_dim, std::size_t target,
                   CategoricalConfig config);

  std::size_t target() const { return target_; }
  int num_categories() const { return num_categories_; }
  const CategoricalConfig& config() const { return config_; }
  // Output-layer tensors of the head, exposed for fixtures.
  std::size_t output_weight_slot() const { return head_.weight_slot(head_.num_layers() - 1); }
  std::size_t output_bias_slot() const { return head_.bias_slot(head_.num_layers() - 1); }

  nn::ParamStore& params() override { return params_; }
  const nn::ParamStore& params() const override { return params_; }
  void initialize(Rng& rng) override;

  nn::Matrix logits(const nn::ConditionBatch& cond) const;
  // L x B matrix of class probabilities.
  nn::Matrix probabilities(const nn::ConditionBatch& cond) const;

  // Mean of -log p(label | cond); labels are 1-based.
  double ce_loss(const std::vector<double>& labels, const nn::ConditionBatch& cond, nn::ParamStore* grads) const;

  double loss_and_gradient(const std::vector<double>& y0, const nn::ConditionBatch& cond, Rng& rng,
                           nn::ParamStore& grads) const override;
  std::vector<double> sample(const nn::ConditionBatch& cond, Rng& rng) const override;
  nlohmann::json hyperparameters() const override;

 private:
  OutcomeSchema schema_;
  std::size_t target_ = 0;
  int num_categories_ = 0;
  CategoricalConfig config_;
  nn::ParamStore params_;
  nn::ConditionEmbedder embedder_;
  nn::Mlp head_;
};

// Probability vector for a single condition.
nn::Vector cat_forward(const CategoricalModel& model, const nn::ConditionBatch& condition);

struct CeResult {
  double loss = 0.0;
  nn::ParamStore gradients;
};

CeResult ce_loss(const CategoricalModel& model, const std::vector<double>& labels, const nn::ConditionBatch& cond);

// n i.i.d. categories for a single condition.
std::vector<int> cat_sample(const CategoricalModel& model, const nn::ConditionBatch& condition, std::size_t n,
                            Rng& rng);

}  // namespace dime::categorical
