#pragma once

// Joint interventional generator: one amortized conditional generator per
// outcome slot, trained over a curriculum of conditioning-set sizes and
// sampled autoregressively along factorization orderings.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <vector>

#include "json.hpp"

#include "dime/categorical.hpp"
#include "dime/core.hpp"
#include "dime/diffusion.hpp"
#include "dime/generator.hpp"

namespace dime {

struct DimeConfig {
  diffusion::DiffusionSchedule schedule;
  diffusion::ScoreNetConfig score;
  categorical::CategoricalConfig categorical;
  int epochs_per_stage = 50;
  int batch_size = 256;
  double learning_rate = 1e-3;
  // Weight averaging used for the trained generators; 0 disables it.
  double ema_decay = 0.999;
  std::size_t max_orderings = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json config_to_json(const DimeConfig& config);
DimeConfig config_from_json(const nlohmann::json& j);

// Per-column affine maps between data space and model space. Categorical
// slots keep mean 0 and scale 1.
struct Standardization {
  std::vector<double> x_mean, x_scale;
  std::vector<double> y_mean, y_scale;

  static Standardization fit(const Dataset& train);
  static Standardization identity(const OutcomeSchema& schema, std::size_t covariate_dim);
};

enum class Method { kDime, kMarginalProduct };
const char* method_name(Method method);
Method method_from_name(const std::string& name);

// Samples for one context (x, a).
struct SampleSet {
  std::vector<double> x;
  int a = 0;
  std::vector<OutcomeVector> draws;
  std::vector<std::size_t> ordering_ids;  // index into the model's orderings, per draw

  std::size_t size() const { return draws.size(); }
  // Values of one slot across draws.
  std::vector<double> slot(std::size_t i) const;
};

class DimeModel {
 public:
  DimeModel(OutcomeSchema schema, std::size_t covariate_dim, std::vector<Ordering> orderings,
            std::vector<std::shared_ptr<const SlotGenerator>> generators, Standardization standardization,
            Method method = Method::kDime);

  const OutcomeSchema& schema() const { return schema_; }
  std::size_t covariate_dim() const { return covariate_dim_; }
  const std::vector<Ordering>& orderings() const { return orderings_; }
  const SlotGenerator& generator(std::size_t slot) const { return *generators_.at(slot); }
  const std::vector<std::shared_ptr<const SlotGenerator>>& generators() const { return generators_; }
  const Standardization& standardization() const { return standardization_; }
  Method method() const { return method_; }

  // Training provenance; empty unless produced by a trainer or a bundle.
  DimeConfig config;
  std::vector<std::uint64_t> slot_seeds;
  std::vector<std::vector<double>> loss_traces;

  // One joint draw per column of (x, a), in data space. x is d_x x B; the
  // result is k x B. Under the marginal-product method every slot sees an
  // empty conditioning mask and the ordering is irrelevant.
  nn::Matrix sample_columns(const nn::Matrix& x, const std::vector<int>& a, std::size_t ordering_id,
                            Rng& rng) const;

 private:
  OutcomeSchema schema_;
  std::size_t covariate_dim_ = 0;
  std::vector<Ordering> orderings_;
  std::vector<std::shared_ptr<const SlotGenerator>> generators_;
  Standardization standardization_;
  Method method_ = Method::kDime;
};

// Curriculum for one slot: epochs_per_stage epochs at each conditioning-set
// size 0..k-1, then epochs_per_stage mixed epochs.
std::vector<int> stage_plan(std::size_t k, int epochs_per_stage);

// Fresh, uninitialized generator for one slot as configured.
std::unique_ptr<SlotModel> make_slot_model(const OutcomeSchema& schema, std::size_t covariate_dim,
                                           std::size_t slot, const DimeConfig& config);

// Shared trainer behind both methods. The marginal-product method runs the
// same plan and seeds with every conditioning mask forced empty.
DimeModel train_model(const Dataset& train, const std::vector<Ordering>& orderings, const DimeConfig& config,
                      Method method);

DimeModel hierarchical_train(const Dataset& train, const std::vector<Ordering>& orderings, const DimeConfig& config);
// Builds at most config.max_orderings orderings from config.seed.
DimeModel hierarchical_train(const Dataset& train, const DimeConfig& config);

SampleSet autoregressive_sample(const DimeModel& model, const std::vector<double>& x, int a,
                                std::size_t ordering_id, std::size_t n, Rng& rng);
// ceil(n_total / orderings) draws per ordering, pooled.
SampleSet aggregate_orderings(const DimeModel& model, const std::vector<double>& x, int a, std::size_t n_total,
                              Rng& rng);

// Batched aggregation for many units: draws_per_unit pooled draws for each
// column, returned unit-major (all draws of unit 0 first).
struct BatchSamples {
  nn::Matrix y;                           // k x (units * draws)
  std::vector<std::size_t> ordering_ids;  // per column
  std::size_t draws_per_unit = 0;
};
BatchSamples aggregate_orderings_batch(const DimeModel& model, const nn::Matrix& x, const std::vector<int>& a,
                                       std::size_t n_total, Rng& rng);

// Mean of a continuous slot over n aggregated draws.
double predict_capo(const DimeModel& model, const std::vector<double>& x, int a, std::size_t outcome,
                    std::size_t n, Rng& rng);
double predict_cate(const DimeModel& model, const std::vector<double>& x, std::size_t outcome, std::size_t n,
                    Rng& rng);
// Empirical category frequencies of a categorical slot; entry c is category c+1.
std::vector<double> predict_category_pmf(const DimeModel& model, const std::vector<double>& x, int a,
                                         std::size_t outcome, std::size_t n, Rng& rng);

// Model-space training view of a dataset.
SlotTrainingData training_view(const Dataset& dataset, const Standardization& standardization);

// Bundle directory: manifest.json plus slot_<i>.json / slot_<i>.bin and
// slot_<i>_loss.csv for i = 1..k.
void save_bundle(const std::filesystem::path& dir, const DimeModel& model);
DimeModel load_bundle(const std::filesystem::path& dir);

// SampleSet dump: unit_id,a,ordering_id,draw_id,y_1,...,y_k
std::string sample_header(std::size_t k);
void write_sample_rows(std::ostream& out, std::size_t unit_id, const SampleSet& samples);

}  // namespace dime
