#pragma once

// Small fixed-architecture neural network toolkit: flat parameter storage
// with a named layout, SiLU multilayer perceptrons with exact reverse-mode
// gradients, Adam, sinusoidal time features and the masked condition
// embedder shared by every per-outcome generator.
//
// Batches are column-major: one column per example.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "dime/core.hpp"

namespace dime::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

struct TensorSlot {
  std::string name;
  std::size_t offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
  bool operator==(const TensorSlot&) const = default;
};

// Flat parameter vector plus a manifest of named tensors laid out back to
// back. Maps returned by tensor() are invalidated by add().
class ParamStore {
 public:
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols);

  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  const std::vector<TensorSlot>& manifest() const { return manifest_; }

  MatrixMap tensor(std::size_t slot);
  ConstMatrixMap tensor(std::size_t slot) const;
  std::size_t find(std::string_view name) const;

  ParamStore zeros_like() const;
  void set_zero();
  bool same_layout(const ParamStore& other) const { return manifest_ == other.manifest_; }

 private:
  // Aligned so that vectorized reductions over tensor maps do not depend on
  // where the heap happened to place the buffer.
  std::vector<double, Eigen::aligned_allocator<double>> values_;
  std::vector<TensorSlot> manifest_;
};

double silu(double z);
double silu_grad(double z);

struct MlpSpec {
  int input_dim = 1;
  std::vector<int> hidden_dims;
  int output_dim = 1;

  void validate() const;
};

struct MlpTape {
  std::vector<Matrix> inputs;  // input fed to each layer
  std::vector<Matrix> pre;     // pre-activation of each hidden layer
};

// SiLU after every hidden layer, identity at the output.
class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpSpec spec, ParamStore& store, const std::string& prefix);

  const MlpSpec& spec() const { return spec_; }
  std::size_t num_layers() const { return weights_.size(); }
  std::size_t weight_slot(std::size_t layer) const { return weights_.at(layer); }
  std::size_t bias_slot(std::size_t layer) const { return biases_.at(layer); }

  Matrix forward(const ParamStore& params, const Matrix& input, MlpTape* tape = nullptr) const;
  // Accumulates parameter gradients of <upstream, output> into `grads` and
  // returns the gradient with respect to the input.
  Matrix backward(const ParamStore& params, const MlpTape& tape, const Matrix& upstream,
                  ParamStore& grads) const;

  // Kaiming-uniform weights (gain sqrt(2) for hidden layers), zero biases.
  void initialize(ParamStore& params, Rng& rng, double output_gain = 1.0) const;

 private:
  MlpSpec spec_;
  std::vector<std::size_t> weights_;
  std::vector<std::size_t> biases_;
};

Vector mlp_forward(const Mlp& mlp, const ParamStore& params, const Vector& input);

struct Gradients {
  ParamStore params;
  Vector input;
};

Gradients backprop_gradients(const Mlp& mlp, const ParamStore& params, const Vector& input,
                             const Vector& upstream);

struct AdamState {
  std::vector<double> m, v;
  std::uint64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n, double lr = 1e-3) : m(n, 0.0), v(n, 0.0), learning_rate(lr) {}
};

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

// Transformer-style sin/cos features of t (scaled by kTimeScale); the first
// dim/2 entries are sines, the rest cosines.
inline constexpr double kTimeScale = 1000.0;
Vector sinusoidal_time_embed(double t, int dim);

struct EmbeddingConfig {
  int dim = 64;
  std::vector<int> encoder_hidden = {64};
};

// Conditioning inputs for a batch of examples that share one target slot.
// `y` holds standardized continuous values or 1-based categories, read only
// where mask is set.
struct ConditionBatch {
  Matrix x;                    // d_x x B
  std::vector<int> a;          // B
  Matrix y;                    // k x B
  std::vector<std::uint8_t> mask;  // k x B, column-major
  std::size_t target = 0;

  std::size_t size() const { return a.size(); }
  std::uint8_t masked(std::size_t slot, std::size_t col) const {
    return mask[col * static_cast<std::size_t>(y.rows()) + slot];
  }
  static ConditionBatch single(const std::vector<double>& x, int a, const OutcomeVector& y_cond,
                               const Mask& m_c, std::size_t target);
  // Keeps columns [begin, end).
  ConditionBatch slice(std::size_t begin, std::size_t end) const;
};

struct EmbedTape {
  MlpTape encoder;
};

// Maps (x, a, masked outcomes, target slot) to a fixed-size vector made of
// k + 3 blocks of `dim`: covariate encoding, treatment embedding, one block
// per outcome slot and the target-slot embedding. Slots outside the mask
// read a learned absent token.
class ConditionEmbedder {
 public:
  ConditionEmbedder() = default;
  ConditionEmbedder(const OutcomeSchema& schema, std::size_t covariate_dim, EmbeddingConfig config,
                    ParamStore& store, const std::string& prefix);

  Eigen::Index output_dim() const;
  const EmbeddingConfig& config() const { return config_; }

  // Throws std::invalid_argument on mask/value inconsistency.
  void check(const ConditionBatch& batch) const;
  Matrix forward(const ParamStore& params, const ConditionBatch& batch, EmbedTape* tape = nullptr) const;
  void backward(const ParamStore& params, const ConditionBatch& batch, const EmbedTape& tape,
                const Matrix& upstream, ParamStore& grads) const;
  void initialize(ParamStore& params, Rng& rng) const;

 private:
  OutcomeSchema schema_;
  std::size_t covariate_dim_ = 0;
  EmbeddingConfig config_;
  Mlp encoder_;
  std::size_t treatment_ = 0;  // dim x 2
  std::size_t target_ = 0;     // dim x k
  struct SlotParams {
    std::size_t absent = 0;  // dim x 1
    std::size_t weight = 0;  // continuous: dim x 1; categorical: dim x L
    std::size_t bias = 0;    // continuous only
  };
  std::vector<SlotParams> slots_;
};

Vector embed_condition(const ConditionEmbedder& embedder, const ParamStore& params, const std::vector<double>& x,
                       int a, const OutcomeVector& y_cond, const Mask& m_c, std::size_t target);

// Checkpoint: <stem>.json (layout, hyperparameters, schema hash) plus
// <stem>.bin (raw little-endian float64 values).
void save_checkpoint(const std::filesystem::path& stem, const ParamStore& params,
                     const nlohmann::json& hyperparameters, const std::string& schema_hash);
// Loads values into `params`, whose layout must match the checkpoint.
// Returns the stored hyperparameters.
nlohmann::json load_checkpoint(const std::filesystem::path& stem, ParamStore& params,
                               const std::string& schema_hash);

}  // namespace dime::nn
