#include "dime/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "dime/io.hpp"

namespace dime::nn {

std::size_t ParamStore::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("tensor '" + name + "' needs positive shape");
  for (const auto& s : manifest_)
    if (s.name == name) throw std::invalid_argument("duplicate tensor name '" + name + "'");
  TensorSlot slot{std::move(name), values_.size(), rows, cols};
  values_.resize(values_.size() + slot.size(), 0.0);
  manifest_.push_back(std::move(slot));
  return manifest_.size() - 1;
}

MatrixMap ParamStore::tensor(std::size_t slot) {
  const auto& s = manifest_.at(slot);
  return MatrixMap(values_.data() + s.offset, s.rows, s.cols);
}

ConstMatrixMap ParamStore::tensor(std::size_t slot) const {
  const auto& s = manifest_.at(slot);
  return ConstMatrixMap(values_.data() + s.offset, s.rows, s.cols);
}

std::size_t ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < manifest_.size(); ++i)
    if (manifest_[i].name == name) return i;
  throw std::out_of_range("no tensor named '" + std::string(name) + "'");
}

ParamStore ParamStore::zeros_like() const {
  ParamStore z;
  z.manifest_ = manifest_;
  z.values_.assign(values_.size(), 0.0);
  return z;
}

void ParamStore::set_zero() { std::fill(values_.begin(), values_.end(), 0.0); }

double silu(double z) { return z / (1.0 + std::exp(-z)); }

double silu_grad(double z) {
  const double s = 1.0 / (1.0 + std::exp(-z));
  return s * (1.0 + z * (1.0 - s));
}

void MlpSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) throw std::invalid_argument("MLP dimensions must be >= 1");
  for (int h : hidden_dims)
    if (h < 1) throw std::invalid_argument("MLP hidden dimensions must be >= 1");
}

Mlp::Mlp(MlpSpec spec, ParamStore& store, const std::string& prefix) : spec_(std::move(spec)) {
  spec_.validate();
  int fan_in = spec_.input_dim;
  std::vector<int> outs = spec_.hidden_dims;
  outs.push_back(spec_.output_dim);
  for (std::size_t l = 0; l < outs.size(); ++l) {
    const std::string base = prefix + ".layer" + std::to_string(l);
    weights_.push_back(store.add(base + ".weight", outs[l], fan_in));
    biases_.push_back(store.add(base + ".bias", outs[l], 1));
    fan_in = outs[l];
  }
}

Matrix Mlp::forward(const ParamStore& params, const Matrix& input, MlpTape* tape) const {
  if (input.rows() != spec_.input_dim)
    throw std::invalid_argument("MLP input has " + std::to_string(input.rows()) + " rows, expected " +
                                std::to_string(spec_.input_dim));
  if (tape) {
    tape->inputs.clear();
    tape->pre.clear();
  }
  Matrix h = input;
  const std::size_t last = weights_.size() - 1;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix z = params.tensor(weights_[l]) * h;
    z.colwise() += params.tensor(biases_[l]).col(0);
    if (tape) tape->inputs.push_back(std::move(h));
    if (l == last) return z;
    h = z.unaryExpr([](double v) { return silu(v); });
    if (tape) tape->pre.push_back(std::move(z));
  }
  return h;  // unreachable
}

Matrix Mlp::backward(const ParamStore& params, const MlpTape& tape, const Matrix& upstream,
                     ParamStore& grads) const {
  if (upstream.rows() != spec_.output_dim) throw std::invalid_argument("MLP upstream gradient has wrong shape");
  if (tape.inputs.size() != weights_.size()) throw std::invalid_argument("MLP tape does not match network");
  Matrix g = upstream;
  for (std::size_t l = weights_.size(); l-- > 0;) {
    grads.tensor(weights_[l]).noalias() += g * tape.inputs[l].transpose();
    grads.tensor(biases_[l]).col(0) += g.rowwise().sum();
    Matrix gh = params.tensor(weights_[l]).transpose() * g;
    if (l == 0) return gh;
    g = gh.cwiseProduct(tape.pre[l - 1].unaryExpr([](double v) { return silu_grad(v); }));
  }
  return g;  // unreachable
}

void Mlp::initialize(ParamStore& params, Rng& rng, double output_gain) const {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    auto w = params.tensor(weights_[l]);
    const double gain = l + 1 == weights_.size() ? output_gain : std::sqrt(2.0);
    const double bound = gain * std::sqrt(3.0 / static_cast<double>(w.cols()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
    params.tensor(biases_[l]).setZero();
  }
}

Vector mlp_forward(const Mlp& mlp, const ParamStore& params, const Vector& input) {
  return mlp.forward(params, input).col(0);
}

Gradients backprop_gradients(const Mlp& mlp, const ParamStore& params, const Vector& input,
                             const Vector& upstream) {
  MlpTape tape;
  mlp.forward(params, input, &tape);
  Gradients g{params.zeros_like(), {}};
  g.input = mlp.backward(params, tape, upstream, g.params).col(0);
  return g;
}

void adam_step(AdamState& s, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || s.m.size() != params.size() || s.v.size() != params.size())
    throw std::invalid_argument("adam_step: size mismatch");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
    const double mhat = s.m[i] / c1;
    const double vhat = s.v[i] / c2;
    params[i] -= s.learning_rate * mhat / (std::sqrt(vhat) + s.epsilon);
  }
}

Vector sinusoidal_time_embed(double t, int dim) {
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("time embedding dimension must be even and >= 2");
  const int half = dim / 2;
  Vector e(dim);
  const double scaled = kTimeScale * t;
  for (int j = 0; j < half; ++j) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(j) / static_cast<double>(half));
    e(j) = std::sin(scaled * freq);
    e(half + j) = std::cos(scaled * freq);
  }
  return e;
}

ConditionBatch ConditionBatch::single(const std::vector<double>& x, int a, const OutcomeVector& y_cond,
                                      const Mask& m_c, std::size_t target) {
  if (m_c.size() != y_cond.size()) throw std::invalid_argument("mask and outcome vector lengths differ");
  ConditionBatch b;
  b.x = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
  b.a = {a};
  b.y = Eigen::Map<const Vector>(y_cond.data(), static_cast<Eigen::Index>(y_cond.size()));
  b.mask = m_c;
  b.target = target;
  return b;
}

ConditionBatch ConditionBatch::slice(std::size_t begin, std::size_t end) const {
  const auto b = static_cast<Eigen::Index>(begin);
  const auto n = static_cast<Eigen::Index>(end - begin);
  const auto k = static_cast<std::size_t>(y.rows());
  ConditionBatch s;
  s.x = x.middleCols(b, n);
  s.a.assign(a.begin() + b, a.begin() + b + n);
  s.y = y.middleCols(b, n);
  s.mask.assign(mask.begin() + static_cast<std::ptrdiff_t>(begin * k),
                mask.begin() + static_cast<std::ptrdiff_t>(end * k));
  s.target = target;
  return s;
}

ConditionEmbedder::ConditionEmbedder(const OutcomeSchema& schema, std::size_t covariate_dim,
                                     EmbeddingConfig config, ParamStore& store, const std::string& prefix)
    : schema_(schema), covariate_dim_(covariate_dim), config_(std::move(config)) {
  if (config_.dim < 1) throw std::invalid_argument("embedding dimension must be >= 1");
  if (covariate_dim_ < 1) throw std::invalid_argument("covariate dimension must be >= 1");
  const int e = config_.dim;
  encoder_ = Mlp({static_cast<int>(covariate_dim_), config_.encoder_hidden, e}, store, prefix + ".x_encoder");
  treatment_ = store.add(prefix + ".treatment", e, 2);
  for (std::size_t i = 0; i < schema_.size(); ++i) {
    const std::string base = prefix + ".slot" + std::to_string(i);
    SlotParams sp;
    sp.absent = store.add(base + ".absent", e, 1);
    if (schema_[i].is_categorical()) {
      sp.weight = store.add(base + ".categories", e, schema_[i].num_categories);
    } else {
      sp.weight = store.add(base + ".value_weight", e, 1);
      sp.bias = store.add(base + ".value_bias", e, 1);
    }
    slots_.push_back(sp);
  }
  target_ = store.add(prefix + ".target", e, static_cast<Eigen::Index>(schema_.size()));
}

Eigen::Index ConditionEmbedder::output_dim() const {
  return static_cast<Eigen::Index>(schema_.size() + 3) * config_.dim;
}

void ConditionEmbedder::check(const ConditionBatch& batch) const {
  const std::size_t k = schema_.size();
  const std::size_t n = batch.size();
  if (static_cast<std::size_t>(batch.x.rows()) != covariate_dim_ || static_cast<std::size_t>(batch.x.cols()) != n)
    throw std::invalid_argument("condition covariates have wrong shape");
  if (static_cast<std::size_t>(batch.y.rows()) != k || static_cast<std::size_t>(batch.y.cols()) != n ||
      batch.mask.size() != k * n)
    throw std::invalid_argument("condition outcomes or mask have wrong shape");
  if (batch.target >= k) throw std::invalid_argument("target slot out of range");
  for (std::size_t c = 0; c < n; ++c) {
    if (batch.a[c] != 0 && batch.a[c] != 1) throw std::invalid_argument("treatment must be 0 or 1");
    if (batch.masked(batch.target, c)) throw std::invalid_argument("target slot cannot condition on itself");
    for (std::size_t i = 0; i < k; ++i) {
      if (!batch.masked(i, c)) continue;
      const double v = batch.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
      if (!std::isfinite(v)) throw std::invalid_argument("masked-in conditioning value is missing");
      if (schema_[i].is_categorical() && (v != std::floor(v) || v < 1 || v > schema_[i].num_categories))
        throw std::invalid_argument("masked-in conditioning category out of range");
    }
  }
}

Matrix ConditionEmbedder::forward(const ParamStore& params, const ConditionBatch& batch, EmbedTape* tape) const {
  check(batch);
  const Eigen::Index e = config_.dim;
  const auto n = static_cast<Eigen::Index>(batch.size());
  const std::size_t k = schema_.size();
  Matrix out(output_dim(), n);
  out.topRows(e) = encoder_.forward(params, batch.x, tape ? &tape->encoder : nullptr);
  const auto treat = params.tensor(treatment_);
  const auto target_col = params.tensor(target_).col(static_cast<Eigen::Index>(batch.target));
  for (Eigen::Index c = 0; c < n; ++c) {
    out.block(e, c, e, 1) = treat.col(batch.a[static_cast<std::size_t>(c)]);
    for (std::size_t i = 0; i < k; ++i) {
      auto block = out.block(static_cast<Eigen::Index>(i + 2) * e, c, e, 1);
      const auto& sp = slots_[i];
      if (!batch.masked(i, static_cast<std::size_t>(c))) {
        block = params.tensor(sp.absent);
      } else if (schema_[i].is_categorical()) {
        block = params.tensor(sp.weight).col(static_cast<Eigen::Index>(batch.y(static_cast<Eigen::Index>(i), c)) - 1);
      } else {
        block = params.tensor(sp.weight) * batch.y(static_cast<Eigen::Index>(i), c) + params.tensor(sp.bias);
      }
    }
    out.block(static_cast<Eigen::Index>(k + 2) * e, c, e, 1) = target_col;
  }
  return out;
}

void ConditionEmbedder::backward(const ParamStore& params, const ConditionBatch& batch, const EmbedTape& tape,
                                 const Matrix& upstream, ParamStore& grads) const {
  const Eigen::Index e = config_.dim;
  const auto n = static_cast<Eigen::Index>(batch.size());
  const std::size_t k = schema_.size();
  if (upstream.rows() != output_dim() || upstream.cols() != n)
    throw std::invalid_argument("embedder upstream gradient has wrong shape");
  encoder_.backward(params, tape.encoder, upstream.topRows(e), grads);
  auto treat = grads.tensor(treatment_);
  for (Eigen::Index c = 0; c < n; ++c) {
    treat.col(batch.a[static_cast<std::size_t>(c)]) += upstream.block(e, c, e, 1);
    for (std::size_t i = 0; i < k; ++i) {
      const auto g = upstream.block(static_cast<Eigen::Index>(i + 2) * e, c, e, 1);
      const auto& sp = slots_[i];
      if (!batch.masked(i, static_cast<std::size_t>(c))) {
        grads.tensor(sp.absent) += g;
      } else if (schema_[i].is_categorical()) {
        grads.tensor(sp.weight).col(static_cast<Eigen::Index>(batch.y(static_cast<Eigen::Index>(i), c)) - 1) += g;
      } else {
        grads.tensor(sp.weight) += g * batch.y(static_cast<Eigen::Index>(i), c);
        grads.tensor(sp.bias) += g;
      }
    }
  }
  grads.tensor(target_).col(static_cast<Eigen::Index>(batch.target)) +=
      upstream.bottomRows(e).rowwise().sum();
}

void ConditionEmbedder::initialize(ParamStore& params, Rng& rng) const {
  encoder_.initialize(params, rng);
  std::normal_distribution<double> n01;
  auto fill = [&](std::size_t slot) {
    auto t = params.tensor(slot);
    for (Eigen::Index j = 0; j < t.cols(); ++j)
      for (Eigen::Index i = 0; i < t.rows(); ++i) t(i, j) = n01(rng);
  };
  fill(treatment_);
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    fill(slots_[i].absent);
    fill(slots_[i].weight);
    if (!schema_[i].is_categorical()) params.tensor(slots_[i].bias).setZero();
  }
  fill(target_);
}

Vector embed_condition(const ConditionEmbedder& embedder, const ParamStore& params, const std::vector<double>& x,
                       int a, const OutcomeVector& y_cond, const Mask& m_c, std::size_t target) {
  return embedder.forward(params, ConditionBatch::single(x, a, y_cond, m_c, target)).col(0);
}

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* ext) {
  auto p = stem;
  p += ext;
  return p;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& stem, const ParamStore& params,
                     const nlohmann::json& hyperparameters, const std::string& schema_hash) {
  static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");
  nlohmann::json m;
  m["format"] = "dime-checkpoint-v1";
  m["dtype"] = "float64-le";
  m["schema_hash"] = schema_hash;
  m["num_values"] = params.size();
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& s : params.manifest())
    tensors.push_back({{"name", s.name}, {"offset", s.offset}, {"rows", s.rows}, {"cols", s.cols}});
  m["tensors"] = std::move(tensors);
  m["hyperparameters"] = hyperparameters;
  io::write_text_file(with_suffix(stem, ".json"), m.dump(2) + "\n");

  std::ofstream blob(with_suffix(stem, ".bin"), std::ios::binary);
  if (!blob) throw DataError("cannot write checkpoint blob for " + stem.string());
  blob.write(reinterpret_cast<const char*>(params.values().data()),
             static_cast<std::streamsize>(params.size() * sizeof(double)));
}

nlohmann::json load_checkpoint(const std::filesystem::path& stem, ParamStore& params,
                               const std::string& schema_hash) {
  const auto m = nlohmann::json::parse(io::read_text_file(with_suffix(stem, ".json")));
  if (m.value("format", "") != "dime-checkpoint-v1") throw DataError(stem.string() + ": unknown checkpoint format");
  if (m.value("schema_hash", "") != schema_hash) throw DataError(stem.string() + ": schema hash mismatch");
  const auto& tensors = m.at("tensors");
  if (tensors.size() != params.manifest().size()) throw DataError(stem.string() + ": tensor count mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = tensors[i];
    const auto& s = params.manifest()[i];
    if (t.at("name") != s.name || t.at("offset").get<std::size_t>() != s.offset ||
        t.at("rows").get<Eigen::Index>() != s.rows || t.at("cols").get<Eigen::Index>() != s.cols)
      throw DataError(stem.string() + ": layout mismatch at tensor '" + s.name + "'");
  }
  const std::string bytes = io::read_text_file(with_suffix(stem, ".bin"));
  if (bytes.size() != params.size() * sizeof(double)) throw DataError(stem.string() + ": blob size mismatch");
  std::memcpy(params.values().data(), bytes.data(), bytes.size());
  return m.at("hyperparameters");
}

}  // namespace dime::nn
