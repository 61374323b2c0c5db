#include "dime/orchestrator.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "dime/io.hpp"

namespace dime {

namespace {

constexpr std::size_t kSampleChunk = 4096;

nlohmann::json embedding_json(const nn::EmbeddingConfig& e) {
  return {{"dim", e.dim}, {"encoder_hidden", e.encoder_hidden}};
}

nn::EmbeddingConfig embedding_from(const nlohmann::json& j) {
  nn::EmbeddingConfig e;
  e.dim = j.at("dim").get<int>();
  e.encoder_hidden = j.at("encoder_hidden").get<std::vector<int>>();
  return e;
}

std::filesystem::path slot_stem(const std::filesystem::path& dir, std::size_t slot) {
  return dir / ("slot_" + std::to_string(slot + 1));
}

}  // namespace

void DimeConfig::validate() const {
  schedule.validate();
  if (score.embedding.dim < 2 || score.embedding.dim % 2 != 0)
    throw std::invalid_argument("embedding dimension must be even and >= 2");
  if (categorical.embedding.dim < 1) throw std::invalid_argument("categorical embedding dimension must be >= 1");
  if (epochs_per_stage < 0) throw std::invalid_argument("epochs per stage must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw std::invalid_argument("EMA decay must lie in [0, 1)");
  if (max_orderings < 1) throw std::invalid_argument("max orderings must be >= 1");
}

nlohmann::json config_to_json(const DimeConfig& c) {
  return {{"schedule",
           {{"beta_min", c.schedule.beta_min},
            {"beta_max", c.schedule.beta_max},
            {"T", c.schedule.T},
            {"t_min", c.schedule.t_min},
            {"num_steps", c.schedule.num_steps}}},
          {"score",
           {{"embedding", embedding_json(c.score.embedding)},
            {"hidden", c.score.hidden},
            {"weighting", c.score.weighting == diffusion::LossWeighting::kSigmaSquared ? "sigma2" : "g2"}}},
          {"categorical", {{"embedding", embedding_json(c.categorical.embedding)}, {"hidden", c.categorical.hidden}}},
          {"epochs_per_stage", c.epochs_per_stage},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"ema_decay", c.ema_decay},
          {"max_orderings", c.max_orderings},
          {"seed", c.seed}};
}

DimeConfig config_from_json(const nlohmann::json& j) {
  DimeConfig c;
  const auto& s = j.at("schedule");
  c.schedule.beta_min = s.at("beta_min").get<double>();
  c.schedule.beta_max = s.at("beta_max").get<double>();
  c.schedule.T = s.at("T").get<double>();
  c.schedule.t_min = s.at("t_min").get<double>();
  c.schedule.num_steps = s.at("num_steps").get<int>();
  const auto& sc = j.at("score");
  c.score.embedding = embedding_from(sc.at("embedding"));
  c.score.hidden = sc.at("hidden").get<std::vector<int>>();
  const auto w = sc.at("weighting").get<std::string>();
  if (w == "sigma2") {
    c.score.weighting = diffusion::LossWeighting::kSigmaSquared;
  } else if (w == "g2") {
    c.score.weighting = diffusion::LossWeighting::kGSquared;
  } else {
    throw std::invalid_argument("unknown loss weighting '" + w + "'");
  }
  const auto& cat = j.at("categorical");
  c.categorical.embedding = embedding_from(cat.at("embedding"));
  c.categorical.hidden = cat.at("hidden").get<std::vector<int>>();
  c.epochs_per_stage = j.at("epochs_per_stage").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.ema_decay = j.at("ema_decay").get<double>();
  c.max_orderings = j.at("max_orderings").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

Standardization Standardization::identity(const OutcomeSchema& schema, std::size_t covariate_dim) {
  Standardization s;
  s.x_mean.assign(covariate_dim, 0.0);
  s.x_scale.assign(covariate_dim, 1.0);
  s.y_mean.assign(schema.size(), 0.0);
  s.y_scale.assign(schema.size(), 1.0);
  return s;
}

Standardization Standardization::fit(const Dataset& train) {
  auto s = identity(train.schema, train.covariate_dim);
  auto finish = [](double sum, double sq, std::size_t n, double& mean, double& scale) {
    if (n == 0) return;
    mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
    scale = var > 1e-24 ? std::sqrt(var) : 1.0;
  };
  for (std::size_t j = 0; j < train.covariate_dim; ++j) {
    double sum = 0.0, sq = 0.0;
    for (const auto& r : train.records) {
      sum += r.x[j];
      sq += r.x[j] * r.x[j];
    }
    finish(sum, sq, train.size(), s.x_mean[j], s.x_scale[j]);
  }
  for (std::size_t i = 0; i < train.schema.size(); ++i) {
    if (train.schema[i].is_categorical()) continue;
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const auto& r : train.records) {
      if (std::isnan(r.y[i])) continue;
      sum += r.y[i];
      sq += r.y[i] * r.y[i];
      ++n;
    }
    finish(sum, sq, n, s.y_mean[i], s.y_scale[i]);
  }
  return s;
}

const char* method_name(Method method) { return method == Method::kDime ? "dime" : "baseline"; }

Method method_from_name(const std::string& name) {
  if (name == "dime") return Method::kDime;
  if (name == "baseline") return Method::kMarginalProduct;
  throw std::invalid_argument("unknown method '" + name + "'");
}

std::vector<double> SampleSet::slot(std::size_t i) const {
  std::vector<double> v(draws.size());
  for (std::size_t d = 0; d < draws.size(); ++d) v[d] = draws[d].at(i);
  return v;
}

DimeModel::DimeModel(OutcomeSchema schema, std::size_t covariate_dim, std::vector<Ordering> orderings,
                     std::vector<std::shared_ptr<const SlotGenerator>> generators, Standardization standardization,
                     Method method)
    : schema_(std::move(schema)),
      covariate_dim_(covariate_dim),
      orderings_(std::move(orderings)),
      generators_(std::move(generators)),
      standardization_(std::move(standardization)),
      method_(method) {
  const std::size_t k = schema_.size();
  if (generators_.size() != k) throw std::invalid_argument("need exactly one generator per outcome slot");
  for (const auto& g : generators_)
    if (!g) throw std::invalid_argument("null slot generator");
  if (orderings_.empty()) throw std::invalid_argument("model needs at least one ordering");
  for (const auto& o : orderings_)
    if (o.size() != k) throw std::invalid_argument("ordering length does not match the schema");
  if (standardization_.x_mean.size() != covariate_dim_ || standardization_.x_scale.size() != covariate_dim_ ||
      standardization_.y_mean.size() != k || standardization_.y_scale.size() != k)
    throw std::invalid_argument("standardization does not match the model dimensions");
}

nn::Matrix DimeModel::sample_columns(const nn::Matrix& x, const std::vector<int>& a, std::size_t ordering_id,
                                     Rng& rng) const {
  const std::size_t k = schema_.size();
  const std::size_t n = a.size();
  if (static_cast<std::size_t>(x.rows()) != covariate_dim_ || static_cast<std::size_t>(x.cols()) != n)
    throw std::invalid_argument("sample_columns: covariate matrix has the wrong shape");
  const Ordering& sigma = orderings_.at(ordering_id);
  const auto& st = standardization_;

  nn::Matrix out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
  for (std::size_t begin = 0; begin < n; begin += kSampleChunk) {
    const std::size_t end = std::min(n, begin + kSampleChunk);
    const auto b = static_cast<Eigen::Index>(end - begin);
    nn::ConditionBatch cond;
    cond.x = x.middleCols(static_cast<Eigen::Index>(begin), b);
    for (std::size_t j = 0; j < covariate_dim_; ++j) {
      const auto r = static_cast<Eigen::Index>(j);
      cond.x.row(r) = (cond.x.row(r).array() - st.x_mean[j]) / st.x_scale[j];
    }
    cond.a.assign(a.begin() + static_cast<std::ptrdiff_t>(begin), a.begin() + static_cast<std::ptrdiff_t>(end));
    cond.y = nn::Matrix::Zero(static_cast<Eigen::Index>(k), b);
    cond.mask.assign(k * (end - begin), 0);
    for (std::size_t p = 0; p < k; ++p) {
      const std::size_t slot = sigma[p];
      cond.target = slot;
      if (method_ == Method::kDime && p > 0) {
        const std::size_t prev = sigma[p - 1];
        for (std::size_t c = 0; c < end - begin; ++c) cond.mask[c * k + prev] = 1;
      }
      const auto draws = generators_[slot]->sample(cond, rng);
      if (draws.size() != end - begin) throw std::logic_error("slot generator returned the wrong number of draws");
      for (std::size_t c = 0; c < draws.size(); ++c) {
        if (!std::isfinite(draws[c])) throw NumericError("non-finite draw for slot " + std::to_string(slot + 1));
        cond.y(static_cast<Eigen::Index>(slot), static_cast<Eigen::Index>(c)) = draws[c];
      }
    }
    for (std::size_t i = 0; i < k; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      out.block(r, static_cast<Eigen::Index>(begin), 1, b) = cond.y.row(r).array() * st.y_scale[i] + st.y_mean[i];
    }
  }
  return out;
}

std::vector<int> stage_plan(std::size_t k, int epochs_per_stage) {
  std::vector<int> plan;
  for (std::size_t s = 0; s < k; ++s) plan.insert(plan.end(), static_cast<std::size_t>(epochs_per_stage), int(s));
  plan.insert(plan.end(), static_cast<std::size_t>(epochs_per_stage), kMixedStage);
  return plan;
}

std::unique_ptr<SlotModel> make_slot_model(const OutcomeSchema& schema, std::size_t covariate_dim, std::size_t slot,
                                           const DimeConfig& config) {
  if (schema[slot].is_categorical())
    return std::make_unique<categorical::CategoricalModel>(schema, covariate_dim, slot, config.categorical);
  return std::make_unique<diffusion::ScoreModel>(schema, covariate_dim, slot, config.score, config.schedule);
}

SlotTrainingData training_view(const Dataset& dataset, const Standardization& st) {
  const std::size_t n = dataset.size();
  const std::size_t k = dataset.schema.size();
  const std::size_t d = dataset.covariate_dim;
  SlotTrainingData data;
  data.x.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
  data.y.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
  data.a.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& rec = dataset.records[r];
    const auto col = static_cast<Eigen::Index>(r);
    for (std::size_t j = 0; j < d; ++j) data.x(static_cast<Eigen::Index>(j), col) = (rec.x[j] - st.x_mean[j]) / st.x_scale[j];
    data.a[r] = rec.a;
    for (std::size_t i = 0; i < k; ++i) data.y(static_cast<Eigen::Index>(i), col) = (rec.y[i] - st.y_mean[i]) / st.y_scale[i];
  }
  return data;
}

DimeModel train_model(const Dataset& train, const std::vector<Ordering>& orderings, const DimeConfig& config,
                      Method method) {
  config.validate();
  validate_dataset(train);
  if (train.size() == 0) throw DataError("training split is empty");
  const std::size_t k = train.schema.size();
  for (const auto& o : orderings)
    if (o.size() != k) throw std::invalid_argument("ordering length does not match the schema");

  const auto st = Standardization::fit(train);
  const auto data = training_view(train, st);
  std::vector<std::shared_ptr<const SlotGenerator>> bank;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<double>> traces;
  for (std::size_t i = 0; i < k; ++i) {
    auto model = make_slot_model(train.schema, train.covariate_dim, i, config);
    SlotTrainingPlan plan{i, orderings, stage_plan(k, config.epochs_per_stage), method == Method::kMarginalProduct};
    seeds.push_back(mix_seed(config.seed, 0x5107 + i));
    traces.push_back(train_slot(*model, data, plan, {config.batch_size, config.learning_rate, seeds.back(), config.ema_decay}));
    bank.push_back(std::shared_ptr<const SlotGenerator>(std::move(model)));
  }
  DimeModel out(train.schema, train.covariate_dim, orderings, std::move(bank), st, method);
  out.config = config;
  out.slot_seeds = std::move(seeds);
  out.loss_traces = std::move(traces);
  return out;
}

DimeModel hierarchical_train(const Dataset& train, const std::vector<Ordering>& orderings, const DimeConfig& config) {
  return train_model(train, orderings, config, Method::kDime);
}

DimeModel hierarchical_train(const Dataset& train, const DimeConfig& config) {
  return hierarchical_train(train, build_orderings(train.schema.size(), config.max_orderings, config.seed), config);
}

namespace {

SampleSet to_sample_set(const std::vector<double>& x, int a, const nn::Matrix& y,
                        std::vector<std::size_t> ordering_ids) {
  SampleSet s;
  s.x = x;
  s.a = a;
  s.draws.resize(static_cast<std::size_t>(y.cols()));
  for (Eigen::Index c = 0; c < y.cols(); ++c) s.draws[static_cast<std::size_t>(c)].assign(y.col(c).begin(), y.col(c).end());
  s.ordering_ids = std::move(ordering_ids);
  return s;
}

nn::Matrix replicate_context(const std::vector<double>& x, std::size_t n) {
  const nn::Vector xv = Eigen::Map<const nn::Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
  return xv.replicate(1, static_cast<Eigen::Index>(n));
}

}  // namespace

SampleSet autoregressive_sample(const DimeModel& model, const std::vector<double>& x, int a,
                                std::size_t ordering_id, std::size_t n, Rng& rng) {
  if (x.size() != model.covariate_dim()) throw std::invalid_argument("covariate vector has the wrong dimension");
  if (ordering_id >= model.orderings().size()) throw std::invalid_argument("ordering index out of range");
  const nn::Matrix y = model.sample_columns(replicate_context(x, n), std::vector<int>(n, a), ordering_id, rng);
  return to_sample_set(x, a, y, std::vector<std::size_t>(n, ordering_id));
}

BatchSamples aggregate_orderings_batch(const DimeModel& model, const nn::Matrix& x, const std::vector<int>& a,
                                       std::size_t n_total, Rng& rng) {
  const std::size_t units = a.size();
  const std::size_t sigma = model.orderings().size();
  const std::size_t per = (n_total + sigma - 1) / sigma;
  BatchSamples out;
  out.draws_per_unit = per * sigma;
  const std::size_t k = model.schema().size();
  out.y.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(units * out.draws_per_unit));
  out.ordering_ids.resize(units * out.draws_per_unit);
  if (per == 0 || units == 0) return out;

  // Column u*per + r holds draw r of unit u for the current ordering.
  nn::Matrix xr(x.rows(), static_cast<Eigen::Index>(units * per));
  std::vector<int> ar(units * per);
  for (std::size_t u = 0; u < units; ++u)
    for (std::size_t r = 0; r < per; ++r) {
      xr.col(static_cast<Eigen::Index>(u * per + r)) = x.col(static_cast<Eigen::Index>(u));
      ar[u * per + r] = a[u];
    }
  for (std::size_t o = 0; o < sigma; ++o) {
    const nn::Matrix y = model.sample_columns(xr, ar, o, rng);
    for (std::size_t u = 0; u < units; ++u)
      for (std::size_t r = 0; r < per; ++r) {
        const std::size_t dst = u * out.draws_per_unit + o * per + r;
        out.y.col(static_cast<Eigen::Index>(dst)) = y.col(static_cast<Eigen::Index>(u * per + r));
        out.ordering_ids[dst] = o;
      }
  }
  return out;
}

SampleSet aggregate_orderings(const DimeModel& model, const std::vector<double>& x, int a, std::size_t n_total,
                              Rng& rng) {
  if (x.size() != model.covariate_dim()) throw std::invalid_argument("covariate vector has the wrong dimension");
  const auto batch = aggregate_orderings_batch(model, replicate_context(x, 1), {a}, n_total, rng);
  return to_sample_set(x, a, batch.y, batch.ordering_ids);
}

double predict_capo(const DimeModel& model, const std::vector<double>& x, int a, std::size_t outcome,
                    std::size_t n, Rng& rng) {
  if (outcome >= model.schema().size()) throw std::invalid_argument("outcome index out of range");
  if (model.schema()[outcome].is_categorical())
    throw std::invalid_argument("CAPO is defined for continuous slots; use predict_category_pmf");
  if (n == 0) throw std::invalid_argument("predict_capo needs n >= 1");
  const auto s = aggregate_orderings(model, x, a, n, rng);
  double sum = 0.0;
  for (const auto& d : s.draws) sum += d[outcome];
  return sum / static_cast<double>(s.size());
}

double predict_cate(const DimeModel& model, const std::vector<double>& x, std::size_t outcome, std::size_t n,
                    Rng& rng) {
  const double c0 = predict_capo(model, x, 0, outcome, n, rng);
  const double c1 = predict_capo(model, x, 1, outcome, n, rng);
  return c1 - c0;
}

std::vector<double> predict_category_pmf(const DimeModel& model, const std::vector<double>& x, int a,
                                         std::size_t outcome, std::size_t n, Rng& rng) {
  if (outcome >= model.schema().size() || !model.schema()[outcome].is_categorical())
    throw std::invalid_argument("predict_category_pmf needs a categorical slot");
  if (n == 0) throw std::invalid_argument("predict_category_pmf needs n >= 1");
  const auto s = aggregate_orderings(model, x, a, n, rng);
  std::vector<double> pmf(static_cast<std::size_t>(model.schema()[outcome].num_categories), 0.0);
  for (const auto& d : s.draws) pmf.at(static_cast<std::size_t>(d[outcome]) - 1) += 1.0;
  for (auto& p : pmf) p /= static_cast<double>(s.size());
  return pmf;
}

void save_bundle(const std::filesystem::path& dir, const DimeModel& model) {
  const std::size_t k = model.schema().size();
  std::vector<const SlotModel*> slots;
  for (std::size_t i = 0; i < k; ++i) {
    const auto* m = dynamic_cast<const SlotModel*>(model.generators()[i].get());
    if (!m) throw std::invalid_argument("only trained slot models can be saved");
    slots.push_back(m);
  }
  std::filesystem::create_directories(dir);
  const auto& st = model.standardization();
  nlohmann::json orderings = nlohmann::json::array();
  for (const auto& o : model.orderings()) {
    std::vector<std::size_t> one_based;
    for (auto s : o.slots()) one_based.push_back(s + 1);
    orderings.push_back(one_based);
  }
  nlohmann::json manifest = {{"format", "dime-bundle-v1"},
                             {"method", method_name(model.method())},
                             {"schema", io::schema_to_json(model.schema())},
                             {"schema_hash", io::schema_hash(model.schema())},
                             {"covariate_dim", model.covariate_dim()},
                             {"orderings", orderings},
                             {"standardization",
                              {{"x_mean", st.x_mean}, {"x_scale", st.x_scale}, {"y_mean", st.y_mean},
                               {"y_scale", st.y_scale}}},
                             {"config", config_to_json(model.config)},
                             {"slot_seeds", model.slot_seeds}};
  io::write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
  const std::string hash = io::schema_hash(model.schema());
  for (std::size_t i = 0; i < k; ++i) {
    nn::save_checkpoint(slot_stem(dir, i), slots[i]->params(), slots[i]->hyperparameters(), hash);
    std::ostringstream trace;
    trace << "epoch,loss\n";
    if (i < model.loss_traces.size())
      for (std::size_t e = 0; e < model.loss_traces[i].size(); ++e)
        trace << e << ',' << io::format_double(model.loss_traces[i][e]) << '\n';
    io::write_text_file(dir / ("slot_" + std::to_string(i + 1) + "_loss.csv"), trace.str());
  }
}

DimeModel load_bundle(const std::filesystem::path& dir) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(io::read_text_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError((dir / "manifest.json").string() + ": " + e.what());
  }
  try {
    if (m.at("format") != "dime-bundle-v1") throw DataError(dir.string() + ": unknown bundle format");
    const auto schema = io::schema_from_json(m.at("schema"));
    const auto d = m.at("covariate_dim").get<std::size_t>();
    std::vector<Ordering> orderings;
    for (const auto& o : m.at("orderings")) {
      std::vector<std::size_t> sigma;
      for (const auto& v : o) {
        const auto s = v.get<std::size_t>();
        if (s < 1) throw DataError(dir.string() + ": orderings are 1-based");
        sigma.push_back(s - 1);
      }
      orderings.emplace_back(std::move(sigma));
    }
    Standardization st;
    const auto& sj = m.at("standardization");
    st.x_mean = sj.at("x_mean").get<std::vector<double>>();
    st.x_scale = sj.at("x_scale").get<std::vector<double>>();
    st.y_mean = sj.at("y_mean").get<std::vector<double>>();
    st.y_scale = sj.at("y_scale").get<std::vector<double>>();
    const auto config = config_from_json(m.at("config"));
    const std::string hash = io::schema_hash(schema);
    std::vector<std::shared_ptr<const SlotGenerator>> bank;
    std::vector<std::vector<double>> traces;
    for (std::size_t i = 0; i < schema.size(); ++i) {
      auto slot = make_slot_model(schema, d, i, config);
      nn::load_checkpoint(slot_stem(dir, i), slot->params(), hash);
      bank.push_back(std::shared_ptr<const SlotGenerator>(std::move(slot)));
    }
    DimeModel model(schema, d, std::move(orderings), std::move(bank), std::move(st),
                    method_from_name(m.at("method").get<std::string>()));
    model.config = config;
    model.slot_seeds = m.at("slot_seeds").get<std::vector<std::uint64_t>>();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(dir.string() + ": malformed bundle manifest: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(dir.string() + ": " + e.what());
  }
}

std::string sample_header(std::size_t k) {
  std::string h = "unit_id,a,ordering_id,draw_id";
  for (std::size_t i = 1; i <= k; ++i) h += ",y_" + std::to_string(i);
  return h;
}

void write_sample_rows(std::ostream& out, std::size_t unit_id, const SampleSet& samples) {
  for (std::size_t d = 0; d < samples.size(); ++d) {
    out << unit_id << ',' << samples.a << ',' << samples.ordering_ids[d] << ',' << d;
    for (double v : samples.draws[d]) out << ',' << io::format_double(v);
    out << '\n';
  }
}

}  // namespace dime
