#include "dime/pipeline.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "dime/baselines.hpp"
#include "dime/io.hpp"
#include "dime/metrics.hpp"
#include "dime/orchestrator.hpp"
#include "dime/synthgen.hpp"

namespace dime::cli {

namespace {

using UnitArm = std::pair<std::size_t, int>;

struct SampleRow {
  std::size_t unit = 0;
  int a = 0;
  std::size_t ordering = 0;
  std::size_t draw = 0;
  OutcomeVector y;
};

// Stages output next to its destination and moves it in place only after
// the command succeeded.
class Staged {
 public:
  Staged(fs::path dest, bool force, bool directory) : dest_(std::move(dest)), force_(force), directory_(directory) {
    if (fs::exists(dest_) && !force_) {
      const bool empty_dir = fs::is_directory(dest_) && fs::is_empty(dest_);
      if (!empty_dir) throw ConfigError(dest_.string() + " already exists (use --force to replace it)");
    }
    tmp_ = dest_;
    tmp_ += ".partial";
    fs::remove_all(tmp_);
    if (directory_) fs::create_directories(tmp_);
    else if (dest_.has_parent_path()) fs::create_directories(dest_.parent_path());
  }
  ~Staged() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(tmp_, ec);
    }
  }
  const fs::path& path() const { return tmp_; }
  void commit() {
    if (fs::exists(dest_)) fs::remove_all(dest_);
    fs::rename(tmp_, dest_);
    committed_ = true;
  }

 private:
  fs::path dest_, tmp_;
  bool force_ = false, directory_ = true, committed_ = false;
};

std::size_t to_size(const std::string& field, const std::string& context) {
  const double v = io::parse_double(field, context);
  if (!(v >= 0.0) || v != std::floor(v)) throw DataError(context + ": expected a non-negative integer, got '" + field + "'");
  return static_cast<std::size_t>(v);
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<SampleRow> read_samples(const fs::path& path, const OutcomeSchema& schema) {
  const auto lines = read_lines(path);
  const std::size_t k = schema.size();
  if (lines.empty() || lines[0] != sample_header(k))
    throw DataError(path.string() + ": expected header '" + sample_header(k) + "'");
  std::vector<SampleRow> rows;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    if (lines[l].empty()) continue;
    const std::string ctx = path.string() + ":" + std::to_string(l + 1);
    const auto f = io::split_csv_line(lines[l]);
    if (f.size() != 4 + k) throw DataError(ctx + ": expected " + std::to_string(4 + k) + " fields");
    SampleRow r;
    r.unit = to_size(f[0], ctx);
    const std::size_t a = to_size(f[1], ctx);
    if (a > 1) throw DataError(ctx + ": treatment must be 0 or 1");
    r.a = static_cast<int>(a);
    r.ordering = to_size(f[2], ctx);
    r.draw = to_size(f[3], ctx);
    for (std::size_t i = 0; i < k; ++i) r.y.push_back(io::parse_double(f[4 + i], ctx));
    if (auto v = validate_outcomes(r.y, schema)) throw DataError(ctx + ": " + v->message);
    rows.push_back(std::move(r));
  }
  return rows;
}

struct OracleEntry {
  OutcomeVector mean, draw;
};

std::string oracle_header(std::size_t k) {
  std::string h = "unit_id,a";
  for (std::size_t i = 1; i <= k; ++i) h += ",y" + std::to_string(i) + "_mean";
  for (std::size_t i = 1; i <= k; ++i) h += ",y" + std::to_string(i) + "_draw";
  return h;
}

std::map<UnitArm, OracleEntry> read_oracle(const fs::path& path, std::size_t k) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != oracle_header(k))
    throw DataError(path.string() + ": expected header '" + oracle_header(k) + "'");
  std::map<UnitArm, OracleEntry> out;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    if (lines[l].empty()) continue;
    const std::string ctx = path.string() + ":" + std::to_string(l + 1);
    const auto f = io::split_csv_line(lines[l]);
    if (f.size() != 2 + 2 * k) throw DataError(ctx + ": wrong field count");
    OracleEntry e;
    for (std::size_t i = 0; i < k; ++i) e.mean.push_back(io::parse_double(f[2 + i], ctx));
    for (std::size_t i = 0; i < k; ++i) e.draw.push_back(io::parse_double(f[2 + k + i], ctx));
    const std::size_t a = to_size(f[1], ctx);
    if (a > 1) throw DataError(ctx + ": treatment must be 0 or 1");
    out[{to_size(f[0], ctx), static_cast<int>(a)}] = std::move(e);
  }
  return out;
}

std::vector<std::size_t> ids_of(const nlohmann::json& split, const char* key) {
  try {
    return split.at(key).get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("split.json: ") + e.what());
  }
}

Dataset with_ids(Dataset d, std::vector<std::size_t> ids, const std::string& name) {
  if (ids.size() != d.size()) throw DataError(name + ": split.json lists " + std::to_string(ids.size()) + " ids for " + std::to_string(d.size()) + " rows");
  d.unit_ids = std::move(ids);
  return d;
}

nlohmann::json nullable(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> mean_of(const std::vector<std::optional<double>>& values) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& v : values)
    if (v) {
      acc += *v;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return acc / static_cast<double>(n);
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const SchemaError*>(&e)) return kExitData;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kExitData;
  if (dynamic_cast<const std::invalid_argument*>(&e)) return kExitConfig;
  return kExitData;
}

fs::path resolve_output(const fs::path& path) {
  if (path.is_absolute()) return path;
  if (const char* root = std::getenv("DIME_OUTPUT_ROOT"); root && *root) return fs::path(root) / path;
  return path;
}

DataBundle read_data_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError(dir.string() + " is not a dataset directory");
  DataBundle b;
  const auto schema = io::read_schema(dir / "schema.json");
  try {
    b.split = nlohmann::json::parse(io::read_text_file(dir / "split.json"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError((dir / "split.json").string() + ": " + e.what());
  }
  b.train = with_ids(io::read_dataset_csv(dir / "train.csv", schema), ids_of(b.split, "train"), "train.csv");
  b.test = with_ids(io::read_dataset_csv(dir / "test.csv", schema), ids_of(b.split, "test"), "test.csv");
  return b;
}

void cmd_generate(const RunConfig& config, const fs::path& out_dir, bool force, std::ostream& log) {
  const auto& g = config.dgp;
  synth::GeneratedData data;
  if (g.kind == DgpKind::kRho) {
    data = synth::generate_rho_dataset(synth::RhoDgpConfig::sample(g.d_x, g.rho, g.coef_seed, g.sigma_noise), g.n, g.seed);
  } else {
    data = synth::generate_bvn_dataset(synth::BivariateNormalDgpConfig::sample(g.d_x, g.coef_seed), g.n, g.seed);
  }
  auto [train, test] = synth::split_dataset(data.dataset, g.test_fraction, g.split_seed);

  Staged staged(out_dir, force, true);
  const auto& dir = staged.path();
  io::write_dataset_csv(dir / "train.csv", train);
  io::write_dataset_csv(dir / "test.csv", test);
  io::write_schema(dir / "schema.json", data.dataset.schema);
  nlohmann::json split = {{"train", train.unit_ids}, {"test", test.unit_ids}};
  io::write_text_file(dir / "split.json", split.dump() + "\n");

  const std::size_t k = data.dataset.schema.size();
  std::ostringstream oracle;
  oracle << oracle_header(k) << '\n';
  for (const auto& row : data.oracle) {
    oracle << row.unit_id << ',' << row.a;
    for (double v : row.mean) oracle << ',' << io::format_double(v);
    for (double v : row.draw) oracle << ',' << io::format_double(v);
    oracle << '\n';
  }
  io::write_text_file(dir / "oracle.csv", oracle.str());
  staged.commit();
  for (const char* f : {"train.csv", "test.csv", "schema.json", "split.json", "oracle.csv"})
    log << f << ' ' << io::file_digest(out_dir / f) << '\n';
}

void cmd_train(const RunConfig& config, const fs::path& data_dir, const fs::path& out_dir, bool baseline, bool force,
               std::ostream& log) {
  const auto data = read_data_dir(data_dir);
  Staged staged(out_dir, force, true);
  const DimeModel model =
      baseline ? train_marginal_product(data.train, config.model) : hierarchical_train(data.train, config.model);
  save_bundle(staged.path(), model);
  staged.commit();
  log << "trained " << method_name(model.method()) << " on " << data.train.size() << " units, "
      << model.orderings().size() << " ordering(s)\n";
  for (std::size_t i = 0; i < model.loss_traces.size(); ++i)
    if (!model.loss_traces[i].empty())
      log << "slot " << i + 1 << " final loss " << io::format_double(model.loss_traces[i].back()) << '\n';
}

void cmd_sample(const fs::path& model_dir, const fs::path& data_dir, const SampleOptions& options,
                const fs::path& out_csv, std::ostream& log) {
  std::vector<int> arms;
  if (options.arm == "0") {
    arms = {0};
  } else if (options.arm == "1") {
    arms = {1};
  } else if (options.arm == "both") {
    arms = {0, 1};
  } else {
    throw ConfigError("--arm must be 0, 1 or both");
  }
  const auto model = load_bundle(model_dir);
  const auto data = read_data_dir(data_dir);
  if (!(model.schema() == data.train.schema))
    throw DataError("bundle schema does not match the dataset schema");
  if (model.covariate_dim() != data.train.covariate_dim)
    throw DataError("bundle covariate dimension does not match the dataset");

  // First max_units units of each split, train first.
  std::vector<const ObservationalRecord*> recs;
  std::vector<std::size_t> ids;
  for (const Dataset* d : {&data.train, &data.test})
    for (std::size_t r = 0; r < std::min(options.max_units, d->size()); ++r) {
      recs.push_back(&d->records[r]);
      ids.push_back(d->unit_id(r));
    }
  nn::Matrix x(static_cast<Eigen::Index>(model.covariate_dim()), static_cast<Eigen::Index>(recs.size()));
  for (std::size_t u = 0; u < recs.size(); ++u)
    for (std::size_t j = 0; j < model.covariate_dim(); ++j)
      x(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(u)) = recs[u]->x[j];

  Staged staged(out_csv, true, false);
  std::ofstream out(staged.path());
  if (!out) throw DataError("cannot write " + out_csv.string());
  out << sample_header(model.schema().size()) << '\n';
  std::size_t rows = 0;
  for (int a : arms) {
    Rng rng(mix_seed(options.seed, static_cast<std::uint64_t>(a)));
    const auto batch = aggregate_orderings_batch(model, x, std::vector<int>(recs.size(), a), options.n_per_unit, rng);
    for (std::size_t u = 0; u < recs.size(); ++u) {
      SampleSet s;
      s.a = a;
      for (std::size_t d = 0; d < batch.draws_per_unit; ++d) {
        const auto col = static_cast<Eigen::Index>(u * batch.draws_per_unit + d);
        s.draws.emplace_back(batch.y.col(col).begin(), batch.y.col(col).end());
        s.ordering_ids.push_back(batch.ordering_ids[static_cast<std::size_t>(col)]);
      }
      write_sample_rows(out, ids[u], s);
      rows += s.size();
    }
  }
  out.close();
  if (!out) throw DataError("failed writing " + out_csv.string());
  nlohmann::json meta = {{"method", method_name(model.method())},
                         {"schema_hash", io::schema_hash(model.schema())},
                         {"model_seed", model.config.seed},
                         {"sample_seed", options.seed},
                         {"n_per_unit", options.n_per_unit},
                         {"arm", options.arm},
                         {"max_units", options.max_units}};
  fs::path meta_path = out_csv;
  meta_path += ".meta.json";
  io::write_text_file(meta_path, meta.dump(2) + "\n");
  staged.commit();
  log << "wrote " << rows << " draws for " << recs.size() << " units to " << out_csv.string() << '\n';
}

nlohmann::json evaluate_report(const fs::path& samples_csv, const fs::path& data_dir, const EvaluateOptions& options) {
  const auto data = read_data_dir(data_dir);
  const auto& schema = data.train.schema;
  const std::size_t k = schema.size();
  const std::set<std::size_t> train_ids(data.train.unit_ids.begin(), data.train.unit_ids.end());

  // Model draws and reference per (unit, arm).
  std::map<UnitArm, std::vector<OutcomeVector>> model;
  for (auto& r : read_samples(samples_csv, schema)) model[{r.unit, r.a}].push_back(std::move(r.y));
  std::map<UnitArm, OutcomeVector> ref_draw;
  std::map<UnitArm, OutcomeVector> ref_mean;
  if (options.reference == "oracle") {
    for (auto& [key, e] : read_oracle(data_dir / "oracle.csv", k)) {
      ref_draw[key] = e.draw;
      ref_mean[key] = e.mean;
    }
  } else {
    std::map<UnitArm, std::vector<OutcomeVector>> ref;
    for (auto& r : read_samples(options.reference, schema)) ref[{r.unit, r.a}].push_back(std::move(r.y));
    for (auto& [key, draws] : ref) {
      ref_draw[key] = draws.front();
      OutcomeVector m(k, 0.0);
      for (const auto& d : draws)
        for (std::size_t i = 0; i < k; ++i) m[i] += d[i] / static_cast<double>(draws.size());
      ref_mean[key] = m;
    }
  }

  std::string method = options.label;
  nlohmann::json meta;
  fs::path meta_path = samples_csv;
  meta_path += ".meta.json";
  if (fs::exists(meta_path)) {
    try {
      meta = nlohmann::json::parse(io::read_text_file(meta_path));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(meta_path.string() + ": " + e.what());
    }
    if (meta.contains("schema_hash") && meta["schema_hash"] != io::schema_hash(schema))
      throw DataError("samples were produced for a different schema");
  }
  if (method.empty()) method = meta.value("method", std::string("unknown"));

  bool subsampled = false;
  std::set<std::size_t> evaluated;
  nlohmann::json arms = nlohmann::json::object();
  std::map<std::string, std::vector<std::optional<double>>> w1_by_split, kl_by_split;
  for (int a : {0, 1}) {
    nlohmann::json arm;
    for (const bool in : {true, false}) {
      metrics::Samples p, q;
      for (const auto& [key, draws] : model) {
        if (key.second != a || (train_ids.count(key.first) > 0) != in) continue;
        const auto it = ref_draw.find(key);
        if (it == ref_draw.end() || draws.empty()) continue;
        p.push_back(draws.front());
        q.push_back(it->second);
        evaluated.insert(key.first);
      }
      const std::string split = in ? "in" : "out";
      std::optional<double> w1, kl;
      if (!p.empty()) {
        const auto w = metrics::empirical_w1(p, q, schema, mix_seed(options.seed, 2 * a + in), options.max_assignment);
        w1 = w.value;
        subsampled = subsampled || w.subsampled;
      }
      if (p.size() >= 30) {
        const auto q_hat = metrics::kde_fit(p, schema);
        const auto p_hat = metrics::kde_fit(q, schema);
        kl = metrics::empirical_kl(q, p_hat, q_hat);
      }
      arm["w1_" + split] = nullable(w1);
      arm["kl_" + split] = nullable(kl);
      arm["n_" + split] = p.size();
      w1_by_split[split].push_back(w1);
      kl_by_split[split].push_back(kl);
    }
    arms["a" + std::to_string(a)] = arm;
  }

  // PEHE over units with both arms in samples and reference.
  std::map<bool, std::pair<std::vector<std::vector<double>>, std::vector<std::vector<double>>>> cate;
  for (const auto& [key, draws0] : model) {
    if (key.second != 0) continue;
    const UnitArm key1{key.first, 1};
    const auto m1 = model.find(key1);
    if (m1 == model.end() || !ref_mean.count(key) || !ref_mean.count(key1)) continue;
    auto& [pred, truth] = cate[train_ids.count(key.first) > 0];
    pred.resize(k);
    truth.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      double s0 = 0.0, s1 = 0.0;
      for (const auto& d : draws0) s0 += d[i];
      for (const auto& d : m1->second) s1 += d[i];
      pred[i].push_back(s1 / static_cast<double>(m1->second.size()) - s0 / static_cast<double>(draws0.size()));
      truth[i].push_back(ref_mean.at(key1)[i] - ref_mean.at(key)[i]);
    }
  }
  auto pehe_for = [&](bool in) -> std::optional<double> {
    const auto it = cate.find(in);
    if (it == cate.end()) return std::nullopt;
    return metrics::pehe_mean(it->second.first, it->second.second);
  };

  nlohmann::json report = {{"method", method},
                           {"schema_hash", io::schema_hash(schema)},
                           {"w1_in", nullable(mean_of(w1_by_split["in"]))},
                           {"w1_out", nullable(mean_of(w1_by_split["out"]))},
                           {"kl_in", nullable(mean_of(kl_by_split["in"]))},
                           {"kl_out", nullable(mean_of(kl_by_split["out"]))},
                           {"pehe", nullable(pehe_for(false))},
                           {"pehe_in", nullable(pehe_for(true))},
                           {"arms", arms},
                           {"n", evaluated.size()},
                           {"seed", options.seed},
                           {"subsampled", subsampled},
                           {"reference", options.reference == "oracle" ? "oracle" : "samples"}};
  if (meta.contains("model_seed")) report["model_seed"] = meta["model_seed"];
  if (meta.contains("sample_seed")) report["sample_seed"] = meta["sample_seed"];
  return report;
}

void cmd_evaluate(const fs::path& samples_csv, const fs::path& data_dir, const EvaluateOptions& options,
                  const fs::path& out_json, std::ostream& log) {
  const auto report = evaluate_report(samples_csv, data_dir, options);
  Staged staged(out_json, true, false);
  io::write_text_file(staged.path(), report.dump(2) + "\n");
  staged.commit();
  log << "wrote " << out_json.string() << '\n';
}

std::string report_table(const std::vector<nlohmann::json>& reports) {
  if (reports.empty()) throw DataError("report needs at least one metrics file");
  const std::string hash = reports.front().value("schema_hash", std::string());
  struct Acc {
    std::vector<double> w1, kl, pehe;
  };
  std::map<std::tuple<std::string, std::string, std::string>, Acc> rows;
  for (const auto& r : reports) {
    if (r.value("schema_hash", std::string()) != hash) throw DataError("reports come from incompatible schemas");
    if (!r.contains("arms") || !r.contains("method")) throw DataError("not a metrics report");
    const std::string method = r.at("method").get<std::string>();
    for (const auto& [arm, m] : r.at("arms").items()) {
      for (const std::string split : {"in", "out"}) {
        if (m.value("n_" + split, std::size_t{0}) == 0) continue;
        auto& acc = rows[{method, arm, split}];
        auto push = [](std::vector<double>& v, const nlohmann::json& j) {
          v.push_back(j.is_number() ? j.get<double>() : std::nan(""));
        };
        push(acc.w1, m.at("w1_" + split));
        push(acc.kl, m.at("kl_" + split));
        push(acc.pehe, r.at(split == "in" ? "pehe_in" : "pehe"));
      }
    }
  }
  auto stats = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    return io::format_double(mean) + "," + io::format_double(sd);
  };
  std::ostringstream out;
  out << "method,arm,split,n_reports,w1_mean,w1_std,kl_mean,kl_std,pehe_mean,pehe_std\n";
  for (const auto& [key, acc] : rows)
    out << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ',' << acc.w1.size() << ','
        << stats(acc.w1) << ',' << stats(acc.kl) << ',' << stats(acc.pehe) << '\n';
  return out.str();
}

void cmd_report(const std::vector<fs::path>& reports, const std::optional<fs::path>& out_csv, std::ostream& out) {
  std::vector<nlohmann::json> parsed;
  for (const auto& p : reports) {
    try {
      parsed.push_back(nlohmann::json::parse(io::read_text_file(p)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(p.string() + ": " + e.what());
    }
  }
  const std::string table = report_table(parsed);
  if (out_csv) {
    Staged staged(*out_csv, true, false);
    io::write_text_file(staged.path(), table);
    staged.commit();
  } else {
    out << table;
  }
}

}  // namespace dime::cli
