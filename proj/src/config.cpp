#include "dime/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>
#include <vector>

#include "dime/io.hpp"

namespace dime::cli {

namespace {

struct Key {
  const char* section;
  const char* name;
  const char* fallback;
  const char* help;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  const double d = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument("trailing characters");
  return d;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw std::invalid_argument("expected an unsigned integer");
  return out;
}

int to_int(const std::string& v) {
  int out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw std::invalid_argument("expected an integer");
  return out;
}

std::vector<int> to_widths(const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const int w = to_int(trim(part));
    if (w < 1) throw std::invalid_argument("widths must be >= 1");
    out.push_back(w);
  }
  return out;
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"dgp", "kind", "rho", "rho (correlated nonlinear) or bvn (bivariate normal)",
       [](RunConfig& c, const std::string& v) {
         if (v == "rho") {
           c.dgp.kind = DgpKind::kRho;
         } else if (v == "bvn") {
           c.dgp.kind = DgpKind::kBivariateNormal;
         } else {
           throw std::invalid_argument("expected rho or bvn");
         }
       }},
      {"dgp", "d_x", "10", "covariate dimension",
       [](RunConfig& c, const std::string& v) { c.dgp.d_x = to_u64(v); }},
      {"dgp", "rho", "0.5", "correlation control of the rho process, in [0, 1]",
       [](RunConfig& c, const std::string& v) { c.dgp.rho = to_double(v); }},
      {"dgp", "sigma_noise", "1.0", "noise scale of the rho process",
       [](RunConfig& c, const std::string& v) { c.dgp.sigma_noise = to_double(v); }},
      {"dgp", "coef_seed", "0", "seed for the generator coefficients",
       [](RunConfig& c, const std::string& v) { c.dgp.coef_seed = to_u64(v); }},
      {"dgp", "n", "100000", "number of units",
       [](RunConfig& c, const std::string& v) { c.dgp.n = to_u64(v); }},
      {"dgp", "test_fraction", "0.2", "held-out fraction",
       [](RunConfig& c, const std::string& v) { c.dgp.test_fraction = to_double(v); }},
      {"dgp", "seed", "1", "seed for covariates, treatments and noise",
       [](RunConfig& c, const std::string& v) { c.dgp.seed = to_u64(v); }},
      {"dgp", "split_seed", "2", "seed for the train/test split",
       [](RunConfig& c, const std::string& v) { c.dgp.split_seed = to_u64(v); }},

      {"model", "beta_min", "0.1", "noise schedule start",
       [](RunConfig& c, const std::string& v) { c.model.schedule.beta_min = to_double(v); }},
      {"model", "beta_max", "20", "noise schedule end",
       [](RunConfig& c, const std::string& v) { c.model.schedule.beta_max = to_double(v); }},
      {"model", "T", "1.0", "diffusion horizon",
       [](RunConfig& c, const std::string& v) { c.model.schedule.T = to_double(v); }},
      {"model", "t_min", "0.001", "smallest diffusion time used in training and sampling",
       [](RunConfig& c, const std::string& v) { c.model.schedule.t_min = to_double(v); }},
      {"model", "num_steps", "200", "reverse-time integration steps",
       [](RunConfig& c, const std::string& v) { c.model.schedule.num_steps = to_int(v); }},
      {"model", "loss_weighting", "sigma2", "sigma2 or g2",
       [](RunConfig& c, const std::string& v) {
         if (v == "sigma2") {
           c.model.score.weighting = diffusion::LossWeighting::kSigmaSquared;
         } else if (v == "g2") {
           c.model.score.weighting = diffusion::LossWeighting::kGSquared;
         } else {
           throw std::invalid_argument("expected sigma2 or g2");
         }
       }},
      {"model", "embedding_dim", "64", "width of each condition-embedding block (even)",
       [](RunConfig& c, const std::string& v) {
         c.model.score.embedding.dim = to_int(v);
         c.model.categorical.embedding.dim = c.model.score.embedding.dim;
       }},
      {"model", "encoder_hidden", "64", "comma-separated hidden widths of the covariate encoder",
       [](RunConfig& c, const std::string& v) {
         c.model.score.embedding.encoder_hidden = to_widths(v);
         c.model.categorical.embedding.encoder_hidden = c.model.score.embedding.encoder_hidden;
       }},
      {"model", "score_hidden", "128,128,128", "hidden widths of the denoiser",
       [](RunConfig& c, const std::string& v) { c.model.score.hidden = to_widths(v); }},
      {"model", "categorical_hidden", "128", "hidden widths of the categorical head",
       [](RunConfig& c, const std::string& v) { c.model.categorical.hidden = to_widths(v); }},
      {"model", "epochs_per_stage", "50", "epochs per curriculum stage",
       [](RunConfig& c, const std::string& v) { c.model.epochs_per_stage = to_int(v); }},
      {"model", "batch_size", "256", "minibatch size",
       [](RunConfig& c, const std::string& v) { c.model.batch_size = to_int(v); }},
      {"model", "learning_rate", "0.001", "Adam learning rate",
       [](RunConfig& c, const std::string& v) { c.model.learning_rate = to_double(v); }},
      {"model", "ema_decay", "0.999", "weight averaging decay for the trained generators; 0 disables",
       [](RunConfig& c, const std::string& v) { c.model.ema_decay = to_double(v); }},
      {"model", "max_orderings", "8", "cap on factorization orderings",
       [](RunConfig& c, const std::string& v) { c.model.max_orderings = to_u64(v); }},
      {"model", "seed", "0", "training seed",
       [](RunConfig& c, const std::string& v) { c.model.seed = to_u64(v); }},

      {"eval", "n_samples", "100", "draws per unit and arm",
       [](RunConfig& c, const std::string& v) { c.eval.n_samples = to_u64(v); }},
      {"eval", "n_eval_units", "200", "units sampled per split",
       [](RunConfig& c, const std::string& v) { c.eval.n_eval_units = to_u64(v); }},
      {"eval", "max_assignment", "2000", "largest exact assignment; larger sets are subsampled",
       [](RunConfig& c, const std::string& v) { c.eval.max_assignment = to_u64(v); }},
      {"eval", "seed", "3", "sampling and subsampling seed",
       [](RunConfig& c, const std::string& v) { c.eval.seed = to_u64(v); }},
  };
  return table;
}

void validate(const RunConfig& c, const std::string& source) {
  auto fail = [&](const std::string& what) { throw ConfigError(source + ": " + what); };
  if (c.dgp.d_x < 1) fail("[dgp] d_x must be >= 1");
  if (!(c.dgp.rho >= 0.0 && c.dgp.rho <= 1.0)) fail("[dgp] rho must lie in [0, 1]");
  if (!(c.dgp.sigma_noise > 0.0)) fail("[dgp] sigma_noise must be positive");
  if (c.dgp.n < 2) fail("[dgp] n must be >= 2");
  if (!(c.dgp.test_fraction > 0.0 && c.dgp.test_fraction < 1.0)) fail("[dgp] test_fraction must lie in (0, 1)");
  if (c.eval.max_assignment < 1) fail("[eval] max_assignment must be >= 1");
  try {
    c.model.validate();
  } catch (const std::invalid_argument& e) {
    fail(std::string("[model] ") + e.what());
  }
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& source) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "dgp" && section != "model" && section != "eval")
        throw ConfigError(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(where + ": key '" + key + "' appears before any section");
    const Key* match = nullptr;
    for (const auto& k : keys())
      if (section == k.section && key == k.name) match = &k;
    if (!match) throw ConfigError(where + ": unknown key '" + key + "' in [" + section + "]");
    try {
      match->set(c, value);
    } catch (const std::exception& e) {
      throw ConfigError(where + ": bad value '" + value + "' for key '" + key + "': " + e.what());
    }
  }
  validate(c, source);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = io::read_text_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  return parse_config(text, path);
}

std::string config_reference() {
  std::ostringstream out;
  std::string section;
  for (const auto& k : keys()) {
    if (section != k.section) {
      section = k.section;
      out << "[" << section << "]\n";
    }
    out << "  " << k.name << " = " << k.fallback << "    # " << k.help << "\n";
  }
  return out.str();
}

}  // namespace dime::cli
