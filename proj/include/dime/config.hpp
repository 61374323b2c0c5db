#pragma once

// Run configuration: a flat key = value file with [dgp], [model] and [eval]
// sections. '#' starts a comment. Every key has a default; unknown sections
// and keys are rejected with the offending line.

#include <cstdint>
#include <stdexcept>
#include <string>

#include "dime/orchestrator.hpp"

namespace dime::cli {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class DgpKind { kRho, kBivariateNormal };

struct DgpSection {
  DgpKind kind = DgpKind::kRho;
  std::size_t d_x = 10;
  double rho = 0.5;
  double sigma_noise = 1.0;
  std::uint64_t coef_seed = 0;
  std::size_t n = 100000;
  double test_fraction = 0.2;
  std::uint64_t seed = 1;
  std::uint64_t split_seed = 2;
};

struct EvalSection {
  std::size_t n_samples = 100;      // draws per (unit, arm)
  std::size_t n_eval_units = 200;   // per split
  std::size_t max_assignment = 2000;
  std::uint64_t seed = 3;
};

struct RunConfig {
  DgpSection dgp;
  DimeConfig model;
  EvalSection eval;
};

RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);

// Defaults and meaning of every key, as printed by --help.
std::string config_reference();

}  // namespace dime::cli
