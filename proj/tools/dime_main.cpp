// dime: generate synthetic data, train joint or marginal-product models,
// sample interventional outcomes, evaluate and tabulate metrics.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dime/pipeline.hpp"

namespace {

using namespace dime::cli;

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? parse_config("", "<defaults>") : load_config(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint interventional outcome distributions with masked conditional diffusion"};
  app.footer("Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.\n"
             "Relative output paths resolve under $DIME_OUTPUT_ROOT when set.\n\n"
             "Config keys and defaults:\n" +
             config_reference());
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool force = false;
  auto add_common = [&](CLI::App* c, bool with_config) {
    if (with_config) c->add_option("--config", config_path, "run configuration file")->check(CLI::ExistingFile);
    c->add_option("--seed", seed, "override the seed used by this command");
    c->add_option("--threads", threads, "worker cap (computation is single-threaded)")->check(CLI::PositiveNumber);
  };

  std::string out = "data";
  auto* gen = app.add_subcommand("generate", "write a synthetic dataset directory");
  add_common(gen, true);
  gen->add_option("--out", out, "output directory");
  gen->add_flag("--force", force, "replace an existing output");

  std::string data_dir, model_out = "model";
  bool baseline = false;
  auto* train = app.add_subcommand("train", "train a model bundle");
  add_common(train, true);
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", model_out, "bundle directory");
  train->add_flag("--baseline", baseline, "train the product-of-marginals baseline");
  train->add_flag("--force", force, "replace an existing output");

  std::string model_dir, samples_out = "samples.csv";
  SampleOptions sopt;
  std::optional<std::size_t> n_per_unit, max_units;
  auto* sample = app.add_subcommand("sample", "draw joint outcomes for dataset units");
  add_common(sample, true);
  sample->add_option("--model", model_dir, "bundle directory")->required();
  sample->add_option("--data", data_dir, "dataset directory")->required();
  sample->add_option("--arm", sopt.arm, "0, 1 or both")->check(CLI::IsMember({"0", "1", "both"}));
  sample->add_option("--n-per-unit", n_per_unit, "draws per unit and arm (default [eval] n_samples)");
  sample->add_option("--max-units", max_units, "units per split (default [eval] n_eval_units)");
  sample->add_option("--out", samples_out, "sample CSV");

  std::string samples_in, report_out = "report.json";
  EvaluateOptions eopt;
  auto* evaluate = app.add_subcommand("evaluate", "score samples against the oracle or another sample file");
  add_common(evaluate, true);
  evaluate->add_option("--samples", samples_in, "sample CSV")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--data", data_dir, "dataset directory")->required();
  evaluate->add_option("--reference", eopt.reference, "oracle or a sample CSV");
  evaluate->add_option("--label", eopt.label, "method label (default: from the sample sidecar)");
  evaluate->add_option("--out", report_out, "metrics JSON");

  std::vector<std::string> reports;
  std::string table_out;
  auto* report = app.add_subcommand("report", "tabulate metrics JSON files");
  report->add_option("reports", reports, "metrics JSON files")->required()->check(CLI::ExistingFile);
  report->add_option("--out", table_out, "CSV path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (gen->parsed()) {
      auto cfg = config_or_default(config_path);
      if (seed) cfg.dgp.seed = *seed;
      cmd_generate(cfg, resolve_output(out), force, std::cout);
    } else if (train->parsed()) {
      auto cfg = config_or_default(config_path);
      if (seed) cfg.model.seed = *seed;
      cmd_train(cfg, data_dir, resolve_output(model_out), baseline, force, std::cout);
    } else if (sample->parsed()) {
      const auto cfg = config_or_default(config_path);
      sopt.seed = seed.value_or(cfg.eval.seed);
      sopt.n_per_unit = n_per_unit.value_or(cfg.eval.n_samples);
      sopt.max_units = max_units.value_or(cfg.eval.n_eval_units);
      cmd_sample(model_dir, data_dir, sopt, resolve_output(samples_out), std::cout);
    } else if (evaluate->parsed()) {
      const auto cfg = config_or_default(config_path);
      eopt.seed = seed.value_or(cfg.eval.seed);
      eopt.max_assignment = cfg.eval.max_assignment;
      cmd_evaluate(samples_in, data_dir, eopt, resolve_output(report_out), std::cout);
    } else if (report->parsed()) {
      std::vector<fs::path> paths(reports.begin(), reports.end());
      std::optional<fs::path> dest;
      if (!table_out.empty()) dest = resolve_output(table_out);
      cmd_report(paths, dest, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "dime: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitOk;
}
