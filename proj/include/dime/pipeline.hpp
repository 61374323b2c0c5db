#pragma once

// End-to-end commands behind the dime executable:
// generate -> train -> sample -> evaluate -> report.
//
// Dataset directory: train.csv, test.csv, schema.json, split.json (unit ids
// of each split in row order) and oracle.csv (per unit and arm, the
// noise-free means and one potential-outcome draw).

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dime/config.hpp"

namespace dime::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitData = 3, kExitNumeric = 4 };

// Maps an exception thrown by a command to its exit code.
int exit_code_for(const std::exception& e);

// Relative paths resolve under $DIME_OUTPUT_ROOT when it is set.
fs::path resolve_output(const fs::path& path);

struct DataBundle {
  Dataset train, test;
  nlohmann::json split;
};
DataBundle read_data_dir(const fs::path& dir);

// Writes the dataset directory. Refuses a non-empty destination unless
// `force`. Prints one "<file> <digest>" line per file to `log`.
void cmd_generate(const RunConfig& config, const fs::path& out_dir, bool force, std::ostream& log);

void cmd_train(const RunConfig& config, const fs::path& data_dir, const fs::path& out_dir, bool baseline, bool force,
               std::ostream& log);

struct SampleOptions {
  std::string arm = "both";  // 0, 1 or both
  std::size_t n_per_unit = 100;
  std::size_t max_units = 200;  // per split
  std::uint64_t seed = 3;
};
// SampleSet CSV plus a <out>.meta.json sidecar (method, seeds, draw count).
void cmd_sample(const fs::path& model_dir, const fs::path& data_dir, const SampleOptions& options,
                const fs::path& out_csv, std::ostream& log);

struct EvaluateOptions {
  std::string reference = "oracle";  // "oracle" or a SampleSet CSV path
  std::size_t max_assignment = 2000;
  std::uint64_t seed = 3;
  std::string label;  // method label; defaults to the sidecar's method
};
nlohmann::json evaluate_report(const fs::path& samples_csv, const fs::path& data_dir, const EvaluateOptions& options);
void cmd_evaluate(const fs::path& samples_csv, const fs::path& data_dir, const EvaluateOptions& options,
                  const fs::path& out_json, std::ostream& log);

// One row per (method, arm, split) with mean and sample std across reports.
std::string report_table(const std::vector<nlohmann::json>& reports);
void cmd_report(const std::vector<fs::path>& reports, const std::optional<fs::path>& out_csv, std::ostream& out);

}  // namespace dime::cli
