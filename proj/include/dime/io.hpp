#pragma once

// Dataset CSV and schema JSON formats.
//
// CSV header: x_0,...,x_{d-1},a,y_1,...,y_k. Continuous fields are written
// with round-trip precision, categorical fields and the treatment as integers.
// An empty outcome field means the outcome is unobserved.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "dime/core.hpp"

namespace dime::io {

nlohmann::json schema_to_json(const OutcomeSchema& schema);
OutcomeSchema schema_from_json(const nlohmann::json& j);

void write_schema(const std::filesystem::path& path, const OutcomeSchema& schema);
OutcomeSchema read_schema(const std::filesystem::path& path);

// FNV-1a over the canonical schema JSON, as 16 hex digits.
std::string schema_hash(const OutcomeSchema& schema);

std::string dataset_header(std::size_t covariate_dim, std::size_t k);
void write_dataset_csv(std::ostream& out, const Dataset& dataset);
void write_dataset_csv(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset_csv(std::istream& in, const OutcomeSchema& schema);
Dataset read_dataset_csv(const std::filesystem::path& path, const OutcomeSchema& schema);

// Shortest round-trip text for a double ("%.17g").
std::string format_double(double v);

std::vector<std::string> split_csv_line(const std::string& line);
double parse_double(const std::string& field, const std::string& context);

// Hex FNV-1a digest of a file's bytes.
std::string file_digest(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace dime::io
