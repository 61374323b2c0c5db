#include "dime/io.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

namespace dime::io {

nlohmann::json schema_to_json(const OutcomeSchema& schema) {
  nlohmann::json outcomes = nlohmann::json::array();
  for (const auto& s : schema.specs()) {
    nlohmann::json o;
    o["name"] = s.name;
    o["kind"] = s.is_categorical() ? "categorical" : "continuous";
    if (s.is_categorical()) o["num_categories"] = s.num_categories;
    outcomes.push_back(std::move(o));
  }
  return nlohmann::json{{"outcomes", std::move(outcomes)}};
}

OutcomeSchema schema_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("outcomes") || !j["outcomes"].is_array())
    throw SchemaError("schema JSON needs an \"outcomes\" array");
  std::vector<OutcomeSpec> specs;
  for (const auto& o : j["outcomes"]) {
    if (!o.contains("name") || !o.contains("kind")) throw SchemaError("outcome entry needs name and kind");
    const auto kind = o["kind"].get<std::string>();
    if (kind == "continuous") {
      specs.push_back(OutcomeSpec::continuous(o["name"].get<std::string>()));
    } else if (kind == "categorical") {
      if (!o.contains("num_categories")) throw SchemaError("categorical outcome needs num_categories");
      specs.push_back(OutcomeSpec::categorical(o["name"].get<std::string>(), o["num_categories"].get<int>()));
    } else {
      throw SchemaError("unknown outcome kind '" + kind + "'");
    }
  }
  return OutcomeSchema(std::move(specs));
}

void write_schema(const std::filesystem::path& path, const OutcomeSchema& schema) {
  write_text_file(path, schema_to_json(schema).dump(2) + "\n");
}

OutcomeSchema read_schema(const std::filesystem::path& path) {
  try {
    return schema_from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

namespace {

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string schema_hash(const OutcomeSchema& schema) { return hex64(fnv1a(schema_to_json(schema).dump())); }

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string dataset_header(std::size_t covariate_dim, std::size_t k) {
  std::string h;
  for (std::size_t j = 0; j < covariate_dim; ++j) h += "x_" + std::to_string(j) + ",";
  h += "a";
  for (std::size_t i = 1; i <= k; ++i) h += ",y_" + std::to_string(i);
  return h;
}

void write_dataset_csv(std::ostream& out, const Dataset& dataset) {
  out << dataset_header(dataset.covariate_dim, dataset.schema.size()) << '\n';
  for (const auto& r : dataset.records) {
    for (double x : r.x) out << format_double(x) << ',';
    out << r.a;
    for (std::size_t i = 0; i < r.y.size(); ++i) {
      out << ',';
      if (std::isnan(r.y[i])) continue;
      if (dataset.schema[i].is_categorical())
        out << static_cast<long long>(r.y[i]);
      else
        out << format_double(r.y[i]);
    }
    out << '\n';
  }
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_dataset_csv(out, dataset);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

double parse_double(const std::string& field, const std::string& context) {
  // strtod rather than stod: stod rejects subnormals, which format_double emits.
  const char* begin = field.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (end == begin || std::isspace(static_cast<unsigned char>(field.front())))
    throw DataError(context + ": cannot parse '" + field + "' as a number");
  if (errno == ERANGE && std::isinf(v)) throw DataError(context + ": '" + field + "' is out of range");
  if (static_cast<std::size_t>(end - begin) != field.size())
    throw DataError(context + ": trailing characters in '" + field + "'");
  return v;
}

Dataset read_dataset_csv(std::istream& in, const OutcomeSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("dataset CSV is empty");
  const auto header = split_csv_line(line);
  const std::size_t k = schema.size();
  if (header.size() < k + 1) throw DataError("dataset header too short for schema");
  const std::size_t d = header.size() - k - 1;
  if (split_csv_line(dataset_header(d, k)) != header)
    throw DataError("dataset header does not match x_0..x_{d-1},a,y_1..y_k for this schema");

  Dataset ds;
  ds.schema = schema;
  ds.covariate_dim = d;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    const std::string ctx = "row " + std::to_string(row);
    if (f.size() != header.size()) throw DataError(ctx + ": expected " + std::to_string(header.size()) + " fields");
    ObservationalRecord r;
    r.x.resize(d);
    for (std::size_t j = 0; j < d; ++j) r.x[j] = parse_double(f[j], ctx);
    const double a = parse_double(f[d], ctx);
    if (a != 0.0 && a != 1.0) throw DataError(ctx + ": treatment must be 0 or 1");
    r.a = static_cast<int>(a);
    r.y.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      const auto& s = f[d + 1 + i];
      r.y[i] = s.empty() ? std::nan("") : parse_double(s, ctx);
    }
    if (auto v = validate_record(r, schema, d)) throw DataError(ctx + ": " + v->message);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

Dataset read_dataset_csv(const std::filesystem::path& path, const OutcomeSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return read_dataset_csv(in, schema);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string file_digest(const std::filesystem::path& path) { return hex64(fnv1a(read_text_file(path))); }

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace dime::io
