#pragma once

// Domain types shared by every module: outcome schemas, observational
// records, factorization orderings and the mask triple used to drive
// masked conditional training.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dime {

class SchemaError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OutcomeKind { kContinuous, kCategorical };

struct OutcomeSpec {
  OutcomeKind kind = OutcomeKind::kContinuous;
  int num_categories = 0;  // categorical only, >= 2
  std::string name;

  static OutcomeSpec continuous(std::string name);
  static OutcomeSpec categorical(std::string name, int num_categories);

  bool is_categorical() const { return kind == OutcomeKind::kCategorical; }
  bool operator==(const OutcomeSpec&) const = default;
};

class OutcomeSchema {
 public:
  OutcomeSchema() = default;
  explicit OutcomeSchema(std::vector<OutcomeSpec> specs);

  std::size_t size() const { return specs_.size(); }
  const OutcomeSpec& operator[](std::size_t i) const { return specs_.at(i); }
  const std::vector<OutcomeSpec>& specs() const { return specs_; }
  bool operator==(const OutcomeSchema&) const = default;

 private:
  std::vector<OutcomeSpec> specs_;
};

// One value per schema slot. Categorical slots hold the 1-based category as
// a double; an unobserved slot holds NaN.
using OutcomeVector = std::vector<double>;

struct ObservationalRecord {
  std::vector<double> x;
  int a = 0;
  OutcomeVector y;
};

struct Dataset {
  OutcomeSchema schema;
  std::size_t covariate_dim = 0;
  std::vector<ObservationalRecord> records;
  // Stable identifier per record; defaults to the record index.
  std::vector<std::size_t> unit_ids;

  std::size_t size() const { return records.size(); }
  std::size_t unit_id(std::size_t row) const {
    return unit_ids.empty() ? row : unit_ids.at(row);
  }
};

struct Violation {
  enum class Field { kCovariates, kTreatment, kOutcome };
  Field field;
  std::size_t slot = 0;
  std::string message;
};

// Returns the first invariant violation of `record`, if any.
std::optional<Violation> validate_record(const ObservationalRecord& record,
                                         const OutcomeSchema& schema,
                                         std::optional<std::size_t> covariate_dim = {});

// Outcome-only checks used on generated draws (all slots must be present).
std::optional<Violation> validate_outcomes(const OutcomeVector& y, const OutcomeSchema& schema);

// Throws DataError naming the first bad row.
void validate_dataset(const Dataset& dataset);

// Permutation of {0, ..., k-1}. Position p holds the slot generated p-th.
class Ordering {
 public:
  Ordering() = default;
  explicit Ordering(std::vector<std::size_t> sigma);
  static Ordering identity(std::size_t k);

  std::size_t size() const { return sigma_.size(); }
  std::size_t operator[](std::size_t position) const { return sigma_.at(position); }
  const std::vector<std::size_t>& slots() const { return sigma_; }
  // Position of `slot` within the ordering.
  std::size_t position_of(std::size_t slot) const;
  bool operator==(const Ordering&) const = default;
  auto operator<=>(const Ordering&) const = default;

 private:
  std::vector<std::size_t> sigma_;
};

using Mask = std::vector<std::uint8_t>;

struct MaskTriple {
  Mask input;        // observed outcomes
  Mask target;       // slot whose loss is computed
  Mask conditional;  // slots used as conditioning information
};

// All k! orderings when k! <= max_orderings, otherwise max_orderings distinct
// uniformly drawn orderings. The identity ordering always comes first.
std::vector<Ordering> build_orderings(std::size_t k, std::size_t max_orderings,
                                      std::uint64_t seed);

// Masks for generating the slot at `position` (0-based) of `ordering`.
// Throws std::invalid_argument if that slot is not observed.
MaskTriple masks_for_step(const Ordering& ordering, std::size_t position, const Mask& observed);

Mask observed_mask(const OutcomeVector& y);

// Deterministic 64-bit seed mixing.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

using Rng = std::mt19937_64;

}  // namespace dime
