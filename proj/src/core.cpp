#include "dime/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_set>

namespace dime {

OutcomeSpec OutcomeSpec::continuous(std::string name) {
  return {OutcomeKind::kContinuous, 0, std::move(name)};
}

OutcomeSpec OutcomeSpec::categorical(std::string name, int num_categories) {
  return {OutcomeKind::kCategorical, num_categories, std::move(name)};
}

OutcomeSchema::OutcomeSchema(std::vector<OutcomeSpec> specs) : specs_(std::move(specs)) {
  if (specs_.empty()) throw SchemaError("schema needs at least one outcome");
  std::unordered_set<std::string> names;
  for (const auto& s : specs_) {
    if (s.name.empty()) throw SchemaError("outcome names must be non-empty");
    if (!names.insert(s.name).second) throw SchemaError("duplicate outcome name '" + s.name + "'");
    if (s.is_categorical() && s.num_categories < 2)
      throw SchemaError("categorical outcome '" + s.name + "' needs at least 2 categories");
  }
}

namespace {

std::optional<Violation> check_slot(double v, const OutcomeSpec& spec, std::size_t slot,
                                    bool allow_missing) {
  if (std::isnan(v)) {
    if (allow_missing) return std::nullopt;
    return Violation{Violation::Field::kOutcome, slot, "outcome '" + spec.name + "' is missing"};
  }
  if (!std::isfinite(v))
    return Violation{Violation::Field::kOutcome, slot, "outcome '" + spec.name + "' is not finite"};
  if (spec.is_categorical()) {
    if (v != std::floor(v) || v < 1 || v > spec.num_categories)
      return Violation{Violation::Field::kOutcome, slot,
                       "outcome '" + spec.name + "' must be an integer category in [1, " +
                           std::to_string(spec.num_categories) + "]"};
  }
  return std::nullopt;
}

}  // namespace

std::optional<Violation> validate_record(const ObservationalRecord& record,
                                         const OutcomeSchema& schema,
                                         std::optional<std::size_t> covariate_dim) {
  if (covariate_dim && record.x.size() != *covariate_dim)
    return Violation{Violation::Field::kCovariates, 0,
                     "expected " + std::to_string(*covariate_dim) + " covariates, got " +
                         std::to_string(record.x.size())};
  for (std::size_t j = 0; j < record.x.size(); ++j)
    if (!std::isfinite(record.x[j]))
      return Violation{Violation::Field::kCovariates, j, "covariate is not finite"};
  if (record.a != 0 && record.a != 1)
    return Violation{Violation::Field::kTreatment, 0, "treatment must be 0 or 1"};
  if (record.y.size() != schema.size())
    return Violation{Violation::Field::kOutcome, 0,
                     "expected " + std::to_string(schema.size()) + " outcomes, got " +
                         std::to_string(record.y.size())};
  for (std::size_t i = 0; i < schema.size(); ++i)
    if (auto v = check_slot(record.y[i], schema[i], i, true)) return v;
  return std::nullopt;
}

std::optional<Violation> validate_outcomes(const OutcomeVector& y, const OutcomeSchema& schema) {
  if (y.size() != schema.size())
    return Violation{Violation::Field::kOutcome, 0, "outcome vector has wrong length"};
  for (std::size_t i = 0; i < schema.size(); ++i)
    if (auto v = check_slot(y[i], schema[i], i, false)) return v;
  return std::nullopt;
}

void validate_dataset(const Dataset& dataset) {
  if (!dataset.unit_ids.empty() && dataset.unit_ids.size() != dataset.records.size())
    throw DataError("unit id list does not match record count");
  for (std::size_t r = 0; r < dataset.records.size(); ++r) {
    if (auto v = validate_record(dataset.records[r], dataset.schema, dataset.covariate_dim))
      throw DataError("row " + std::to_string(r) + ": " + v->message);
  }
}

Ordering::Ordering(std::vector<std::size_t> sigma) : sigma_(std::move(sigma)) {
  std::vector<bool> seen(sigma_.size(), false);
  for (auto s : sigma_) {
    if (s >= sigma_.size() || seen[s]) throw std::invalid_argument("ordering is not a permutation");
    seen[s] = true;
  }
}

Ordering Ordering::identity(std::size_t k) {
  std::vector<std::size_t> s(k);
  std::iota(s.begin(), s.end(), std::size_t{0});
  return Ordering(std::move(s));
}

std::size_t Ordering::position_of(std::size_t slot) const {
  auto it = std::find(sigma_.begin(), sigma_.end(), slot);
  if (it == sigma_.end()) throw std::out_of_range("slot not in ordering");
  return static_cast<std::size_t>(it - sigma_.begin());
}

std::vector<Ordering> build_orderings(std::size_t k, std::size_t max_orderings,
                                      std::uint64_t seed) {
  if (k == 0) throw std::invalid_argument("build_orderings: k must be >= 1");
  if (max_orderings == 0) throw std::invalid_argument("build_orderings: max_orderings must be >= 1");

  // k! with saturation at max_orderings + 1.
  std::size_t count = 1;
  for (std::size_t i = 2; i <= k && count <= max_orderings; ++i) count *= i;

  std::vector<Ordering> out;
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  if (count <= max_orderings) {
    do {
      out.emplace_back(perm);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return out;
  }

  Rng rng(mix_seed(seed, 0x0bde));
  std::set<std::vector<std::size_t>> seen{perm};
  out.emplace_back(perm);
  while (out.size() < max_orderings) {
    std::shuffle(perm.begin(), perm.end(), rng);
    if (seen.insert(perm).second) out.emplace_back(perm);
  }
  return out;
}

MaskTriple masks_for_step(const Ordering& ordering, std::size_t position, const Mask& observed) {
  const std::size_t k = ordering.size();
  if (position >= k) throw std::invalid_argument("masks_for_step: position out of range");
  if (observed.size() != k) throw std::invalid_argument("masks_for_step: observed mask has wrong length");
  const std::size_t target = ordering[position];
  if (!observed[target]) throw std::invalid_argument("masks_for_step: target outcome is not observed");

  MaskTriple m{observed, Mask(k, 0), Mask(k, 0)};
  m.target[target] = 1;
  for (std::size_t p = 0; p < position; ++p) {
    const std::size_t slot = ordering[p];
    m.conditional[slot] = observed[slot];
  }
  return m;
}

Mask observed_mask(const OutcomeVector& y) {
  Mask m(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) m[i] = std::isnan(y[i]) ? 0 : 1;
  return m;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace dime
