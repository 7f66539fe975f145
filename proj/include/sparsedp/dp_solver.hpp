#pragma once

#include <cstdint>

#include "sparsedp/core.hpp"

namespace sparsedp {

// Per-layer, per-level error scores consumed by the solver. Entries must be
// finite and nonnegative.
class ErrorTable {
 public:
  explicit ErrorTable(Matrix<double> values);

  std::size_t layer_count() const { return values_.rows(); }
  std::size_t level_count() const { return values_.cols(); }
  double operator()(std::size_t layer, std::size_t level) const { return values_(layer, level); }
  const Matrix<double>& values() const { return values_; }

  ErrorTable scaled(double factor) const;

 private:
  Matrix<double> values_;
};

struct DpSolution {
  Profile profile;
  double total_error = 0.0;
  std::int64_t total_buckets = 0;
  bool feasible = false;
};

enum class DpKernel {
  scalar,      // literal triple loop, records the chosen level per cell
  vectorized,  // shifted-row min-plus update; levels recovered at traceback
};

// D[l][t]: lowest error of layers 0..l using exactly t buckets (+inf when
// unreachable). P[l][t]: the level chosen for layer l on that path, -1 if none.
struct DpTables {
  Matrix<double> cost;
  Matrix<std::int32_t> choice;
};

DpTables fill_dp_tables(const ErrorTable& err, const DiscreteTimings& dt, const SkipList& skip,
                        DpKernel kernel = DpKernel::vectorized);

// Sum over layers of the cheapest allowed bucket cost.
std::int64_t minimal_bucket_total(const DiscreteTimings& dt, const SkipList& skip);

// Minimizes total error subject to total buckets <= dt.bucket_count. Throws
// InfeasibleError carrying minimal_bucket_total() when no profile fits.
DpSolution solve_dp(const ErrorTable& err, const DiscreteTimings& dt, const SkipList& skip,
                    DpKernel kernel = DpKernel::vectorized);

inline constexpr std::uint64_t kDefaultEnumerationCap = 10'000'000;

// Exhaustive enumeration of every profile. Ties resolve to the lexicographically
// smallest choice vector. Throws EnumerationCapError above `cap` profiles.
DpSolution brute_force(const ErrorTable& err, const DiscreteTimings& dt, const SkipList& skip,
                       std::uint64_t cap = kDefaultEnumerationCap);

}  // namespace sparsedp
