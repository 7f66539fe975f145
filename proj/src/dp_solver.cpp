#include "sparsedp/dp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sparsedp/errors.hpp"

namespace sparsedp {
namespace {

constexpr double kUnreachable = std::numeric_limits<double>::infinity();

void check_shapes(const ErrorTable& err, const DiscreteTimings& dt) {
  if (err.layer_count() != dt.layer_count() || err.level_count() != dt.level_count()) {
    throw InvalidArgument("error table is " + std::to_string(err.layer_count()) + "x" +
                          std::to_string(err.level_count()) + " but timings are " +
                          std::to_string(dt.layer_count()) + "x" +
                          std::to_string(dt.level_count()));
  }
  if (dt.bucket_count < 1) throw InvalidArgument("bucket count must be >= 1");
}

std::size_t allowed_levels(const DiscreteTimings& dt, const SkipList& skip, std::size_t layer) {
  return skip.pinned(layer) ? 1 : dt.level_count();
}

void fill_first_layer(const ErrorTable& err, const DiscreteTimings& dt, const SkipList& skip,
                      Matrix<double>& cost, Matrix<std::int32_t>* choice) {
  const std::int64_t budget = dt.bucket_count;
  for (std::size_t s = 0; s < allowed_levels(dt, skip, 0); ++s) {
    const std::int64_t b = dt.buckets(0, s);
    if (b > budget) continue;
    const auto t = static_cast<std::size_t>(b);
    if (err(0, s) < cost(0, t)) {
      cost(0, t) = err(0, s);
      if (choice) (*choice)(0, t) = static_cast<std::int32_t>(s);
    }
  }
}

void fill_layer_scalar(const ErrorTable& err, const DiscreteTimings& dt, std::size_t l,
                       std::size_t levels, DpTables& tables) {
  const std::int64_t budget = dt.bucket_count;
  for (std::size_t s = 0; s < levels; ++s) {
    const std::int64_t b = dt.buckets(l, s);
    const double e = err(l, s);
    for (std::int64_t t = b; t <= budget; ++t) {
      const double candidate = e + tables.cost(l - 1, static_cast<std::size_t>(t - b));
      if (candidate < tables.cost(l, static_cast<std::size_t>(t))) {
        tables.cost(l, static_cast<std::size_t>(t)) = candidate;
        tables.choice(l, static_cast<std::size_t>(t)) = static_cast<std::int32_t>(s);
      }
    }
  }
}

// Min-plus update only; levels are recovered afterwards by recover_level.
void fill_layer_vectorized(const ErrorTable& err, const DiscreteTimings& dt, std::size_t l,
                           std::size_t levels, Matrix<double>& cost) {
  const std::int64_t budget = dt.bucket_count;
  const double* __restrict prev = cost.row(l - 1).data();
  for (std::size_t s = 0; s < levels; ++s) {
    const std::int64_t b = dt.buckets(l, s);
    if (b > budget) continue;
    const double e = err(l, s);
    const auto n = static_cast<std::size_t>(budget - b + 1);
    double* __restrict cur = cost.row(l).data() + b;
    // Row l-1 shifted right by b, plus e, merged into row l.
    for (std::size_t i = 0; i < n; ++i) {
      const double candidate = e + prev[i];
      cur[i] = candidate < cur[i] ? candidate : cur[i];
    }
  }
}

// First level whose candidate reproduces cost(l, t). Ascending strict-< updates
// keep exactly that level, so this matches the choice table of the scalar kernel.
std::int32_t recover_level(const ErrorTable& err, const DiscreteTimings& dt, const SkipList& skip,
                           const Matrix<double>& cost, std::size_t l, std::size_t t) {
  const double target = cost(l, t);
  if (target == kUnreachable) return -1;
  for (std::size_t s = 0; s < allowed_levels(dt, skip, l); ++s) {
    const std::int64_t b = dt.buckets(l, s);
    if (b > static_cast<std::int64_t>(t)) continue;
    const double candidate =
        l == 0 ? (b == static_cast<std::int64_t>(t) ? err(0, s) : kUnreachable)
               : err(l, s) + cost(l - 1, t - static_cast<std::size_t>(b));
    if (candidate == target) return static_cast<std::int32_t>(s);
  }
  return -1;
}

Matrix<double> fill_costs(const ErrorTable& err, const DiscreteTimings& dt, const SkipList& skip,
                          DpKernel kernel, Matrix<std::int32_t>& choice) {
  const std::size_t layers = dt.layer_count();
  const auto width = static_cast<std::size_t>(dt.bucket_count) + 1;
  DpTables tables{Matrix<double>(layers, width, kUnreachable),
                  kernel == DpKernel::scalar ? Matrix<std::int32_t>(layers, width, -1)
                                             : Matrix<std::int32_t>()};
  fill_first_layer(err, dt, skip, tables.cost,
                   kernel == DpKernel::scalar ? &tables.choice : nullptr);
  for (std::size_t l = 1; l < layers; ++l) {
    const std::size_t levels = allowed_levels(dt, skip, l);
    if (kernel == DpKernel::scalar) {
      fill_layer_scalar(err, dt, l, levels, tables);
    } else {
      fill_layer_vectorized(err, dt, l, levels, tables.cost);
    }
  }
  choice = std::move(tables.choice);
  return std::move(tables.cost);
}

DpSolution make_solution(const ErrorTable& err, const DiscreteTimings& dt, Profile profile) {
  DpSolution sol;
  sol.total_error = 0.0;
  sol.total_buckets = 0;
  for (std::size_t l = 0; l < profile.size(); ++l) {
    const auto s = static_cast<std::size_t>(profile.choices[l]);
    sol.total_error += err(l, s);
    sol.total_buckets += dt.buckets(l, s);
  }
  sol.profile = std::move(profile);
  sol.feasible = sol.total_buckets <= dt.bucket_count;
  return sol;
}

[[noreturn]] void throw_infeasible(std::int64_t minimal, std::int64_t budget) {
  throw InfeasibleError("fastest profile needs " + std::to_string(minimal) +
                            " buckets, budget is " + std::to_string(budget),
                        minimal);
}

}  // namespace

ErrorTable::ErrorTable(Matrix<double> values) : values_(std::move(values)) {
  if (values_.rows() == 0 || values_.cols() == 0) {
    throw InvalidArgument("error table needs at least one layer and one level");
  }
  for (std::size_t l = 0; l < values_.rows(); ++l) {
    for (std::size_t s = 0; s < values_.cols(); ++s) {
      const double v = values_(l, s);
      if (!std::isfinite(v) || v < 0.0) {
        throw InvalidArgument("error table entry (" + std::to_string(l) + ", " +
                              std::to_string(s) + ") must be finite and >= 0");
      }
    }
  }
}

ErrorTable ErrorTable::scaled(double factor) const {
  Matrix<double> out = values_;
  for (std::size_t l = 0; l < out.rows(); ++l) {
    for (double& v : out.row(l)) v *= factor;
  }
  return ErrorTable(std::move(out));
}

std::int64_t minimal_bucket_total(const DiscreteTimings& dt, const SkipList& skip) {
  std::int64_t total = 0;
  for (std::size_t l = 0; l < dt.layer_count(); ++l) {
    std::int64_t best = dt.buckets(l, 0);
    for (std::size_t s = 1; s < allowed_levels(dt, skip, l); ++s) {
      best = std::min(best, dt.buckets(l, s));
    }
    total += best;
  }
  return total;
}

DpTables fill_dp_tables(const ErrorTable& err, const DiscreteTimings& dt, const SkipList& skip,
                        DpKernel kernel) {
  check_shapes(err, dt);
  DpTables tables;
  tables.cost = fill_costs(err, dt, skip, kernel, tables.choice);
  if (kernel == DpKernel::vectorized) {
    tables.choice = Matrix<std::int32_t>(tables.cost.rows(), tables.cost.cols(), -1);
    for (std::size_t l = 0; l < tables.cost.rows(); ++l) {
      for (std::size_t t = 0; t < tables.cost.cols(); ++t) {
        tables.choice(l, t) = recover_level(err, dt, skip, tables.cost, l, t);
      }
    }
  }
  return tables;
}

DpSolution solve_dp(const ErrorTable& err, const DiscreteTimings& dt, const SkipList& skip,
                    DpKernel kernel) {
  check_shapes(err, dt);
  const std::int64_t minimal = minimal_bucket_total(dt, skip);
  if (minimal > dt.bucket_count) throw_infeasible(minimal, dt.bucket_count);

  Matrix<std::int32_t> choice;
  const Matrix<double> cost = fill_costs(err, dt, skip, kernel, choice);
  const std::size_t last = dt.layer_count() - 1;
  const auto final_row = cost.row(last);
  // First minimum: ties prefer the smaller total time.
  const auto best_t = static_cast<std::size_t>(
      std::min_element(final_row.begin(), final_row.end()) - final_row.begin());
  auto t = static_cast<std::int64_t>(best_t);

  Profile profile{std::vector<int>(dt.layer_count(), 0)};
  for (std::size_t l = dt.layer_count(); l-- > 0;) {
    const auto ut = static_cast<std::size_t>(t);
    const std::int32_t s = kernel == DpKernel::scalar ? choice(l, ut)
                                                      : recover_level(err, dt, skip, cost, l, ut);
    profile.choices[l] = s;
    t -= dt.buckets(l, static_cast<std::size_t>(s));
  }
  DpSolution sol = make_solution(err, dt, std::move(profile));
  sol.total_error = final_row[best_t];
  return sol;
}

DpSolution brute_force(const ErrorTable& err, const DiscreteTimings& dt, const SkipList& skip,
                       std::uint64_t cap) {
  check_shapes(err, dt);
  const std::size_t layers = dt.layer_count();
  std::uint64_t space = 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::uint64_t n = allowed_levels(dt, skip, l);
    if (space > cap / n) {
      throw EnumerationCapError("brute force refused: more than " + std::to_string(cap) +
                                " profiles to enumerate");
    }
    space *= n;
  }
  const std::int64_t minimal = minimal_bucket_total(dt, skip);
  if (minimal > dt.bucket_count) throw_infeasible(minimal, dt.bucket_count);

  std::vector<int> current(layers, 0);
  std::vector<int> best;
  double best_error = kUnreachable;
  // Odometer over choice vectors in lexicographic order; strict improvement
  // keeps the lexicographically smallest minimizer.
  while (true) {
    double error = 0.0;
    std::int64_t buckets = 0;
    for (std::size_t l = 0; l < layers; ++l) {
      const auto s = static_cast<std::size_t>(current[l]);
      error += err(l, s);
      buckets += dt.buckets(l, s);
    }
    if (buckets <= dt.bucket_count && (best.empty() || error < best_error)) {
      best = current;
      best_error = error;
    }
    std::size_t l = layers;
    while (l-- > 0) {
      if (static_cast<std::size_t>(++current[l]) < allowed_levels(dt, skip, l)) break;
      current[l] = 0;
    }
    if (l == static_cast<std::size_t>(-1)) break;
  }
  return make_solution(err, dt, Profile{std::move(best)});
}

}  // namespace sparsedp
