#include "sparsedp/error_models.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "sparsedp/errors.hpp"

namespace sparsedp {
namespace {

constexpr double kKnots = static_cast<double>(kQuantilePoints - 1);

void check_stats(const LayerWeightStats& stats) {
  if (stats.layers.empty()) throw InvalidArgument("weight stats cover no layers");
  for (const auto& layer : stats.layers) layer.validate();
}

}  // namespace

SensitivityVector::SensitivityVector(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {
  for (std::size_t l = 0; l < coeffs_.size(); ++l) {
    if (!(coeffs_[l] >= 0.0 && coeffs_[l] <= 1.0)) {
      throw InvalidArgument("sensitivity coefficient " + std::to_string(l) + " outside [0, 1]");
    }
  }
}

LayerStats LayerStats::from_weights(std::string name, std::span<const double> weights) {
  if (weights.empty()) throw InvalidArgument("layer '" + name + "' has no weights");
  std::vector<double> mags(weights.size());
  std::transform(weights.begin(), weights.end(), mags.begin(),
                 [](double w) { return std::abs(w); });
  std::sort(mags.begin(), mags.end());
  const auto n = static_cast<std::uint64_t>(mags.size());
  LayerStats out{std::move(name), static_cast<std::int64_t>(n), {}};
  out.abs_quantiles.resize(kQuantilePoints);
  for (std::uint64_t k = 0; k < kQuantilePoints; ++k) {
    const std::uint64_t dropped = (k * n + (kQuantilePoints - 2)) / (kQuantilePoints - 1);
    out.abs_quantiles[k] = mags[dropped == 0 ? 0 : dropped - 1];
  }
  return out;
}

void LayerStats::validate() const {
  if (count < 1) throw InvalidArgument("layer '" + name + "': count must be >= 1");
  if (abs_quantiles.size() != kQuantilePoints) {
    throw InvalidArgument("layer '" + name + "': expected " + std::to_string(kQuantilePoints) +
                          " quantiles, got " + std::to_string(abs_quantiles.size()));
  }
  for (std::size_t k = 0; k < abs_quantiles.size(); ++k) {
    if (!std::isfinite(abs_quantiles[k]) || abs_quantiles[k] < 0.0) {
      throw InvalidArgument("layer '" + name + "': quantile " + std::to_string(k) +
                            " is not a finite magnitude");
    }
    if (k > 0 && abs_quantiles[k] < abs_quantiles[k - 1]) {
      throw InvalidArgument("layer '" + name + "': quantiles must be non-decreasing");
    }
  }
}

double LayerStats::quantile(double u) const {
  u = std::clamp(u, 0.0, 1.0);
  const double x = u * kKnots;
  const auto k = std::min(static_cast<std::size_t>(x), kQuantilePoints - 2);
  const double frac = x - static_cast<double>(k);
  return abs_quantiles[k] + frac * (abs_quantiles[k + 1] - abs_quantiles[k]);
}

double LayerStats::fraction_below(double tau) const {
  if (tau <= abs_quantiles.front()) return 0.0;
  if (tau > abs_quantiles.back()) return 1.0;
  // First knot with q >= tau; q is strictly below tau just before it.
  const auto it = std::lower_bound(abs_quantiles.begin(), abs_quantiles.end(), tau);
  const auto k = static_cast<std::size_t>(it - abs_quantiles.begin());
  const double lo = abs_quantiles[k - 1];
  const double hi = abs_quantiles[k];
  const double frac = (tau - lo) / (hi - lo);
  return (static_cast<double>(k - 1) + frac) / kKnots;
}

double LayerStats::squared_mass(double u) const {
  u = std::clamp(u, 0.0, 1.0);
  const double x = u * kKnots;
  double mass = 0.0;
  const double step = 1.0 / kKnots;
  // Exact integral of a squared linear segment: len * (a^2 + ab + b^2) / 3.
  std::size_t k = 0;
  for (; k + 1 < kQuantilePoints && static_cast<double>(k + 1) <= x; ++k) {
    const double a = abs_quantiles[k];
    const double b = abs_quantiles[k + 1];
    mass += step * (a * a + a * b + b * b) / 3.0;
  }
  const double rest = x - static_cast<double>(k);
  if (rest > 0.0 && k + 1 < kQuantilePoints) {
    const double a = abs_quantiles[k];
    const double b = a + rest * (abs_quantiles[k + 1] - a);
    mass += rest * step * (a * a + a * b + b * b) / 3.0;
  }
  return mass;
}

ErrorTable quadratic_errors(const SensitivityVector& c, const SparsityGrid& grid) {
  const std::size_t levels = grid.size();
  Matrix<double> out(c.size(), levels, 0.0);
  const double top = static_cast<double>(levels - 1);
  for (std::size_t l = 0; l < c.size(); ++l) {
    for (std::size_t i = 0; i < levels; ++i) {
      const double x = static_cast<double>(i) / top;
      out(l, i) = c[l] * x * x;
    }
  }
  return ErrorTable(std::move(out));
}

ErrorTable squared_weight_errors(const LayerWeightStats& stats, const SparsityGrid& grid,
                                 bool normalized) {
  check_stats(stats);
  Matrix<double> out(stats.layers.size(), grid.size(), 0.0);
  for (std::size_t l = 0; l < stats.layers.size(); ++l) {
    const auto& layer = stats.layers[l];
    const double scale = normalized ? 1.0 : static_cast<double>(layer.count);
    for (std::size_t i = 1; i < grid.size(); ++i) {
      out(l, i) = scale * layer.squared_mass(grid[i]);
    }
  }
  return ErrorTable(std::move(out));
}

ErrorTable custom_norm_errors(const LayerWeightStats& stats, const SparsityGrid& grid) {
  check_stats(stats);
  Matrix<double> out(stats.layers.size(), grid.size(), 0.0);
  for (std::size_t l = 0; l < stats.layers.size(); ++l) {
    for (std::size_t i = 1; i < grid.size(); ++i) {
      out(l, i) = stats.layers[l].quantile(grid[i]) / (1.0 - grid[i]);
    }
  }
  return ErrorTable(std::move(out));
}

ErrorTable layerwise_loss_errors(Evaluator& evaluator, const SparsityGrid& grid,
                                 const Profile& reference) {
  const std::size_t layers = evaluator.layer_count();
  const std::size_t levels = grid.size();
  if (evaluator.level_count() != levels) {
    throw InvalidArgument("evaluator and grid disagree on the number of levels");
  }
  validate_profile(reference, layers, levels);
  const double base = evaluator.eval(reference);

  std::vector<Profile> probes;
  probes.reserve(layers * (levels - 1));
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t i = 1; i < levels; ++i) {
      Profile p = reference;
      p.choices[l] = static_cast<int>(i);
      probes.push_back(std::move(p));
    }
  }
  std::vector<double> losses(probes.size());

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (evaluator.concurrency() == Concurrency::concurrent_safe && hw > 1 && probes.size() > 1) {
    std::vector<std::exception_ptr> failures(hw);
    std::vector<std::thread> workers;
    for (unsigned w = 0; w < hw; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (std::size_t j = w; j < probes.size(); j += hw) losses[j] = evaluator.eval(probes[j]);
        } catch (...) {
          failures[w] = std::current_exception();
        }
      });
    }
    for (auto& t : workers) t.join();
    for (const auto& f : failures) {
      if (f) std::rethrow_exception(f);
    }
  } else {
    for (std::size_t j = 0; j < probes.size(); ++j) losses[j] = evaluator.eval(probes[j]);
  }

  Matrix<double> out(layers, levels, 0.0);
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t i = 1; i < levels; ++i) {
      out(l, i) = std::max(0.0, losses[l * (levels - 1) + (i - 1)] - base);
    }
  }
  return ErrorTable(std::move(out));
}

}  // namespace sparsedp
