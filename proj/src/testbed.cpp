#include "sparsedp/testbed.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <boost/math/special_functions/erf.hpp>

#include "sparsedp/errors.hpp"
#include "sparsedp/rng.hpp"

namespace sparsedp {
namespace {

double log_uniform(SplitMix64& rng, double lo, double hi) {
  return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

}  // namespace

void SyntheticTimingSpec::validate() const {
  const std::size_t n = dense_times.size();
  if (n == 0) throw InvalidArgument("timing spec has no layers");
  if (exponents.size() != n || floors.size() != n) {
    throw InvalidArgument("timing spec: per-layer arrays differ in length");
  }
  for (std::size_t l = 0; l < n; ++l) {
    if (!std::isfinite(dense_times[l]) || dense_times[l] < 0.0) {
      throw InvalidArgument("timing spec: dense time must be finite and >= 0");
    }
    if (!(exponents[l] > 0.0)) throw InvalidArgument("timing spec: exponent must be > 0");
    if (!(floors[l] >= 0.0 && floors[l] < 1.0)) {
      throw InvalidArgument("timing spec: floor must be in [0, 1)");
    }
  }
  if (!(jitter >= 0.0 && jitter <= 0.02)) throw InvalidArgument("timing spec: jitter must be in [0, 0.02]");
  if (!(low_sparsity_overhead >= 0.0)) throw InvalidArgument("timing spec: overhead must be >= 0");
  if (!(base_time >= 0.0)) throw InvalidArgument("timing spec: base time must be >= 0");
}

TimingTable gen_timings(const SyntheticTimingSpec& spec, const SparsityGrid& grid) {
  spec.validate();
  const std::size_t layers = spec.layer_count();
  SplitMix64 rng(spec.seed);
  Matrix<double> times(layers, grid.size(), 0.0);
  std::vector<std::string> names;
  names.reserve(layers);
  const double first_density = 1.0 - grid[1];
  for (std::size_t l = 0; l < layers; ++l) {
    names.push_back("layer" + std::to_string(l));
    const double eps = rng.uniform(-spec.jitter, spec.jitter);
    const double dense = spec.dense_times[l];
    times(l, 0) = dense;
    auto curve = [&](std::size_t i) {
      const double density = 1.0 - grid[i];
      return std::min(1.0, std::max(spec.floors[l], (1.0 + eps) * std::pow(density, spec.exponents[l])));
    };
    // Penalty scaled so the first sparse level lands at exactly (1 + o) * dense.
    const double lift = (1.0 + spec.low_sparsity_overhead) / curve(1) - 1.0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
      double factor = curve(i);
      if (spec.low_sparsity_overhead > 0.0) {
        factor *= 1.0 + lift * std::pow((1.0 - grid[i]) / first_density, 8.0);
      }
      times(l, i) = dense * factor;
    }
  }
  return TimingTable(std::move(names), std::move(times), spec.base_time, grid);
}

SyntheticTimingSpec random_timing_spec(std::size_t layers, std::uint64_t seed) {
  SplitMix64 rng(seed);
  SyntheticTimingSpec spec;
  spec.seed = rng.next();
  for (std::size_t l = 0; l < layers; ++l) {
    spec.dense_times.push_back(log_uniform(rng, 1e-4, 1e-2));
    spec.exponents.push_back(rng.uniform(0.3, 1.5));
    spec.floors.push_back(rng.uniform(0.05, 0.35));
  }
  return spec;
}

void SyntheticLossSpec::validate() const {
  const std::size_t n = amplitudes.size();
  if (n == 0) throw InvalidArgument("loss spec has no layers");
  if (exponents.size() != n) throw InvalidArgument("loss spec: exponents length mismatch");
  if (!couplings.empty() && couplings.size() != n - 1) {
    throw InvalidArgument("loss spec: couplings must have L - 1 entries");
  }
  for (std::size_t l = 0; l < n; ++l) {
    if (!std::isfinite(amplitudes[l]) || amplitudes[l] < 0.0) {
      throw InvalidArgument("loss spec: amplitudes must be finite and >= 0");
    }
    if (!std::isfinite(exponents[l]) || exponents[l] < 1.0) {
      throw InvalidArgument("loss spec: exponents must be >= 1");
    }
  }
  for (double g : couplings) {
    if (!std::isfinite(g) || g < 0.0) throw InvalidArgument("loss spec: couplings must be >= 0");
  }
}

SyntheticLossSpec random_loss_spec(std::size_t layers, std::uint64_t seed,
                                   double coupling_scale) {
  SplitMix64 rng(seed);
  SyntheticLossSpec spec;
  spec.seed = seed;
  for (std::size_t l = 0; l < layers; ++l) {
    spec.amplitudes.push_back(rng.uniform(0.1, 1.0));
    spec.exponents.push_back(rng.uniform(1.0, 3.0));
  }
  if (layers > 1) {
    for (std::size_t l = 0; l + 1 < layers; ++l) {
      spec.couplings.push_back(coupling_scale * rng.uniform01());
    }
  }
  return spec;
}

SyntheticLossSpec quadratic_loss_spec(std::size_t layers, std::uint64_t seed) {
  SyntheticLossSpec spec = random_loss_spec(layers, seed, 0.0);
  std::fill(spec.exponents.begin(), spec.exponents.end(), 2.0);
  return spec;
}

SyntheticLoss::SyntheticLoss(SyntheticLossSpec spec, std::size_t levels, bool coupled)
    : spec_(std::move(spec)), levels_(levels), coupled_(coupled) {
  spec_.validate();
  if (levels_ < 2) throw InvalidArgument("synthetic loss needs at least two levels");
}

double SyntheticLoss::layer_term(std::size_t layer, int level) const {
  const double x = static_cast<double>(level) / static_cast<double>(levels_ - 1);
  return spec_.amplitudes[layer] * std::pow(x, spec_.exponents[layer]);
}

double SyntheticLoss::eval(const Profile& p) {
  validate_profile(p, layer_count(), levels_);
  double loss = 0.0;
  for (std::size_t l = 0; l < p.size(); ++l) loss += layer_term(l, p.choices[l]);
  if (coupled_) {
    const double top = static_cast<double>(levels_ - 1);
    for (std::size_t l = 0; l < spec_.couplings.size(); ++l) {
      loss += spec_.couplings[l] * static_cast<double>(p.choices[l]) *
              static_cast<double>(p.choices[l + 1]) / (top * top);
    }
  }
  return loss;
}

std::unique_ptr<SyntheticLoss> additive_loss(const SyntheticLossSpec& spec,
                                             const SparsityGrid& grid) {
  return std::make_unique<SyntheticLoss>(spec, grid.size(), false);
}

std::unique_ptr<SyntheticLoss> coupled_loss(const SyntheticLossSpec& spec,
                                            const SparsityGrid& grid) {
  return std::make_unique<SyntheticLoss>(spec, grid.size(), true);
}

ErrorTable true_layer_errors(const SyntheticLossSpec& spec, const SparsityGrid& grid) {
  const SyntheticLoss loss(spec, grid.size(), false);
  Matrix<double> out(spec.layer_count(), grid.size(), 0.0);
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    for (std::size_t i = 0; i < grid.size(); ++i) out(l, i) = loss.layer_term(l, static_cast<int>(i));
  }
  return ErrorTable(std::move(out));
}

LayerWeightStats half_normal_stats(const std::vector<double>& sigmas,
                                   const std::vector<std::int64_t>& counts) {
  if (sigmas.size() != counts.size()) throw InvalidArgument("sigmas and counts differ in length");
  LayerWeightStats stats;
  for (std::size_t l = 0; l < sigmas.size(); ++l) {
    if (!(sigmas[l] > 0.0) || counts[l] < 1) {
      throw InvalidArgument("half-normal stats need sigma > 0 and count >= 1");
    }
    LayerStats layer{"layer" + std::to_string(l), counts[l], {}};
    layer.abs_quantiles.resize(kQuantilePoints);
    const double top = 1.0 - 0.5 / static_cast<double>(counts[l]);
    for (std::size_t k = 0; k < kQuantilePoints; ++k) {
      const double u = std::min(static_cast<double>(k) / 1000.0, top);
      layer.abs_quantiles[k] = sigmas[l] * std::sqrt(2.0) * boost::math::erf_inv(u);
    }
    stats.layers.push_back(std::move(layer));
  }
  return stats;
}

LayerWeightStats random_weight_stats(std::size_t layers, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<double> sigmas;
  std::vector<std::int64_t> counts;
  for (std::size_t l = 0; l < layers; ++l) {
    sigmas.push_back(rng.uniform(0.01, 0.1));
    counts.push_back(static_cast<std::int64_t>(std::llround(log_uniform(rng, 1e3, 1e6))));
  }
  return half_normal_stats(sigmas, counts);
}

}  // namespace sparsedp
