#include "sparsedp/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "sparsedp/errors.hpp"

namespace sparsedp {

BaselineResult uniform_profile(const TimingTable& timing, const TimeBudget& budget,
                               const SkipList& skip) {
  const std::size_t layers = timing.layer_count();
  for (std::size_t i = 0; i < timing.level_count(); ++i) {
    Profile p = Profile::dense(layers);
    for (std::size_t l = 0; l < layers; ++l) {
      if (!skip.pinned(l)) p.choices[l] = static_cast<int>(i);
    }
    const double t = profile_time(p, timing);
    if (t <= budget.seconds) return BaselineResult{"uniform", std::move(p), t};
  }
  std::ostringstream msg;
  msg << "uniform baseline infeasible: even sparsity " << timing.grid()[timing.level_count() - 1]
      << " misses the " << budget.seconds << " s budget";
  throw InfeasibleError(msg.str());
}

int round_to_grid(double sparsity, const SparsityGrid& grid) {
  const auto levels = grid.levels();
  const auto it = std::lower_bound(levels.begin(), levels.end(), sparsity);
  if (it == levels.begin()) return 0;
  if (it == levels.end()) return static_cast<int>(levels.size() - 1);
  const auto hi = static_cast<int>(it - levels.begin());
  const double up = *it - sparsity;
  const double down = sparsity - *(it - 1);
  return up < down ? hi : hi - 1;
}

std::vector<double> gmp_sparsities(const LayerWeightStats& stats, double threshold) {
  std::vector<double> out;
  out.reserve(stats.layers.size());
  for (const auto& layer : stats.layers) out.push_back(layer.fraction_below(threshold));
  return out;
}

namespace {

Profile rounded_profile(const LayerWeightStats& stats, const SparsityGrid& grid,
                        const SkipList& skip, double threshold) {
  const auto sparsities = gmp_sparsities(stats, threshold);
  Profile p = Profile::dense(sparsities.size());
  for (std::size_t l = 0; l < sparsities.size(); ++l) {
    if (!skip.pinned(l)) p.choices[l] = round_to_grid(sparsities[l], grid);
  }
  return p;
}

}  // namespace

BaselineResult gmp_profile(const LayerWeightStats& stats, const TimingTable& timing,
                           const TimeBudget& budget, const SkipList& skip) {
  if (stats.layers.size() != timing.layer_count()) {
    throw InvalidArgument("weight stats cover " + std::to_string(stats.layers.size()) +
                          " layers, timing table has " + std::to_string(timing.layer_count()));
  }
  for (const auto& layer : stats.layers) layer.validate();
  const SparsityGrid& grid = timing.grid();
  auto fits = [&](double tau) {
    return profile_time(rounded_profile(stats, grid, skip, tau), timing) <= budget.seconds;
  };

  std::vector<double> knots;
  for (const auto& layer : stats.layers) {
    knots.insert(knots.end(), layer.abs_quantiles.begin(), layer.abs_quantiles.end());
  }
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

  // Above the largest knot every layer is fully below the threshold.
  const double top = std::nextafter(knots.back(), std::numeric_limits<double>::infinity());
  auto finish = [&](double tau) {
    Profile p = rounded_profile(stats, grid, skip, tau);
    const double t = profile_time(p, timing);
    return BaselineResult{"gmp", std::move(p), t};
  };
  if (fits(0.0)) return finish(0.0);
  if (!fits(top)) {
    std::ostringstream msg;
    msg << "gmp baseline infeasible: pruning at the maximum magnitude misses the "
        << budget.seconds << " s budget";
    throw InfeasibleError(msg.str());
  }

  // Smallest knot that fits (or `top`), then bisect within the preceding gap.
  std::size_t lo_i = 0;
  std::size_t hi_i = knots.size();  // index knots.size() stands for `top`
  auto knot = [&](std::size_t i) { return i == knots.size() ? top : knots[i]; };
  if (fits(knot(0))) return finish(knot(0));
  while (hi_i - lo_i > 1) {
    const std::size_t mid = lo_i + (hi_i - lo_i) / 2;
    if (fits(knot(mid))) {
      hi_i = mid;
    } else {
      lo_i = mid;
    }
  }
  double lo = knot(lo_i);
  double hi = knot(hi_i);
  while (hi - lo > 1e-6 * hi) {
    const double mid = 0.5 * (lo + hi);
    if (fits(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return finish(hi);
}

}  // namespace sparsedp
