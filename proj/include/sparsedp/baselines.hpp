#pragma once

#include <string>

#include "sparsedp/core.hpp"
#include "sparsedp/error_models.hpp"

namespace sparsedp {

struct BaselineResult {
  std::string strategy;
  Profile profile;
  double total_time_s = 0.0;  // continuous layer time of the profile
};

// Smallest single grid index for all free layers that meets the continuous
// budget. Throws InfeasibleError when even the top level does not.
BaselineResult uniform_profile(const TimingTable& timing, const TimeBudget& budget,
                               const SkipList& skip);

// Nearest grid level by sparsity value; exact midpoints go to the lower level.
int round_to_grid(double sparsity, const SparsityGrid& grid);

// Per-layer sparsities implied by a global magnitude threshold, before rounding.
std::vector<double> gmp_sparsities(const LayerWeightStats& stats, double threshold);

// Global magnitude threshold profile: the smallest threshold whose rounded
// profile meets the continuous budget, found by bisection over the merged
// quantile knots and refined to 1e-6 relative resolution.
BaselineResult gmp_profile(const LayerWeightStats& stats, const TimingTable& timing,
                           const TimeBudget& budget, const SkipList& skip);

}  // namespace sparsedp
