#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "sparsedp/core.hpp"
#include "sparsedp/dp_solver.hpp"
#include "sparsedp/error_models.hpp"
#include "sparsedp/evaluators.hpp"

namespace sparsedp {

// Synthetic per-layer speedup curves:
//   c_l(s) = min(1, max(floor_l, (1 + eps_l) * (1 - s)^beta_l))
//   t_l(s) = dense_l * c_l(s) * g_l(s)
// where eps_l is a seeded multiplicative jitter in [-jitter, +jitter] drawn
// once per layer and never applied at the dense index. Without a low-sparsity
// overhead g = 1. With overhead o > 0,
//   g_l(s) = 1 + k_l * ((1 - s) / (1 - levels[1]))^8,  k_l = (1 + o) / c_l(levels[1]) - 1,
// so the first sparse level runs at (1 + o) * dense and the penalty fades
// quickly with sparsity. Curves are non-increasing on indices >= 1.
struct SyntheticTimingSpec {
  std::vector<double> dense_times;
  std::vector<double> exponents;  // beta_l > 0
  std::vector<double> floors;     // floor_l in [0, 1)
  double jitter = 0.02;           // at most 0.02
  double low_sparsity_overhead = 0.0;
  double base_time = 0.0;
  std::uint64_t seed = 0;

  std::size_t layer_count() const { return dense_times.size(); }
  void validate() const;
};

TimingTable gen_timings(const SyntheticTimingSpec& spec, const SparsityGrid& grid);

// Random but plausible spec: dense times spread over two orders of magnitude,
// exponents in [0.3, 1.5] and floors in [0.05, 0.35].
SyntheticTimingSpec random_timing_spec(std::size_t layers, std::uint64_t seed);

// Ground-truth loss surfaces over grid indices x_l = i_l / (|S| - 1):
//   additive: sum_l a_l * x_l^p_l
//   coupled:  additive + sum_l gamma_l * x_l * x_{l+1}
struct SyntheticLossSpec {
  std::vector<double> amplitudes;  // a_l >= 0
  std::vector<double> exponents;   // p_l >= 1
  std::vector<double> couplings;   // gamma_l >= 0, size L - 1 (or empty)
  std::uint64_t seed = 0;

  std::size_t layer_count() const { return amplitudes.size(); }
  void validate() const;
};

// Amplitudes in [0.1, 1], exponents in [1, 3], couplings in
// [0, coupling_scale].
SyntheticLossSpec random_loss_spec(std::size_t layers, std::uint64_t seed,
                                   double coupling_scale = 0.0);

// Same as random_loss_spec with every exponent fixed to 2, so the true
// per-layer errors are exactly a quadratic model.
SyntheticLossSpec quadratic_loss_spec(std::size_t layers, std::uint64_t seed);

class SyntheticLoss final : public Evaluator {
 public:
  SyntheticLoss(SyntheticLossSpec spec, std::size_t levels, bool coupled);

  double eval(const Profile& p) override;
  std::size_t layer_count() const override { return spec_.layer_count(); }
  std::size_t level_count() const override { return levels_; }
  Concurrency concurrency() const override { return Concurrency::concurrent_safe; }

  const SyntheticLossSpec& spec() const { return spec_; }
  bool coupled() const { return coupled_; }
  // a_l * x^p_l for one layer, the exact single-layer error of both surfaces.
  double layer_term(std::size_t layer, int level) const;

 private:
  SyntheticLossSpec spec_;
  std::size_t levels_;
  bool coupled_;
};

std::unique_ptr<SyntheticLoss> additive_loss(const SyntheticLossSpec& spec,
                                             const SparsityGrid& grid);
std::unique_ptr<SyntheticLoss> coupled_loss(const SyntheticLossSpec& spec,
                                            const SparsityGrid& grid);

// The additive surface's per-layer terms as an error table.
ErrorTable true_layer_errors(const SyntheticLossSpec& spec, const SparsityGrid& grid);

// Half-normal magnitude statistics with per-layer scale sigma_l; the quantile
// table is the analytic half-normal quantile sigma * sqrt(2) * erfinv(u),
// with the u = 1 knot capped at the 1 - 1/(2n) quantile.
LayerWeightStats half_normal_stats(const std::vector<double>& sigmas,
                                   const std::vector<std::int64_t>& counts);

// Random sigmas in [0.01, 0.1] and counts in [1e3, 1e6] (log-uniform).
LayerWeightStats random_weight_stats(std::size_t layers, std::uint64_t seed);

}  // namespace sparsedp
