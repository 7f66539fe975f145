#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sparsedp/core.hpp"
#include "sparsedp/dp_solver.hpp"
#include "sparsedp/evaluators.hpp"

namespace sparsedp {

// Per-layer sensitivity coefficients, each in [0, 1].
class SensitivityVector {
 public:
  explicit SensitivityVector(std::vector<double> coeffs);

  std::size_t size() const { return coeffs_.size(); }
  double operator[](std::size_t l) const { return coeffs_[l]; }
  const std::vector<double>& coeffs() const { return coeffs_; }

  friend bool operator==(const SensitivityVector&, const SensitivityVector&) = default;

 private:
  std::vector<double> coeffs_;
};

inline constexpr std::size_t kQuantilePoints = 1001;

// Magnitude distribution of one layer summarized as |w| quantiles at
// u = k / 1000, k = 0..1000. Between knots the quantile function is linear.
struct LayerStats {
  std::string name;
  std::int64_t count = 1;
  std::vector<double> abs_quantiles;

  // Builds the table from raw weights: knot u takes the largest of the
  // ceil(u * n) smallest magnitudes (the smallest magnitude at u = 0).
  static LayerStats from_weights(std::string name, std::span<const double> weights);

  void validate() const;
  // q(u): |w| below which a fraction u of the weights lies.
  double quantile(double u) const;
  // Fraction of weights with |w| < tau under the interpolated quantile function.
  double fraction_below(double tau) const;
  // Integral of q(v)^2 for v in [0, u].
  double squared_mass(double u) const;
};

struct LayerWeightStats {
  std::vector<LayerStats> layers;
};

// errors[l][i] = c_l * (i / (|S| - 1))^2, i being the grid index.
ErrorTable quadratic_errors(const SensitivityVector& c, const SparsityGrid& grid);

// Sum of squared pruned magnitudes: count * integral of q^2 up to the level.
// `normalized` divides by the layer's element count.
ErrorTable squared_weight_errors(const LayerWeightStats& stats, const SparsityGrid& grid,
                                 bool normalized);

// Largest dropped magnitude divided by remaining density; 0 at the dense level.
ErrorTable custom_norm_errors(const LayerWeightStats& stats, const SparsityGrid& grid);

// Loss increase from pruning one layer alone, relative to `reference`
// (normally all-dense). Negative deltas clamp to 0. Uses
// L * (|S| - 1) + 1 evaluations, spread over threads when the evaluator is
// concurrent-safe.
ErrorTable layerwise_loss_errors(Evaluator& evaluator, const SparsityGrid& grid,
                                 const Profile& reference);

}  // namespace sparsedp
