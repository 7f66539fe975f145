#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sparsedp {

// Dense row-major matrix. Rows are layers, columns are grid indices (or time
// buckets for the DP tables).
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  const std::vector<T>& data() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

// Ordered sparsity choices shared by every layer. Index 0 is the dense choice;
// the remaining levels are geometric in density:
//   levels[1 + i] = 1 - (1 - lower) * ratio^i,  i = 0 .. n_levels - 1.
class SparsityGrid {
 public:
  SparsityGrid(double lower, double upper, int n_levels);

  std::size_t size() const { return levels_.size(); }
  double operator[](std::size_t i) const { return levels_[i]; }
  std::span<const double> levels() const { return levels_; }

  // Density decay factor between consecutive non-dense levels.
  double ratio() const { return ratio_; }
  double lower() const { return lower_; }
  double upper() const { return upper_; }
  int n_levels() const { return n_levels_; }

  friend bool operator==(const SparsityGrid&, const SparsityGrid&) = default;

 private:
  double lower_;
  double upper_;
  int n_levels_;
  double ratio_;
  std::vector<double> levels_;
};

SparsityGrid make_grid(double lower, double upper, int n_levels);

// Per-layer runtimes (seconds) at every grid level, plus the runtime of
// everything pruning does not touch.
class TimingTable {
 public:
  TimingTable(std::vector<std::string> layer_names, Matrix<double> times, double base_time,
              SparsityGrid grid);

  std::size_t layer_count() const { return times_.rows(); }
  std::size_t level_count() const { return times_.cols(); }
  const std::vector<std::string>& layer_names() const { return names_; }
  const Matrix<double>& times() const { return times_; }
  double time(std::size_t layer, std::size_t level) const { return times_(layer, level); }
  double base_time() const { return base_time_; }
  const SparsityGrid& grid() const { return grid_; }

  double dense_layer_total() const;
  double dense_total() const { return base_time_ + dense_layer_total(); }

 private:
  std::vector<std::string> names_;
  Matrix<double> times_;
  double base_time_;
  SparsityGrid grid_;
};

struct TimeBudget {
  double seconds = 0.0;  // target time for the prunable layers only
  double speedup = 1.0;
};

TimeBudget time_budget(const TimingTable& timing, double speedup);

struct DiscreteTimings {
  Matrix<std::int64_t> buckets;
  std::int64_t bucket_count = 0;
  double bucket_width = 0.0;

  std::size_t layer_count() const { return buckets.rows(); }
  std::size_t level_count() const { return buckets.cols(); }
};

inline constexpr std::int64_t kDefaultBucketCount = 10'000;

DiscreteTimings discretize(const TimingTable& timing, const TimeBudget& budget,
                           std::int64_t bucket_count = kDefaultBucketCount);

struct Profile {
  std::vector<int> choices;

  static Profile dense(std::size_t layers) { return Profile{std::vector<int>(layers, 0)}; }
  std::size_t size() const { return choices.size(); }
  friend bool operator==(const Profile&, const Profile&) = default;
  friend auto operator<=>(const Profile&, const Profile&) = default;
};

// Throws InvalidArgument unless the profile has one in-range index per layer.
void validate_profile(const Profile& p, std::size_t layers, std::size_t levels);

std::vector<double> profile_sparsities(const Profile& p, const SparsityGrid& grid);

// Layers pinned to the dense choice.
class SkipList {
 public:
  SkipList() = default;
  SkipList(std::set<std::size_t> pinned, std::size_t layers);

  static SkipList none() { return {}; }
  static SkipList first_last(std::size_t layers);
  // Accepts "none", "first", "last", "first,last" or explicit indices "0,3,7".
  static SkipList parse(std::string_view spec, std::size_t layers);

  bool pinned(std::size_t layer) const { return pinned_.contains(layer); }
  const std::set<std::size_t>& indices() const { return pinned_; }

 private:
  std::set<std::size_t> pinned_;
};

double profile_time(const Profile& p, const TimingTable& timing);
std::int64_t profile_buckets(const Profile& p, const DiscreteTimings& dt);

}  // namespace sparsedp
