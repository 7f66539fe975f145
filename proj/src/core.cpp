#include "sparsedp/core.hpp"

#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sparsedp/errors.hpp"

namespace sparsedp {

SparsityGrid::SparsityGrid(double lower, double upper, int n_levels)
    : lower_(lower), upper_(upper), n_levels_(n_levels), ratio_(1.0) {
  if (!(lower > 0.0)) throw InvalidArgument("make_grid: lower bound must be > 0");
  if (!(upper < 1.0)) throw InvalidArgument("make_grid: upper bound must be < 1");
  if (!(lower <= upper)) throw InvalidArgument("make_grid: lower bound must be <= upper bound");
  if (n_levels < 1) throw InvalidArgument("make_grid: n_levels must be >= 1");
  if (n_levels > 1 && !(lower < upper)) {
    throw InvalidArgument("make_grid: lower must be < upper when n_levels > 1");
  }

  levels_.reserve(static_cast<std::size_t>(n_levels) + 1);
  levels_.push_back(0.0);
  if (n_levels == 1) {
    levels_.push_back(lower);
    return;
  }
  ratio_ = std::pow((1.0 - upper) / (1.0 - lower), 1.0 / static_cast<double>(n_levels - 1));
  for (int i = 0; i < n_levels; ++i) {
    levels_.push_back(1.0 - (1.0 - lower) * std::pow(ratio_, static_cast<double>(i)));
  }
}

SparsityGrid make_grid(double lower, double upper, int n_levels) {
  return SparsityGrid(lower, upper, n_levels);
}

TimingTable::TimingTable(std::vector<std::string> layer_names, Matrix<double> times,
                         double base_time, SparsityGrid grid)
    : names_(std::move(layer_names)),
      times_(std::move(times)),
      base_time_(base_time),
      grid_(std::move(grid)) {
  if (times_.rows() == 0) throw InvalidArgument("timing table has no layers");
  if (names_.size() != times_.rows()) {
    throw InvalidArgument("timing table: " + std::to_string(names_.size()) + " names for " +
                          std::to_string(times_.rows()) + " layers");
  }
  if (times_.cols() != grid_.size()) {
    throw InvalidArgument("timing table: " + std::to_string(times_.cols()) +
                          " columns but grid has " + std::to_string(grid_.size()) + " levels");
  }
  if (!std::isfinite(base_time_) || base_time_ < 0.0) {
    throw InvalidArgument("timing table: base time must be finite and >= 0");
  }
  for (std::size_t l = 0; l < times_.rows(); ++l) {
    for (std::size_t j = 0; j < times_.cols(); ++j) {
      const double t = times_(l, j);
      if (!std::isfinite(t) || t < 0.0) {
        std::ostringstream msg;
        msg << "timing table: layer " << l << " (" << names_[l] << ") level " << j
            << " has invalid time " << t;
        throw InvalidArgument(msg.str());
      }
    }
  }
}

double TimingTable::dense_layer_total() const {
  double total = 0.0;
  for (std::size_t l = 0; l < times_.rows(); ++l) total += times_(l, 0);
  return total;
}

TimeBudget time_budget(const TimingTable& timing, double speedup) {
  if (!(speedup >= 1.0)) throw InvalidArgument("speedup must be >= 1");
  const double seconds = timing.dense_total() / speedup - timing.base_time();
  if (!(seconds > 0.0)) {
    std::ostringstream msg;
    msg << "speedup " << speedup << " unreachable: base time " << timing.base_time()
        << " s alone exceeds the target " << timing.dense_total() / speedup << " s";
    throw InfeasibleError(msg.str());
  }
  return TimeBudget{seconds, speedup};
}

DiscreteTimings discretize(const TimingTable& timing, const TimeBudget& budget,
                           std::int64_t bucket_count) {
  if (bucket_count < 1) throw InvalidArgument("bucket count must be >= 1");
  if (!(budget.seconds > 0.0)) throw InvalidArgument("time budget must be > 0");
  DiscreteTimings dt;
  dt.bucket_count = bucket_count;
  dt.bucket_width = budget.seconds / static_cast<double>(bucket_count);
  dt.buckets = Matrix<std::int64_t>(timing.layer_count(), timing.level_count());
  const double scale = static_cast<double>(bucket_count) / budget.seconds;
  for (std::size_t l = 0; l < timing.layer_count(); ++l) {
    for (std::size_t j = 0; j < timing.level_count(); ++j) {
      // std::round rounds halfway cases away from zero.
      dt.buckets(l, j) = static_cast<std::int64_t>(std::round(timing.time(l, j) * scale));
    }
  }
  return dt;
}

void validate_profile(const Profile& p, std::size_t layers, std::size_t levels) {
  if (p.size() != layers) {
    throw InvalidArgument("profile has " + std::to_string(p.size()) + " entries, expected " +
                          std::to_string(layers));
  }
  for (std::size_t l = 0; l < layers; ++l) {
    const int c = p.choices[l];
    if (c < 0 || static_cast<std::size_t>(c) >= levels) {
      throw InvalidArgument("profile entry " + std::to_string(l) + " = " + std::to_string(c) +
                            " outside [0, " + std::to_string(levels - 1) + "]");
    }
  }
}

std::vector<double> profile_sparsities(const Profile& p, const SparsityGrid& grid) {
  validate_profile(p, p.size(), grid.size());
  std::vector<double> out;
  out.reserve(p.size());
  for (int c : p.choices) out.push_back(grid[static_cast<std::size_t>(c)]);
  return out;
}

SkipList::SkipList(std::set<std::size_t> pinned, std::size_t layers) : pinned_(std::move(pinned)) {
  for (std::size_t l : pinned_) {
    if (l >= layers) {
      throw InvalidArgument("skip list index " + std::to_string(l) + " out of range for " +
                            std::to_string(layers) + " layers");
    }
  }
}

SkipList SkipList::first_last(std::size_t layers) {
  if (layers == 0) return {};
  return SkipList({0, layers - 1}, layers);
}

SkipList SkipList::parse(std::string_view spec, std::size_t layers) {
  if (spec.empty() || spec == "none") return {};
  std::set<std::size_t> pinned;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const std::size_t comma = spec.find(',', pos);
    std::string_view item =
        spec.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item == "first") {
      if (layers > 0) pinned.insert(0);
    } else if (item == "last") {
      if (layers > 0) pinned.insert(layers - 1);
    } else {
      std::size_t idx = 0;
      const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), idx);
      if (item.empty() || ec != std::errc() || end != item.data() + item.size()) {
        throw InvalidArgument("bad skip list entry '" + std::string(item) + "'");
      }
      pinned.insert(idx);
    }
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return SkipList(std::move(pinned), layers);
}

double profile_time(const Profile& p, const TimingTable& timing) {
  validate_profile(p, timing.layer_count(), timing.level_count());
  double total = 0.0;
  for (std::size_t l = 0; l < p.size(); ++l) {
    total += timing.time(l, static_cast<std::size_t>(p.choices[l]));
  }
  return total;
}

std::int64_t profile_buckets(const Profile& p, const DiscreteTimings& dt) {
  validate_profile(p, dt.layer_count(), dt.level_count());
  std::int64_t total = 0;
  for (std::size_t l = 0; l < p.size(); ++l) {
    total += dt.buckets(l, static_cast<std::size_t>(p.choices[l]));
  }
  return total;
}

}  // namespace sparsedp
