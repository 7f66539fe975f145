#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "sparsedp/core.hpp"
#include "sparsedp/dp_solver.hpp"
#include "sparsedp/rng.hpp"

namespace sparsedp::testing {

struct SmallInstance {
  ErrorTable errors;
  DiscreteTimings timings;
};

// Random discretized instance: integer bucket costs in [0, max_cost] and
// errors in [0, 1) with a zero dense column, budget in [1, max_budget].
inline SmallInstance random_instance(std::uint64_t seed, std::size_t max_layers,
                                     std::size_t max_levels, std::int64_t max_budget,
                                     std::int64_t max_cost = 20) {
  SplitMix64 rng(seed);
  const std::size_t layers = 1 + rng.below(max_layers);
  const std::size_t levels = 2 + rng.below(max_levels - 1);
  Matrix<double> err(layers, levels, 0.0);
  DiscreteTimings dt;
  dt.buckets = Matrix<std::int64_t>(layers, levels, 0);
  dt.bucket_count = 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(max_budget)));
  dt.bucket_width = 1.0;
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t s = 0; s < levels; ++s) {
      err(l, s) = s == 0 ? 0.0 : rng.uniform01();
      dt.buckets(l, s) = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(max_cost) + 1));
    }
  }
  return SmallInstance{ErrorTable(std::move(err)), std::move(dt)};
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sparsedp_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace sparsedp::testing
