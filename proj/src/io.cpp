#include "sparsedp/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace sparsedp::io {
namespace {

const json& field(const json& j, const char* key) {
  if (!j.is_object()) throw MalformedInput("expected a JSON object");
  const auto it = j.find(key);
  if (it == j.end()) throw MalformedInput(std::string("missing field '") + key + "'");
  return *it;
}

double number(const json& j, const char* what) {
  if (!j.is_number()) throw MalformedInput(std::string(what) + " must be a number");
  return j.get<double>();
}

std::vector<double> numbers(const json& j, const char* what) {
  if (!j.is_array()) throw MalformedInput(std::string(what) + " must be an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(number(v, what));
  return out;
}

std::uint64_t unsigned_integer(const json& j, const char* what) {
  if (!j.is_number_unsigned()) {
    throw MalformedInput(std::string(what) + " must be a nonnegative integer");
  }
  return j.get<std::uint64_t>();
}

const json& layers_array(const json& j) {
  const json& layers = field(j, "layers");
  if (!layers.is_array() || layers.empty()) {
    throw MalformedInput("'layers' must be a non-empty array");
  }
  return layers;
}

}  // namespace

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MalformedInput("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw MalformedInput(path.string() + ": " + e.what());
  }
}

TimingTable timing_from_json(const json& j) {
  const double base = number(field(j, "base_time_s"), "base_time_s");
  const json& g = field(j, "grid");
  const auto n_levels = unsigned_integer(field(g, "n_levels"), "grid.n_levels");
  SparsityGrid grid(number(field(g, "lower"), "grid.lower"),
                    number(field(g, "upper"), "grid.upper"), static_cast<int>(n_levels));
  const json& layers = layers_array(j);
  std::vector<std::string> names;
  Matrix<double> times(layers.size(), grid.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const json& layer = layers[l];
    const json& name = field(layer, "name");
    if (!name.is_string()) throw MalformedInput("layer name must be a string");
    names.push_back(name.get<std::string>());
    const auto row = numbers(field(layer, "times_s"), "times_s");
    if (row.size() != grid.size()) {
      throw MalformedInput("layer '" + names.back() + "' has " + std::to_string(row.size()) +
                           " times, grid has " + std::to_string(grid.size()) + " levels");
    }
    std::copy(row.begin(), row.end(), times.row(l).begin());
  }
  return TimingTable(std::move(names), std::move(times), base, std::move(grid));
}

json timing_to_json(const TimingTable& timing) {
  json layers = json::array();
  for (std::size_t l = 0; l < timing.layer_count(); ++l) {
    const auto row = timing.times().row(l);
    layers.push_back({{"name", timing.layer_names()[l]},
                      {"times_s", std::vector<double>(row.begin(), row.end())}});
  }
  const SparsityGrid& g = timing.grid();
  return {{"base_time_s", timing.base_time()},
          {"grid", {{"lower", g.lower()}, {"upper", g.upper()}, {"n_levels", g.n_levels()}}},
          {"layers", std::move(layers)}};
}

TimingTable load_timing(const std::filesystem::path& path) {
  return load_with(path, timing_from_json);
}

ErrorTable errors_from_json(const json& j) {
  const json& layers = layers_array(j);
  std::vector<std::vector<double>> rows;
  for (const auto& layer : layers) rows.push_back(numbers(field(layer, "errors"), "errors"));
  const std::size_t width = rows.front().size();
  Matrix<double> values(rows.size(), width);
  for (std::size_t l = 0; l < rows.size(); ++l) {
    if (rows[l].size() != width) throw MalformedInput("error rows differ in length");
    std::copy(rows[l].begin(), rows[l].end(), values.row(l).begin());
  }
  return ErrorTable(std::move(values));
}

json errors_to_json(const ErrorTable& err, const std::vector<std::string>& names) {
  json layers = json::array();
  for (std::size_t l = 0; l < err.layer_count(); ++l) {
    const auto row = err.values().row(l);
    layers.push_back({{"name", l < names.size() ? names[l] : "layer" + std::to_string(l)},
                      {"errors", std::vector<double>(row.begin(), row.end())}});
  }
  return {{"layers", std::move(layers)}};
}

SensitivityVector sensitivity_from_json(const json& j) {
  if (j.is_object() && j.contains("c")) return SensitivityVector(numbers(j["c"], "c"));
  return SensitivityVector(numbers(field(j, "c_star"), "c_star"));
}

LayerWeightStats stats_from_json(const json& j) {
  LayerWeightStats stats;
  for (const auto& layer : layers_array(j)) {
    LayerStats s;
    const json& name = field(layer, "name");
    if (!name.is_string()) throw MalformedInput("layer name must be a string");
    s.name = name.get<std::string>();
    s.count = static_cast<std::int64_t>(unsigned_integer(field(layer, "count"), "count"));
    s.abs_quantiles = numbers(field(layer, "abs_quantiles"), "abs_quantiles");
    s.validate();
    stats.layers.push_back(std::move(s));
  }
  return stats;
}

json stats_to_json(const LayerWeightStats& stats) {
  json layers = json::array();
  for (const auto& s : stats.layers) {
    layers.push_back({{"name", s.name}, {"count", s.count}, {"abs_quantiles", s.abs_quantiles}});
  }
  return {{"layers", std::move(layers)}};
}

SyntheticLossSpec loss_spec_from_json(const json& j) {
  SyntheticLossSpec spec;
  spec.amplitudes = numbers(field(j, "amplitudes"), "amplitudes");
  spec.exponents = numbers(field(j, "exponents"), "exponents");
  if (j.contains("couplings")) spec.couplings = numbers(j["couplings"], "couplings");
  if (j.contains("seed")) spec.seed = unsigned_integer(j["seed"], "seed");
  spec.validate();
  return spec;
}

json loss_spec_to_json(const SyntheticLossSpec& spec) {
  return {{"amplitudes", spec.amplitudes},
          {"exponents", spec.exponents},
          {"couplings", spec.couplings},
          {"seed", spec.seed}};
}

SyntheticTimingSpec timing_spec_from_json(const json& j) {
  SyntheticTimingSpec spec;
  spec.dense_times = numbers(field(j, "dense_times_s"), "dense_times_s");
  spec.exponents = numbers(field(j, "exponents"), "exponents");
  spec.floors = numbers(field(j, "floors"), "floors");
  if (j.contains("jitter")) spec.jitter = number(j["jitter"], "jitter");
  if (j.contains("low_sparsity_overhead")) {
    spec.low_sparsity_overhead = number(j["low_sparsity_overhead"], "low_sparsity_overhead");
  }
  if (j.contains("base_time_s")) spec.base_time = number(j["base_time_s"], "base_time_s");
  if (j.contains("seed")) spec.seed = unsigned_integer(j["seed"], "seed");
  spec.validate();
  return spec;
}

json timing_spec_to_json(const SyntheticTimingSpec& spec) {
  return {{"dense_times_s", spec.dense_times},
          {"exponents", spec.exponents},
          {"floors", spec.floors},
          {"jitter", spec.jitter},
          {"low_sparsity_overhead", spec.low_sparsity_overhead},
          {"base_time_s", spec.base_time},
          {"seed", spec.seed}};
}

json solution_to_json(const DpSolution& sol, const TimingTable& timing) {
  return {{"choices", sol.profile.choices},
          {"sparsities", profile_sparsities(sol.profile, timing.grid())},
          {"total_error", sol.total_error},
          {"total_time_s", profile_time(sol.profile, timing)},
          {"feasible", sol.feasible}};
}

json baseline_to_json(const BaselineResult& result, const TimingTable& timing) {
  return {{"strategy", result.strategy},
          {"choices", result.profile.choices},
          {"sparsities", profile_sparsities(result.profile, timing.grid())},
          {"total_error", 0.0},
          {"total_time_s", result.total_time_s},
          {"feasible", true}};
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << contents;
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace sparsedp::io
