#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "sparsedp/baselines.hpp"
#include "sparsedp/core.hpp"
#include "sparsedp/dp_solver.hpp"
#include "sparsedp/error_models.hpp"
#include "sparsedp/errors.hpp"
#include "sparsedp/testbed.hpp"

namespace sparsedp::io {

using nlohmann::json;

// All loaders throw MalformedInput naming the file and the offending field.
json read_json_file(const std::filesystem::path& path);

// {"base_time_s": f, "grid": {"lower": f, "upper": f, "n_levels": n},
//  "layers": [{"name": s, "times_s": [f; |S|]}]}
TimingTable timing_from_json(const json& j);
json timing_to_json(const TimingTable& timing);
TimingTable load_timing(const std::filesystem::path& path);

// {"layers": [{"name": s, "errors": [f; |S|]}]}
ErrorTable errors_from_json(const json& j);
json errors_to_json(const ErrorTable& err, const std::vector<std::string>& names);

// {"c": [f]}; a search result's "c_star" is accepted as well.
SensitivityVector sensitivity_from_json(const json& j);

// {"layers": [{"name": s, "count": n, "abs_quantiles": [f; 1001]}]}
LayerWeightStats stats_from_json(const json& j);
json stats_to_json(const LayerWeightStats& stats);

// {"amplitudes": [f], "exponents": [f], "couplings": [f], "seed": n}
SyntheticLossSpec loss_spec_from_json(const json& j);
json loss_spec_to_json(const SyntheticLossSpec& spec);

// {"dense_times_s": [f], "exponents": [f], "floors": [f], "jitter": f,
//  "low_sparsity_overhead": f, "base_time_s": f, "seed": n}
SyntheticTimingSpec timing_spec_from_json(const json& j);
json timing_spec_to_json(const SyntheticTimingSpec& spec);

// {"choices": [n], "sparsities": [f], "total_error": f, "total_time_s": f,
//  "feasible": b}
json solution_to_json(const DpSolution& sol, const TimingTable& timing);
// Same shape with "strategy"; total_error is 0 for baselines.
json baseline_to_json(const BaselineResult& result, const TimingTable& timing);

// Loads `path` with `parse`, converting schema violations to MalformedInput.
template <typename Parse>
auto load_with(const std::filesystem::path& path, Parse&& parse) {
  const json j = read_json_file(path);
  try {
    return parse(j);
  } catch (const MalformedInput& e) {
    throw MalformedInput(path.string() + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw MalformedInput(path.string() + ": " + e.what());
  } catch (const json::exception& e) {
    throw MalformedInput(path.string() + ": " + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace sparsedp::io
