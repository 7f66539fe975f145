#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sparsedp/core.hpp"
#include "sparsedp/dp_solver.hpp"
#include "sparsedp/error_models.hpp"
#include "sparsedp/errors.hpp"
#include "sparsedp/evaluators.hpp"

namespace sparsedp {

struct SearchParams {
  int trials = 100;     // k: candidates per phase
  double shrink = 0.1;  // initial neighbourhood is ceil(shrink * L) coordinates
  std::uint64_t seed = 0;
  // Cap on evaluator invocations after caching.
  std::optional<std::uint64_t> eval_budget;
  // Instead of exactly `trials` candidates per neighbourhood size, keep going
  // until `trials` consecutive candidates fail to improve.
  bool early_stop = false;
  bool use_cache = true;
  std::int64_t buckets = kDefaultBucketCount;
  std::uint64_t resample_cap = 10'000;

  void validate() const;
};

struct GeneticParams {
  std::size_t population = 50;
  std::size_t tournament = 2;
  double crossover = 0.5;
  double mutation = 0.1;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> eval_budget;
  std::size_t max_generations = 200;
  bool use_cache = true;
  std::int64_t buckets = kDefaultBucketCount;
  std::uint64_t resample_cap = 10'000;

  void validate() const;
};

struct TraceRow {
  std::uint64_t eval_index = 0;  // 1-based candidate counter
  std::uint64_t phase = 0;       // neighbourhood size d, or GA generation
  double candidate_score = 0.0;
  double best_score = 0.0;
  std::uint64_t evaluations = 0;  // evaluator invocations so far (post-cache)
  Profile profile;
};

struct SearchTrace {
  std::string strategy;
  std::vector<TraceRow> rows;
};

struct SearchResult {
  Profile profile;
  double score = 0.0;
  std::uint64_t evaluations = 0;
  std::int64_t total_buckets = 0;
  SearchTrace trace;
  std::optional<SensitivityVector> c_star;  // coefficient search only
  std::optional<DpSolution> solution;       // coefficient search only
};

// Raised when the evaluator fails mid-search; carries the trace so far.
class SearchAborted : public EvaluatorError {
 public:
  SearchAborted(const std::string& what, SearchTrace partial)
      : EvaluatorError(what), partial_(std::move(partial)) {}
  const SearchTrace& partial() const { return partial_; }

 private:
  SearchTrace partial_;
};

// Coefficient search: every candidate c in [0,1]^L is turned into a profile
// by solving the DP on quadratic_errors(c), so all candidates meet the budget.
// One initial sample plus `trials` random competitors, then for
// d = ceil(shrink * L) .. 1, `trials` mutations resampling d coordinates of
// the incumbent. Acceptance on strict improvement.
SearchResult spdy_search(Evaluator& evaluator, const TimingTable& timing,
                         const TimeBudget& budget, const SkipList& skip,
                         const SearchParams& params);

// Same schedule, but in grid-index space: mutations resample d genes uniformly
// in S until the candidate fits the discrete budget.
SearchResult direct_search(Evaluator& evaluator, const TimingTable& timing,
                           const TimeBudget& budget, const SkipList& skip,
                           const SearchParams& params);

// Generational GA with (mu + lambda) truncation survival. Infeasible children
// are repaired by resampling random genes toward faster levels.
SearchResult genetic_search(Evaluator& evaluator, const TimingTable& timing,
                            const TimeBudget& budget, const SkipList& skip,
                            const GeneticParams& params);

// Candidates evaluated by a full coefficient-search schedule, used to give
// the competitors equal budgets: trials * (1 + ceil(shrink * L)) + 1.
std::uint64_t spdy_candidate_count(std::size_t layers, const SearchParams& params);

// CSV header: eval_index,strategy,d_or_generation,candidate_score,best_score
void write_trace_csv(std::ostream& out, const SearchTrace& trace, bool header = true);

}  // namespace sparsedp
