#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "doctest.h"
#include "sparsedp/errors.hpp"
#include "sparsedp/search.hpp"
#include "sparsedp/testbed.hpp"

using namespace sparsedp;

namespace {

struct Instance {
  SparsityGrid grid;
  TimingTable timing;
  TimeBudget budget;
  DiscreteTimings dt;
};

Instance make_instance(std::size_t layers, int n_levels, double speedup, std::uint64_t seed) {
  auto grid = make_grid(0.4, 0.99, n_levels);
  auto timing = gen_timings(random_timing_spec(layers, seed), grid);
  const auto budget = time_budget(timing, speedup);
  auto dt = discretize(timing, budget);
  return {grid, std::move(timing), budget, std::move(dt)};
}

void check_trace(const SearchResult& r, const DiscreteTimings& dt, const SkipList& skip) {
  REQUIRE_FALSE(r.trace.rows.empty());
  double best = r.trace.rows.front().best_score;
  std::uint64_t index = 0;
  for (const auto& row : r.trace.rows) {
    CHECK(row.eval_index > index);
    index = row.eval_index;
    CHECK(row.best_score <= best);
    best = row.best_score;
    CHECK(row.best_score <= row.candidate_score);
    CHECK(profile_buckets(row.profile, dt) <= dt.bucket_count);
    for (std::size_t l : skip.indices()) CHECK(row.profile.choices[l] == 0);
  }
  CHECK(r.score == best);
  CHECK(profile_buckets(r.profile, dt) <= dt.bucket_count);
  CHECK(r.total_buckets == profile_buckets(r.profile, dt));
}

bool same_trace(const SearchTrace& a, const SearchTrace& b) {
  if (a.strategy != b.strategy || a.rows.size() != b.rows.size()) return false;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const auto& x = a.rows[i];
    const auto& y = b.rows[i];
    if (x.eval_index != y.eval_index || x.phase != y.phase || x.candidate_score != y.candidate_score ||
        x.best_score != y.best_score || x.evaluations != y.evaluations || x.profile != y.profile) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("single layer: all strategies return the minimal feasible index") {
  const auto inst = make_instance(1, 9, 2.0, 3);
  const auto spec = random_loss_spec(1, 3);
  auto loss = additive_loss(spec, inst.grid);
  int expect = -1;
  for (std::size_t i = 0; i < inst.grid.size(); ++i) {
    if (inst.dt.buckets(0, i) <= inst.dt.bucket_count) {
      expect = static_cast<int>(i);
      break;
    }
  }
  REQUIRE(expect > 0);
  SearchParams sp;
  sp.trials = 10;
  GeneticParams gp;
  gp.max_generations = 5;
  const auto a = spdy_search(*loss, inst.timing, inst.budget, SkipList::none(), sp);
  const auto b = direct_search(*loss, inst.timing, inst.budget, SkipList::none(), sp);
  const auto c = genetic_search(*loss, inst.timing, inst.budget, SkipList::none(), gp);
  CHECK(a.profile.choices == std::vector<int>{expect});
  CHECK(b.profile == a.profile);
  CHECK(c.profile == a.profile);
  REQUIRE(a.c_star.has_value());
  CHECK(a.c_star->size() == 1);
}

TEST_CASE("coefficient search: schedule, feasibility and determinism") {
  const auto inst = make_instance(12, 9, 2.0, 7);
  auto loss = coupled_loss(random_loss_spec(12, 7, 1.0), inst.grid);
  const auto skip = SkipList::first_last(12);
  SearchParams p;
  p.trials = 15;
  p.seed = 42;
  p.use_cache = false;
  const auto a = spdy_search(*loss, inst.timing, inst.budget, skip, p);
  const auto b = spdy_search(*loss, inst.timing, inst.budget, skip, p);
  check_trace(a, inst.dt, skip);
  CHECK(same_trace(a.trace, b.trace));
  CHECK(a.c_star == b.c_star);
  CHECK(a.trace.strategy == "spdy");
  // ceil(0.1 * 12) = 2 neighbourhood sizes after the initial phase.
  CHECK(spdy_candidate_count(12, p) == 15 * 3 + 1);
  CHECK(a.trace.rows.size() == spdy_candidate_count(12, p));
  CHECK(a.evaluations == a.trace.rows.size());
  CHECK(a.solution.has_value());
  CHECK(a.solution->profile == a.profile);

  p.seed = 43;
  const auto c = spdy_search(*loss, inst.timing, inst.budget, skip, p);
  CHECK_FALSE(same_trace(a.trace, c.trace));
}

TEST_CASE("candidate count honours the shrink fraction") {
  SearchParams p;
  CHECK(spdy_candidate_count(30, p) == 100 * 4 + 1);
  CHECK(spdy_candidate_count(52, p) == 100 * 7 + 1);
  CHECK(spdy_candidate_count(1, p) == 100 * 2 + 1);
  p.shrink = 1.0;
  p.trials = 3;
  CHECK(spdy_candidate_count(5, p) == 3 * 6 + 1);
}

TEST_CASE("invalid parameters are rejected") {
  const auto inst = make_instance(4, 5, 1.5, 1);
  auto loss = additive_loss(random_loss_spec(4, 1), inst.grid);
  SearchParams p;
  p.trials = 0;
  CHECK_THROWS_AS(spdy_search(*loss, inst.timing, inst.budget, SkipList::none(), p), InvalidArgument);
  p.trials = 5;
  p.shrink = 0.0;
  CHECK_THROWS_AS(direct_search(*loss, inst.timing, inst.budget, SkipList::none(), p), InvalidArgument);
  p.shrink = 1.5;
  CHECK_THROWS_AS(spdy_search(*loss, inst.timing, inst.budget, SkipList::none(), p), InvalidArgument);
  GeneticParams g;
  g.population = 1;
  CHECK_THROWS_AS(genetic_search(*loss, inst.timing, inst.budget, SkipList::none(), g), InvalidArgument);
}

TEST_CASE("evaluation budget caps invocations") {
  const auto inst = make_instance(10, 9, 2.0, 11);
  auto loss = coupled_loss(random_loss_spec(10, 11, 1.0), inst.grid);
  SearchParams p;
  p.trials = 50;
  p.eval_budget = 37;
  GeneticParams g;
  g.eval_budget = 37;
  for (const auto& r : {spdy_search(*loss, inst.timing, inst.budget, SkipList::none(), p),
                        direct_search(*loss, inst.timing, inst.budget, SkipList::none(), p),
                        genetic_search(*loss, inst.timing, inst.budget, SkipList::none(), g)}) {
    CHECK(r.evaluations <= 37);
    CHECK(r.evaluations > 0);
    for (const auto& row : r.trace.rows) CHECK(row.evaluations <= 37);
  }
}

TEST_CASE("cache avoids repeated evaluations") {
  const auto inst = make_instance(6, 5, 1.3, 2);
  auto loss = additive_loss(random_loss_spec(6, 2), inst.grid);
  SearchParams p;
  p.trials = 30;
  const auto cached = spdy_search(*loss, inst.timing, inst.budget, SkipList::none(), p);
  p.use_cache = false;
  const auto raw = spdy_search(*loss, inst.timing, inst.budget, SkipList::none(), p);
  CHECK(cached.evaluations < raw.evaluations);
  CHECK(cached.profile == raw.profile);
  CHECK(cached.score == raw.score);
}

TEST_CASE("early stop ends a neighbourhood after k idle trials") {
  const auto inst = make_instance(10, 9, 2.0, 5);
  auto loss = additive_loss(random_loss_spec(10, 5), inst.grid);
  SearchParams p;
  p.trials = 8;
  p.early_stop = true;
  p.use_cache = false;
  const auto r = spdy_search(*loss, inst.timing, inst.budget, SkipList::none(), p);
  check_trace(r, inst.dt, SkipList::none());
  // Per phase: the run ends with exactly `trials` consecutive non-improvements.
  std::map<std::uint64_t, std::vector<bool>> improved;
  double best = INFINITY;
  for (const auto& row : r.trace.rows) {
    improved[row.phase].push_back(row.candidate_score < best);
    best = std::min(best, row.candidate_score);
  }
  for (auto& [phase, flags] : improved) {
    if (phase == 10) continue;  // phase-1 sampling uses the fixed count
    REQUIRE(flags.size() >= 8);
    for (std::size_t i = flags.size() - 8; i < flags.size(); ++i) CHECK_FALSE(flags[i]);
  }
}

TEST_CASE("direct search stays feasible and deterministic") {
  const auto inst = make_instance(12, 9, 2.0, 8);
  auto loss = coupled_loss(random_loss_spec(12, 8, 1.0), inst.grid);
  const auto skip = SkipList::first_last(12);
  SearchParams p;
  p.trials = 20;
  p.seed = 4;
  const auto a = direct_search(*loss, inst.timing, inst.budget, skip, p);
  const auto b = direct_search(*loss, inst.timing, inst.budget, skip, p);
  check_trace(a, inst.dt, skip);
  CHECK(same_trace(a.trace, b.trace));
  CHECK(a.trace.strategy == "direct");
  CHECK_FALSE(a.c_star.has_value());
}

TEST_CASE("genetic search stays feasible and deterministic") {
  const auto inst = make_instance(12, 9, 2.0, 9);
  auto loss = coupled_loss(random_loss_spec(12, 9, 1.0), inst.grid);
  const auto skip = SkipList::first_last(12);
  GeneticParams g;
  g.seed = 5;
  g.max_generations = 10;
  const auto a = genetic_search(*loss, inst.timing, inst.budget, skip, g);
  const auto b = genetic_search(*loss, inst.timing, inst.budget, skip, g);
  check_trace(a, inst.dt, skip);
  CHECK(same_trace(a.trace, b.trace));
  CHECK(a.trace.strategy == "ga");
  std::uint64_t max_gen = 0;
  for (const auto& row : a.trace.rows) max_gen = std::max(max_gen, row.phase);
  CHECK(max_gen <= 10);
}

TEST_CASE("genetic search approaches the additive optimum") {
  const auto inst = make_instance(10, 9, 1.5, 13);
  const auto spec = random_loss_spec(10, 13);
  auto loss = additive_loss(spec, inst.grid);
  const auto truth = solve_dp(true_layer_errors(spec, inst.grid), inst.dt, SkipList::none());
  GeneticParams g;
  g.eval_budget = 10000;
  const auto r = genetic_search(*loss, inst.timing, inst.budget, SkipList::none(), g);
  CHECK(r.score <= truth.total_error * 1.10 + 1e-12);
  CHECK(r.score >= truth.total_error - 1e-12);
}

TEST_CASE("coefficient search recovers quadratic optima") {
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto inst = make_instance(12, 9, 2.0, 100 + seed);
    const auto spec = quadratic_loss_spec(12, 200 + seed);
    auto loss = additive_loss(spec, inst.grid);
    const auto truth = solve_dp(true_layer_errors(spec, inst.grid), inst.dt, SkipList::none());
    SearchParams p;
    p.seed = seed;
    const auto r = spdy_search(*loss, inst.timing, inst.budget, SkipList::none(), p);
    if (r.score <= truth.total_error * 1.05) ++hits;
  }
  CHECK(hits >= 3);
}

TEST_CASE("evaluator failures abort with the partial trace") {
  class Failing final : public Evaluator {
   public:
    double eval(const Profile&) override {
      if (++calls > 5) throw EvaluatorError("boom");
      return static_cast<double>(calls);
    }
    std::size_t layer_count() const override { return 6; }
    std::size_t level_count() const override { return 5; }
    Concurrency concurrency() const override { return Concurrency::serial_only; }
    int calls = 0;
  };
  const auto inst = make_instance(6, 4, 1.5, 3);
  Failing f;
  SearchParams p;
  p.use_cache = false;
  try {
    spdy_search(f, inst.timing, inst.budget, SkipList::none(), p);
    FAIL("expected SearchAborted");
  } catch (const SearchAborted& e) {
    CHECK(e.partial().rows.size() == 5);
  }
}

TEST_CASE("infeasible budgets propagate") {
  auto grid = make_grid(0.4, 0.99, 5);
  auto spec = random_timing_spec(4, 1);
  for (auto& f : spec.floors) f = 0.9;
  const auto timing = gen_timings(spec, grid);
  const auto budget = time_budget(timing, 5.0);
  auto loss = additive_loss(random_loss_spec(4, 1), grid);
  CHECK_THROWS_AS(spdy_search(*loss, timing, budget, SkipList::none(), SearchParams{}), InfeasibleError);
  CHECK_THROWS_AS(direct_search(*loss, timing, budget, SkipList::none(), SearchParams{}), InfeasibleError);
  CHECK_THROWS_AS(genetic_search(*loss, timing, budget, SkipList::none(), GeneticParams{}), InfeasibleError);
}

TEST_CASE("trace csv format") {
  const auto inst = make_instance(4, 5, 1.5, 6);
  auto loss = additive_loss(random_loss_spec(4, 6), inst.grid);
  SearchParams p;
  p.trials = 2;
  const auto r = spdy_search(*loss, inst.timing, inst.budget, SkipList::none(), p);
  std::ostringstream out;
  write_trace_csv(out, r.trace);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "eval_index,strategy,d_or_generation,candidate_score,best_score");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 4);
    CHECK(line.find(",spdy,") != std::string::npos);
    ++rows;
  }
  CHECK(rows == r.trace.rows.size());
}
