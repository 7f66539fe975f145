#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "sparsedp/errors.hpp"
#include "sparsedp/io.hpp"
#include "sparsedp/rng.hpp"
#include "sparsedp/testbed.hpp"

using namespace sparsedp;

TEST_CASE("dense index carries exactly the dense time") {
  const auto grid = make_grid(0.4, 0.99, 41);
  const auto spec = random_timing_spec(12, 4);
  const auto timing = gen_timings(spec, grid);
  for (std::size_t l = 0; l < 12; ++l) CHECK(timing.time(l, 0) == spec.dense_times[l]);
}

TEST_CASE("linear curve without jitter halves at s = 0.5") {
  SyntheticTimingSpec spec;
  spec.dense_times = {0.01};
  spec.exponents = {1.0};
  spec.floors = {0.0};
  spec.jitter = 0.0;
  const auto grid = make_grid(0.5, 0.75, 2);
  const auto timing = gen_timings(spec, grid);
  CHECK(timing.time(0, 1) == doctest::Approx(0.005).epsilon(1e-15));
  CHECK(timing.time(0, 2) == doctest::Approx(0.0025).epsilon(1e-15));
}

TEST_CASE("generated curves are monotone and respect their floors") {
  const auto grid = make_grid(0.4, 0.99, 41);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto spec = random_timing_spec(10, seed);
    const auto timing = gen_timings(spec, grid);
    for (std::size_t l = 0; l < 10; ++l) {
      const double dense = spec.dense_times[l];
      for (std::size_t i = 1; i < grid.size(); ++i) {
        CHECK(timing.time(l, i) <= timing.time(l, i - 1));
        CHECK(timing.time(l, i) >= spec.floors[l] * dense);
      }
    }
  }
}

TEST_CASE("low-sparsity overhead makes the first sparse level slower") {
  const auto grid = make_grid(0.4, 0.99, 41);
  auto spec = random_timing_spec(8, 17);
  spec.low_sparsity_overhead = 0.8;
  const auto timing = gen_timings(spec, grid);
  for (std::size_t l = 0; l < 8; ++l) {
    CHECK(timing.time(l, 1) >= timing.time(l, 0));
    for (std::size_t i = 2; i < grid.size(); ++i) CHECK(timing.time(l, i) <= timing.time(l, i - 1));
    CHECK(timing.time(l, grid.size() - 1) < timing.time(l, 0));
  }
}

TEST_CASE("jitter stays within two percent") {
  const auto grid = make_grid(0.4, 0.99, 41);
  auto spec = random_timing_spec(30, 5);
  auto clean = spec;
  clean.jitter = 0.0;
  const auto a = gen_timings(spec, grid);
  const auto b = gen_timings(clean, grid);
  bool any_differs = false;
  for (std::size_t l = 0; l < 30; ++l) {
    for (std::size_t i = 1; i < grid.size(); ++i) {
      CHECK(a.time(l, i) <= b.time(l, i) * 1.02 + 1e-18);
      CHECK(a.time(l, i) >= b.time(l, i) * 0.98 - 1e-18);
      any_differs = any_differs || a.time(l, i) != b.time(l, i);
    }
  }
  CHECK(any_differs);
}

TEST_CASE("timing specs are validated") {
  SyntheticTimingSpec spec;
  spec.dense_times = {0.01};
  spec.exponents = {1.0};
  spec.floors = {0.0};
  spec.jitter = 0.05;
  CHECK_THROWS_AS(spec.validate(), InvalidArgument);
  spec.jitter = 0.0;
  spec.exponents = {0.0};
  CHECK_THROWS_AS(spec.validate(), InvalidArgument);
  spec.exponents = {1.0};
  spec.floors = {1.0};
  CHECK_THROWS_AS(spec.validate(), InvalidArgument);
  spec.floors = {0.1, 0.2};
  CHECK_THROWS_AS(spec.validate(), InvalidArgument);
}

TEST_CASE("generators are deterministic per seed") {
  const auto grid = make_grid(0.4, 0.99, 41);
  CHECK(gen_timings(random_timing_spec(9, 3), grid).times() ==
        gen_timings(random_timing_spec(9, 3), grid).times());
  CHECK(gen_timings(random_timing_spec(9, 3), grid).times() !=
        gen_timings(random_timing_spec(9, 4), grid).times());
  const auto a = random_loss_spec(9, 3, 1.0);
  const auto b = random_loss_spec(9, 3, 1.0);
  CHECK(a.amplitudes == b.amplitudes);
  CHECK(a.exponents == b.exponents);
  CHECK(a.couplings == b.couplings);
  CHECK(io::stats_to_json(random_weight_stats(4, 2)) == io::stats_to_json(random_weight_stats(4, 2)));
}

TEST_CASE("additive loss basics") {
  const auto grid = make_grid(0.4, 0.99, 9);
  const auto spec = random_loss_spec(6, 8);
  auto loss = additive_loss(spec, grid);
  CHECK(loss->eval(Profile::dense(6)) == 0.0);
  Profile p = Profile::dense(6);
  p.choices[3] = 5;
  CHECK(loss->eval(p) == loss->layer_term(3, 5));
  CHECK(loss->layer_term(3, 5) ==
        doctest::Approx(spec.amplitudes[3] * std::pow(5.0 / 9.0, spec.exponents[3])));
}

TEST_CASE("quadratic spec matches the quadratic error model") {
  const auto grid = make_grid(0.4, 0.99, 9);
  const auto spec = quadratic_loss_spec(5, 1);
  double amax = 0.0;
  for (double a : spec.amplitudes) amax = std::max(amax, a);
  std::vector<double> c;
  for (double a : spec.amplitudes) c.push_back(a / amax);
  const auto model = quadratic_errors(SensitivityVector(c), grid);
  const auto truth = true_layer_errors(spec, grid);
  for (std::size_t l = 0; l < 5; ++l) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      CHECK(truth(l, i) == doctest::Approx(amax * model(l, i)).epsilon(1e-12));
    }
  }
}

TEST_CASE("dp on true errors matches brute force over the additive loss") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const std::size_t layers = 2 + seed % 4;
    const auto grid = make_grid(0.4, 0.99, 3);
    const auto timing = gen_timings(random_timing_spec(layers, seed), grid);
    const auto budget = time_budget(timing, 1.5);
    const auto dt = discretize(timing, budget, 200);
    const auto spec = random_loss_spec(layers, seed + 100);
    auto loss = additive_loss(spec, grid);
    const auto dp = solve_dp(true_layer_errors(spec, grid), dt, SkipList::none());

    double best = INFINITY;
    Profile p = Profile::dense(layers);
    while (true) {
      if (profile_buckets(p, dt) <= dt.bucket_count) best = std::min(best, loss->eval(p));
      std::size_t k = 0;
      while (k < layers && ++p.choices[k] == static_cast<int>(grid.size())) p.choices[k++] = 0;
      if (k == layers) break;
    }
    CHECK(loss->eval(dp.profile) == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("coupled loss") {
  const auto grid = make_grid(0.4, 0.99, 4);
  auto spec = random_loss_spec(5, 12, 0.0);
  auto add = additive_loss(spec, grid);
  auto cpl = coupled_loss(spec, grid);
  SplitMix64 rng(1);
  for (int k = 0; k < 100; ++k) {
    Profile p = Profile::dense(5);
    for (auto& c : p.choices) c = static_cast<int>(rng.below(grid.size()));
    CHECK(cpl->eval(p) == add->eval(p));
  }

  spec = random_loss_spec(5, 12, 2.0);
  add = additive_loss(spec, grid);
  cpl = coupled_loss(spec, grid);
  Profile single = Profile::dense(5);
  single.choices[2] = 4;
  CHECK(cpl->eval(single) == add->eval(single));
  for (int k = 0; k < 200; ++k) {
    Profile p = Profile::dense(5);
    for (auto& c : p.choices) c = static_cast<int>(rng.below(grid.size()));
    const double before = cpl->eval(p);
    const std::size_t l = rng.below(5);
    if (p.choices[l] + 1 < static_cast<int>(grid.size())) {
      ++p.choices[l];
      CHECK(cpl->eval(p) >= before);
      CHECK(add->eval(p) >= add->eval(Profile::dense(5)));
    }
  }
}
