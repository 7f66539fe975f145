#include "sparsedp/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "sparsedp/format.hpp"
#include "sparsedp/rng.hpp"

namespace sparsedp {
namespace {

// Evaluator front-end that applies caching and the evaluation budget.
class Scorer {
 public:
  Scorer(Evaluator& inner, bool use_cache, std::optional<std::uint64_t> budget)
      : inner_(inner), budget_(budget) {
    if (use_cache) cache_.emplace(inner);
  }

  // nullopt when a fresh evaluation would exceed the budget.
  std::optional<double> score(const Profile& p) {
    const bool cached = cache_ && cache_->contains(p);
    if (!cached && budget_ && evaluations_ >= *budget_) return std::nullopt;
    const double s = cache_ ? cache_->eval(p) : inner_.eval(p);
    if (!cached) ++evaluations_;
    return s;
  }

  std::uint64_t evaluations() const { return evaluations_; }

 private:
  Evaluator& inner_;
  std::optional<EvalCache> cache_;
  std::optional<std::uint64_t> budget_;
  std::uint64_t evaluations_ = 0;
};

class Recorder {
 public:
  explicit Recorder(std::string strategy) { trace_.strategy = std::move(strategy); }

  void add(std::uint64_t phase, double candidate, double best, std::uint64_t evaluations,
           const Profile& profile) {
    trace_.rows.push_back(TraceRow{next_++, phase, candidate, best, evaluations, profile});
  }

  SearchTrace& trace() { return trace_; }

 private:
  SearchTrace trace_;
  std::uint64_t next_ = 1;
};

void check_evaluator(const Evaluator& evaluator, const TimingTable& timing) {
  if (evaluator.layer_count() != timing.layer_count() ||
      evaluator.level_count() != timing.level_count()) {
    throw InvalidArgument("evaluator shape " + std::to_string(evaluator.layer_count()) + "x" +
                          std::to_string(evaluator.level_count()) +
                          " does not match timing table " +
                          std::to_string(timing.layer_count()) + "x" +
                          std::to_string(timing.level_count()));
  }
}

std::vector<std::size_t> free_layers(std::size_t layers, const SkipList& skip) {
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < layers; ++l) {
    if (!skip.pinned(l)) out.push_back(l);
  }
  return out;
}

std::size_t initial_neighbourhood(std::size_t layers, double shrink) {
  // The epsilon keeps e.g. 0.1 * 30 from rounding up to 4.
  const double x = shrink * static_cast<double>(layers);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(x - 1e-9)));
}

DiscreteTimings checked_discretize(const TimingTable& timing, const TimeBudget& budget,
                                   std::int64_t buckets, const SkipList& skip) {
  DiscreteTimings dt = discretize(timing, budget, buckets);
  const std::int64_t minimal = minimal_bucket_total(dt, skip);
  if (minimal > dt.bucket_count) {
    throw InfeasibleError("fastest profile needs " + std::to_string(minimal) +
                              " buckets, budget is " + std::to_string(dt.bucket_count),
                          minimal);
  }
  return dt;
}

// Uniform random profile over free genes, redrawn until it fits the budget.
Profile random_feasible(SplitMix64& rng, const DiscreteTimings& dt,
                        const std::vector<std::size_t>& free, std::uint64_t cap) {
  for (std::uint64_t attempt = 0; attempt < cap; ++attempt) {
    Profile p = Profile::dense(dt.layer_count());
    for (std::size_t l : free) p.choices[l] = static_cast<int>(rng.below(dt.level_count()));
    if (profile_buckets(p, dt) <= dt.bucket_count) return p;
  }
  throw InfeasibleError("no budget-feasible random profile found in " + std::to_string(cap) +
                        " attempts");
}

// Runs `trial` on the shrinking-neighbourhood schedule. `trial(d)` returns
// nullopt when the evaluation budget is spent, otherwise whether it improved.
template <typename Trial>
void shrinking_schedule(std::size_t d0, const SearchParams& params, Trial&& trial) {
  for (std::size_t d = d0; d >= 1; --d) {
    if (params.early_stop) {
      int fails = 0;
      while (fails < params.trials) {
        const auto improved = trial(d);
        if (!improved) return;
        fails = *improved ? 0 : fails + 1;
      }
    } else {
      for (int i = 0; i < params.trials; ++i) {
        if (!trial(d)) return;
      }
    }
  }
}

template <typename Body>
auto guarded(Recorder& recorder, Body&& body) {
  try {
    return body();
  } catch (const SearchAborted&) {
    throw;
  } catch (const EvaluatorError& e) {
    throw SearchAborted(e.what(), std::move(recorder.trace()));
  }
}

}  // namespace

void SearchParams::validate() const {
  if (trials < 1) throw InvalidArgument("search: k must be >= 1");
  if (!(shrink > 0.0 && shrink <= 1.0)) throw InvalidArgument("search: shrink must be in (0, 1]");
  if (buckets < 1) throw InvalidArgument("search: bucket count must be >= 1");
  if (resample_cap < 1) throw InvalidArgument("search: resample cap must be >= 1");
}

void GeneticParams::validate() const {
  if (population < 2) throw InvalidArgument("ga: population must be >= 2");
  if (tournament < 1) throw InvalidArgument("ga: tournament size must be >= 1");
  if (!(crossover >= 0.0 && crossover <= 1.0)) throw InvalidArgument("ga: crossover must be in [0, 1]");
  if (!(mutation >= 0.0 && mutation <= 1.0)) throw InvalidArgument("ga: mutation must be in [0, 1]");
  if (buckets < 1) throw InvalidArgument("ga: bucket count must be >= 1");
  if (resample_cap < 1) throw InvalidArgument("ga: resample cap must be >= 1");
}

std::uint64_t spdy_candidate_count(std::size_t layers, const SearchParams& params) {
  const auto k = static_cast<std::uint64_t>(params.trials);
  return k * (1 + initial_neighbourhood(layers, params.shrink)) + 1;
}

SearchResult spdy_search(Evaluator& evaluator, const TimingTable& timing,
                         const TimeBudget& budget, const SkipList& skip,
                         const SearchParams& params) {
  params.validate();
  check_evaluator(evaluator, timing);
  const std::size_t layers = timing.layer_count();
  const DiscreteTimings dt = checked_discretize(timing, budget, params.buckets, skip);
  const std::vector<std::size_t> free = free_layers(layers, skip);

  SplitMix64 rng(params.seed);
  Scorer scorer(evaluator, params.use_cache, params.eval_budget);
  Recorder recorder("spdy");

  auto random_coeffs = [&] {
    std::vector<double> c(layers);
    for (double& v : c) v = rng.uniform01();
    return c;
  };

  std::vector<double> best_c;
  DpSolution best_solution;
  double best_score = std::numeric_limits<double>::infinity();

  // Scores c; returns nullopt when out of budget, else whether c was accepted.
  auto consider = [&](std::vector<double> c, std::uint64_t phase) -> std::optional<bool> {
    DpSolution sol = solve_dp(quadratic_errors(SensitivityVector(c), timing.grid()), dt, skip);
    const auto s = scorer.score(sol.profile);
    if (!s) return std::nullopt;
    const bool accept = best_c.empty() || *s < best_score;
    if (accept) best_score = *s;
    recorder.add(phase, *s, best_score, scorer.evaluations(), sol.profile);
    if (accept) {
      best_c = std::move(c);
      best_solution = std::move(sol);
    }
    return accept;
  };

  guarded(recorder, [&] {
    if (!consider(random_coeffs(), layers)) {
      throw InvalidArgument("search: evaluation budget allows no evaluations");
    }
    for (int i = 0; i < params.trials; ++i) {
      if (!consider(random_coeffs(), layers)) return 0;
    }
    if (free.empty()) return 0;
    const std::size_t d0 = std::min(initial_neighbourhood(layers, params.shrink), free.size());
    shrinking_schedule(d0, params, [&](std::size_t d) {
      std::vector<double> c = best_c;
      for (std::size_t j : rng.sample_distinct(free.size(), d)) c[free[j]] = rng.uniform01();
      return consider(std::move(c), d);
    });
    return 0;
  });

  SearchResult result;
  result.profile = best_solution.profile;
  result.score = best_score;
  result.evaluations = scorer.evaluations();
  result.total_buckets = best_solution.total_buckets;
  result.trace = std::move(recorder.trace());
  result.c_star = SensitivityVector(best_c);
  result.solution = best_solution;
  return result;
}

SearchResult direct_search(Evaluator& evaluator, const TimingTable& timing,
                           const TimeBudget& budget, const SkipList& skip,
                           const SearchParams& params) {
  params.validate();
  check_evaluator(evaluator, timing);
  const std::size_t layers = timing.layer_count();
  const std::size_t levels = timing.level_count();
  const DiscreteTimings dt = checked_discretize(timing, budget, params.buckets, skip);
  const std::vector<std::size_t> free = free_layers(layers, skip);

  SplitMix64 rng(params.seed);
  Scorer scorer(evaluator, params.use_cache, params.eval_budget);
  Recorder recorder("direct");

  std::optional<Profile> best;
  double best_score = std::numeric_limits<double>::infinity();

  auto consider = [&](const Profile& p, std::uint64_t phase) -> std::optional<bool> {
    const auto s = scorer.score(p);
    if (!s) return std::nullopt;
    const bool accept = !best || *s < best_score;
    if (accept) {
      best = p;
      best_score = *s;
    }
    recorder.add(phase, *s, best_score, scorer.evaluations(), p);
    return accept;
  };

  guarded(recorder, [&] {
    if (!consider(random_feasible(rng, dt, free, params.resample_cap), layers)) {
      throw InvalidArgument("search: evaluation budget allows no evaluations");
    }
    for (int i = 0; i < params.trials; ++i) {
      if (!consider(random_feasible(rng, dt, free, params.resample_cap), layers)) return 0;
    }
    if (free.empty()) return 0;
    const std::size_t d0 = std::min(initial_neighbourhood(layers, params.shrink), free.size());
    shrinking_schedule(d0, params, [&](std::size_t d) -> std::optional<bool> {
      for (std::uint64_t attempt = 0; attempt < params.resample_cap; ++attempt) {
        Profile candidate = *best;
        for (std::size_t j : rng.sample_distinct(free.size(), d)) {
          candidate.choices[free[j]] = static_cast<int>(rng.below(levels));
        }
        if (profile_buckets(candidate, dt) <= dt.bucket_count) return consider(candidate, d);
      }
      return false;  // no feasible mutation found; the trial is spent
    });
    return 0;
  });

  SearchResult result;
  result.profile = *best;
  result.score = best_score;
  result.evaluations = scorer.evaluations();
  result.total_buckets = profile_buckets(*best, dt);
  result.trace = std::move(recorder.trace());
  return result;
}

SearchResult genetic_search(Evaluator& evaluator, const TimingTable& timing,
                            const TimeBudget& budget, const SkipList& skip,
                            const GeneticParams& params) {
  params.validate();
  check_evaluator(evaluator, timing);
  const std::size_t layers = timing.layer_count();
  const std::size_t levels = timing.level_count();
  const DiscreteTimings dt = checked_discretize(timing, budget, params.buckets, skip);
  const std::vector<std::size_t> free = free_layers(layers, skip);

  SplitMix64 rng(params.seed);
  Scorer scorer(evaluator, params.use_cache, params.eval_budget);
  Recorder recorder("ga");

  struct Member {
    Profile profile;
    double score;
  };
  std::vector<Member> population;
  double best_score = std::numeric_limits<double>::infinity();
  Profile best;

  auto score = [&](const Profile& p, std::uint64_t generation) -> std::optional<double> {
    const auto s = scorer.score(p);
    if (!s) return std::nullopt;
    if (best.choices.empty() || *s < best_score) {
      best_score = *s;
      best = p;
    }
    recorder.add(generation, *s, best_score, scorer.evaluations(), p);
    return s;
  };

  auto tournament = [&]() -> const Member& {
    std::size_t pick = rng.below(population.size());
    for (std::size_t i = 1; i < params.tournament; ++i) {
      const std::size_t other = rng.below(population.size());
      if (population[other].score < population[pick].score) pick = other;
    }
    return population[pick];
  };

  // Resample random genes to strictly faster levels until the child fits.
  auto repair = [&](Profile& child) {
    std::uint64_t attempts = 0;
    while (profile_buckets(child, dt) > dt.bucket_count) {
      if (++attempts > params.resample_cap || free.empty()) {
        child = random_feasible(rng, dt, free, params.resample_cap);
        return;
      }
      const std::size_t l = free[rng.below(free.size())];
      const auto current = dt.buckets(l, static_cast<std::size_t>(child.choices[l]));
      std::vector<int> faster;
      for (std::size_t s = 0; s < levels; ++s) {
        if (dt.buckets(l, s) < current) faster.push_back(static_cast<int>(s));
      }
      if (!faster.empty()) child.choices[l] = faster[rng.below(faster.size())];
    }
  };

  guarded(recorder, [&] {
    for (std::size_t i = 0; i < params.population; ++i) {
      Profile p = random_feasible(rng, dt, free, params.resample_cap);
      const auto s = score(p, 0);
      if (!s) {
        if (population.empty()) throw InvalidArgument("ga: evaluation budget allows no evaluations");
        return 0;
      }
      population.push_back(Member{std::move(p), *s});
    }
    for (std::size_t generation = 1; generation <= params.max_generations; ++generation) {
      std::vector<Member> offspring;
      offspring.reserve(params.population);
      for (std::size_t i = 0; i < params.population; ++i) {
        Profile child = tournament().profile;
        const Profile& other = tournament().profile;
        if (layers > 1 && rng.uniform01() < params.crossover) {
          const std::size_t cut = 1 + rng.below(layers - 1);
          std::copy(other.choices.begin() + static_cast<std::ptrdiff_t>(cut), other.choices.end(),
                    child.choices.begin() + static_cast<std::ptrdiff_t>(cut));
        }
        for (std::size_t l : free) {
          if (rng.uniform01() < params.mutation) child.choices[l] = static_cast<int>(rng.below(levels));
        }
        repair(child);
        const auto s = score(child, generation);
        if (!s) return 0;
        offspring.push_back(Member{std::move(child), *s});
      }
      population.insert(population.end(), std::make_move_iterator(offspring.begin()),
                        std::make_move_iterator(offspring.end()));
      std::stable_sort(population.begin(), population.end(),
                       [](const Member& a, const Member& b) { return a.score < b.score; });
      population.resize(params.population);
    }
    return 0;
  });

  SearchResult result;
  result.profile = best;
  result.score = best_score;
  result.evaluations = scorer.evaluations();
  result.total_buckets = profile_buckets(best, dt);
  result.trace = std::move(recorder.trace());
  return result;
}

void write_trace_csv(std::ostream& out, const SearchTrace& trace, bool header) {
  if (header) out << "eval_index,strategy,d_or_generation,candidate_score,best_score\n";
  for (const auto& row : trace.rows) {
    out << row.eval_index << ',' << trace.strategy << ',' << row.phase << ','
        << shortest(row.candidate_score) << ',' << shortest(row.best_score) << '\n';
  }
}

}  // namespace sparsedp
