#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "sparsedp/baselines.hpp"
#include "sparsedp/dp_solver.hpp"
#include "sparsedp/error_models.hpp"
#include "sparsedp/errors.hpp"
#include "sparsedp/evaluators.hpp"
#include "sparsedp/format.hpp"
#include "sparsedp/io.hpp"
#include "sparsedp/search.hpp"
#include "sparsedp/testbed.hpp"

namespace sparsedp::cli {
namespace {

namespace fs = std::filesystem;
using io::json;

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// --evaluator additive:<spec.json> | coupled:<spec.json> | exec:<command line>
std::unique_ptr<Evaluator> make_evaluator(const std::string& spec, const TimingTable& timing,
                                          std::chrono::milliseconds timeout) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) {
    throw InvalidArgument("evaluator must be additive:<file>, coupled:<file> or exec:<command>");
  }
  const std::string kind = spec.substr(0, colon);
  const std::string arg = spec.substr(colon + 1);
  if (kind == "additive" || kind == "coupled") {
    const SyntheticLossSpec loss = io::load_with(arg, io::loss_spec_from_json);
    if (loss.layer_count() != timing.layer_count()) {
      throw MalformedInput(arg + ": loss spec has " + std::to_string(loss.layer_count()) +
                           " layers, timing table has " + std::to_string(timing.layer_count()));
    }
    if (kind == "additive") return additive_loss(loss, timing.grid());
    return coupled_loss(loss, timing.grid());
  }
  if (kind == "exec") {
    std::istringstream words(arg);
    std::vector<std::string> command;
    for (std::string w; words >> w;) command.push_back(w);
    return spawn_external(std::move(command), timeout, timing.layer_names(), timing.grid());
  }
  throw InvalidArgument("unknown evaluator kind '" + kind + "'");
}

struct CommonArgs {
  std::string timing_file;
  double speedup = 1.0;
  std::string skip = "first,last";
  std::int64_t buckets = kDefaultBucketCount;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_buckets) {
  cmd->add_option("timing", args.timing_file, "Timing table (JSON)")->required();
  cmd->add_option("--speedup,-x", args.speedup, "Target speedup X >= 1")
      ->required()
      ->check(CLI::Range(1.0, std::numeric_limits<double>::max()));
  cmd->add_option("--skip", args.skip, "Layers kept dense: first,last | none | index list")
      ->capture_default_str();
  if (with_buckets) {
    cmd->add_option("--buckets,-B", args.buckets, "Number of time buckets")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
  }
}

struct Loaded {
  TimingTable timing;
  TimeBudget budget;
  SkipList skip;
};

Loaded load_common(const CommonArgs& args) {
  TimingTable timing = io::load_timing(args.timing_file);
  const TimeBudget budget = time_budget(timing, args.speedup);
  SkipList skip = SkipList::parse(args.skip, timing.layer_count());
  return Loaded{std::move(timing), budget, std::move(skip)};
}

json search_to_json(const SearchResult& r, const TimingTable& timing, std::int64_t buckets) {
  DpSolution sol;
  if (r.solution) {
    sol = *r.solution;
  } else {
    sol.profile = r.profile;
    sol.total_buckets = r.total_buckets;
    sol.feasible = r.total_buckets <= buckets;
  }
  json j = io::solution_to_json(sol, timing);
  if (r.c_star) j["c_star"] = r.c_star->coeffs();
  j["score"] = r.score;
  j["evaluations"] = r.evaluations;
  return j;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct CompareJob {
  std::string strategy;
  std::uint64_t seed = 0;
  bool ok = false;
  int exit_code = 1;  // meaningful only when !ok
  std::string status;
  double score = 0.0;
  std::uint64_t evaluations = 0;
  double wall_s = 0.0;
  std::optional<SearchTrace> trace;
  Profile profile;
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Layer-wise sparsity profile optimizer under a latency budget", "sparsedp"};
  app.require_subcommand(1);

  // budget
  CommonArgs budget_args;
  auto* budget_cmd = app.add_subcommand("budget", "Print the time budget for a speedup target");
  budget_cmd->add_option("timing", budget_args.timing_file, "Timing table (JSON)")->required();
  budget_cmd->add_option("--speedup,-x", budget_args.speedup, "Target speedup X >= 1")
      ->required()
      ->check(CLI::Range(1.0, std::numeric_limits<double>::max()));

  // solve
  CommonArgs solve_args;
  std::string errors_file, quadratic_file, metric, stats_file, kernel = "vectorized";
  auto* solve_cmd = app.add_subcommand("solve", "Solve for the minimum-error profile with the DP");
  add_common(solve_cmd, solve_args, true);
  auto* errors_opt = solve_cmd->add_option("--errors", errors_file, "Error table (JSON)");
  auto* quad_opt =
      solve_cmd->add_option("--quadratic", quadratic_file, "Sensitivity coefficients (JSON)");
  auto* metric_opt = solve_cmd->add_option("--metric", metric,
                                           "Hand-crafted metric: squared | squared-normalized | norm")
                         ->check(CLI::IsMember({"squared", "squared-normalized", "norm"}));
  solve_cmd->add_option("--stats", stats_file, "Weight statistics for --metric (JSON)");
  solve_cmd->add_option("--kernel", kernel, "DP inner loop: vectorized | scalar")
      ->check(CLI::IsMember({"vectorized", "scalar"}))
      ->capture_default_str();
  errors_opt->excludes(quad_opt)->excludes(metric_opt);
  quad_opt->excludes(metric_opt);

  // oracle
  CommonArgs oracle_args;
  std::string oracle_errors;
  std::uint64_t cap = kDefaultEnumerationCap;
  auto* oracle_cmd = app.add_subcommand("oracle", "Brute-force reference solver");
  add_common(oracle_cmd, oracle_args, true);
  oracle_cmd->add_option("errors", oracle_errors, "Error table (JSON)")->required();
  oracle_cmd->add_option("--cap", cap, "Maximum number of profiles to enumerate")
      ->capture_default_str();

  // search
  CommonArgs search_args;
  SearchParams sp;
  std::string evaluator_spec, trace_file;
  double timeout_s = 300.0;
  std::uint64_t eval_budget = 0;
  bool no_cache = false;
  auto* search_cmd = app.add_subcommand("search", "Search sensitivity coefficients");
  add_common(search_cmd, search_args, true);
  search_cmd->add_option("--evaluator,-e", evaluator_spec,
                         "additive:<spec> | coupled:<spec> | exec:<command>")
      ->required();
  search_cmd->add_option("--seed", sp.seed)->capture_default_str();
  search_cmd->add_option("--k", sp.trials, "Trials per phase")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  search_cmd->add_option("--shrink", sp.shrink, "Initial neighbourhood fraction")
      ->capture_default_str()
      ->check(CLI::Range(std::numeric_limits<double>::min(), 1.0));
  search_cmd->add_option("--trace", trace_file, "Write the search trace CSV here");
  search_cmd->add_option("--eval-budget", eval_budget, "Maximum evaluator calls (0 = none)");
  search_cmd->add_flag("--early-stop", sp.early_stop,
                       "Stop each phase after k trials without improvement");
  search_cmd->add_flag("--no-cache", no_cache, "Disable the evaluation cache");
  search_cmd->add_option("--timeout", timeout_s, "Per-request timeout for exec evaluators (s)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  // baseline
  CommonArgs baseline_args;
  std::string strategy = "uniform", baseline_stats;
  auto* baseline_cmd = app.add_subcommand("baseline", "Uniform or global-magnitude profile");
  add_common(baseline_cmd, baseline_args, false);
  baseline_cmd->add_option("--strategy", strategy)
      ->check(CLI::IsMember({"uniform", "gmp"}))
      ->capture_default_str();
  baseline_cmd->add_option("--stats", baseline_stats, "Weight statistics (required for gmp)");

  // compare
  CommonArgs compare_args;
  SearchParams cp;
  std::string compare_evaluator, strategies = "spdy,direct,ga,uniform,gmp", out_dir,
                                 compare_stats;
  std::size_t n_seeds = 5;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  double compare_timeout_s = 300.0;
  auto* compare_cmd = app.add_subcommand("compare", "Run strategies under equal evaluation budgets");
  add_common(compare_cmd, compare_args, true);
  compare_cmd->add_option("--evaluator,-e", compare_evaluator)->required();
  compare_cmd->add_option("--strategies", strategies)->capture_default_str();
  compare_cmd->add_option("--seeds", n_seeds, "Number of seeds")->capture_default_str();
  compare_cmd->add_option("--seed", cp.seed, "First seed")->capture_default_str();
  compare_cmd->add_option("--k", cp.trials)->capture_default_str()->check(CLI::PositiveNumber);
  compare_cmd->add_option("--shrink", cp.shrink)
      ->capture_default_str()
      ->check(CLI::Range(std::numeric_limits<double>::min(), 1.0));
  compare_cmd->add_option("--out", out_dir, "Output directory")->required();
  compare_cmd->add_option("--stats", compare_stats, "Weight statistics (for gmp)");
  compare_cmd->add_option("--jobs", jobs, "Parallel workers")->check(CLI::PositiveNumber);
  compare_cmd->add_option("--timeout", compare_timeout_s)->check(CLI::PositiveNumber);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic inputs");
  synth_cmd->require_subcommand(1);
  std::size_t syn_layers = 52;
  std::uint64_t syn_seed = 0;
  double syn_lower = 0.4, syn_upper = 0.99, syn_overhead = 0.0, syn_base = 0.0,
         syn_coupling = 0.0;
  int syn_levels = 41;
  bool syn_quadratic = false;
  std::string syn_out;
  auto* synth_timings = synth_cmd->add_subcommand("timings", "Synthetic timing table");
  auto* synth_loss = synth_cmd->add_subcommand("loss", "Synthetic loss surface spec");
  auto* synth_stats = synth_cmd->add_subcommand("stats", "Half-normal weight statistics");
  for (auto* cmd : {synth_timings, synth_loss, synth_stats}) {
    cmd->add_option("--layers,-L", syn_layers)->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--seed", syn_seed)->capture_default_str();
    cmd->add_option("--out,-o", syn_out, "Output file (default stdout)");
  }
  synth_timings->add_option("--lower", syn_lower)->capture_default_str();
  synth_timings->add_option("--upper", syn_upper)->capture_default_str();
  synth_timings->add_option("--levels", syn_levels, "Non-dense levels")->capture_default_str();
  synth_timings->add_option("--overhead", syn_overhead, "Low-sparsity overhead")
      ->capture_default_str();
  synth_timings->add_option("--base", syn_base, "Base time (s)")->capture_default_str();
  synth_loss->add_option("--coupling", syn_coupling, "Coupling scale")->capture_default_str();
  synth_loss->add_flag("--quadratic", syn_quadratic, "Fix all exponents to 2");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*budget_cmd) {
      const TimingTable timing = io::load_timing(budget_args.timing_file);
      const TimeBudget b = time_budget(timing, budget_args.speedup);
      out << dump({{"seconds", b.seconds},
                   {"speedup", b.speedup},
                   {"dense_total_s", timing.dense_total()},
                   {"base_time_s", timing.base_time()}});
      return kExitOk;
    }

    if (*solve_cmd) {
      const Loaded in = load_common(solve_args);
      std::optional<ErrorTable> table;
      if (!errors_file.empty()) {
        table = io::load_with(errors_file, io::errors_from_json);
      } else if (!quadratic_file.empty()) {
        const SensitivityVector c = io::load_with(quadratic_file, io::sensitivity_from_json);
        if (c.size() != in.timing.layer_count()) {
          throw MalformedInput(quadratic_file + ": coefficient count does not match layers");
        }
        table = quadratic_errors(c, in.timing.grid());
      } else if (!metric.empty()) {
        if (stats_file.empty()) throw InvalidArgument("--metric requires --stats");
        const LayerWeightStats stats = io::load_with(stats_file, io::stats_from_json);
        if (stats.layers.size() != in.timing.layer_count()) {
          throw MalformedInput(stats_file + ": layer count does not match timing table");
        }
        table = metric == "norm" ? custom_norm_errors(stats, in.timing.grid())
                                 : squared_weight_errors(stats, in.timing.grid(),
                                                         metric == "squared-normalized");
      } else {
        throw InvalidArgument("solve needs one of --errors, --quadratic or --metric");
      }
      if (table->layer_count() != in.timing.layer_count() ||
          table->level_count() != in.timing.level_count()) {
        throw MalformedInput("error table shape does not match the timing table");
      }
      const DiscreteTimings dt = discretize(in.timing, in.budget, solve_args.buckets);
      const DpSolution sol = solve_dp(*table, dt, in.skip,
                                      kernel == "scalar" ? DpKernel::scalar : DpKernel::vectorized);
      out << dump(io::solution_to_json(sol, in.timing));
      return kExitOk;
    }

    if (*oracle_cmd) {
      const Loaded in = load_common(oracle_args);
      const ErrorTable table = io::load_with(oracle_errors, io::errors_from_json);
      if (table.layer_count() != in.timing.layer_count() ||
          table.level_count() != in.timing.level_count()) {
        throw MalformedInput("error table shape does not match the timing table");
      }
      const DiscreteTimings dt = discretize(in.timing, in.budget, oracle_args.buckets);
      out << dump(io::solution_to_json(brute_force(table, dt, in.skip, cap), in.timing));
      return kExitOk;
    }

    if (*search_cmd) {
      const Loaded in = load_common(search_args);
      sp.buckets = search_args.buckets;
      sp.use_cache = !no_cache;
      if (eval_budget > 0) sp.eval_budget = eval_budget;
      const auto timeout = std::chrono::milliseconds(static_cast<std::int64_t>(timeout_s * 1000));
      auto evaluator = make_evaluator(evaluator_spec, in.timing, timeout);
      const SearchResult r = spdy_search(*evaluator, in.timing, in.budget, in.skip, sp);
      if (!trace_file.empty()) {
        std::ostringstream csv;
        write_trace_csv(csv, r.trace);
        io::write_file_atomic(trace_file, csv.str());
      }
      out << dump(search_to_json(r, in.timing, sp.buckets));
      return kExitOk;
    }

    if (*baseline_cmd) {
      const Loaded in = load_common(baseline_args);
      BaselineResult r;
      if (strategy == "uniform") {
        r = uniform_profile(in.timing, in.budget, in.skip);
      } else {
        if (baseline_stats.empty()) throw InvalidArgument("gmp needs --stats");
        const LayerWeightStats stats = io::load_with(baseline_stats, io::stats_from_json);
        if (stats.layers.size() != in.timing.layer_count()) {
          throw MalformedInput(baseline_stats + ": layer count does not match timing table");
        }
        r = gmp_profile(stats, in.timing, in.budget, in.skip);
      }
      out << dump(io::baseline_to_json(r, in.timing));
      return kExitOk;
    }

    if (*compare_cmd) {
      const Loaded in = load_common(compare_args);
      cp.buckets = compare_args.buckets;
      const auto timeout =
          std::chrono::milliseconds(static_cast<std::int64_t>(compare_timeout_s * 1000));
      std::optional<LayerWeightStats> stats;
      if (!compare_stats.empty()) stats = io::load_with(compare_stats, io::stats_from_json);
      // Fail fast on a broken evaluator spec before fanning out.
      make_evaluator(compare_evaluator, in.timing, timeout);

      std::vector<std::string> names;
      {
        std::stringstream ss(strategies);
        for (std::string item; std::getline(ss, item, ',');) {
          if (item != "spdy" && item != "direct" && item != "ga" && item != "uniform" &&
              item != "gmp") {
            throw InvalidArgument("unknown strategy '" + item + "'");
          }
          names.push_back(item);
        }
      }
      if (names.empty()) throw InvalidArgument("no strategies given");

      const std::uint64_t equal_budget = spdy_candidate_count(in.timing.layer_count(), cp);
      std::vector<CompareJob> jobs_list;
      for (const auto& name : names) {
        const bool seeded = name == "spdy" || name == "direct" || name == "ga";
        const std::size_t runs = seeded ? n_seeds : 1;
        for (std::size_t s = 0; s < runs; ++s) {
          jobs_list.push_back(CompareJob{name, seeded ? cp.seed + s : 0});
        }
      }

      auto run_job = [&](CompareJob& job) {
        const auto start = std::chrono::steady_clock::now();
        try {
          auto evaluator = make_evaluator(compare_evaluator, in.timing, timeout);
          if (job.strategy == "spdy" || job.strategy == "direct") {
            SearchParams p = cp;
            p.seed = job.seed;
            p.eval_budget = equal_budget;
            SearchResult r = job.strategy == "spdy"
                                 ? spdy_search(*evaluator, in.timing, in.budget, in.skip, p)
                                 : direct_search(*evaluator, in.timing, in.budget, in.skip, p);
            job.score = r.score;
            job.evaluations = r.evaluations;
            job.profile = r.profile;
            job.trace = std::move(r.trace);
          } else if (job.strategy == "ga") {
            GeneticParams g;
            g.seed = job.seed;
            g.buckets = cp.buckets;
            g.eval_budget = static_cast<std::uint64_t>(2.5 * static_cast<double>(equal_budget));
            g.max_generations = 1000;
            SearchResult r = genetic_search(*evaluator, in.timing, in.budget, in.skip, g);
            job.score = r.score;
            job.evaluations = r.evaluations;
            job.profile = r.profile;
            job.trace = std::move(r.trace);
          } else {
            BaselineResult b;
            if (job.strategy == "uniform") {
              b = uniform_profile(in.timing, in.budget, in.skip);
            } else {
              if (!stats) throw InvalidArgument("gmp needs --stats");
              b = gmp_profile(*stats, in.timing, in.budget, in.skip);
            }
            job.profile = b.profile;
            job.score = evaluator->eval(b.profile);
            job.evaluations = 1;
          }
          job.ok = true;
          job.status = "ok";
        } catch (const InfeasibleError& e) {
          job.exit_code = kExitInfeasible;
          job.status = std::string("failed: ") + e.what();
        } catch (const EvaluatorError& e) {
          job.exit_code = kExitEvaluator;
          job.status = std::string("failed: ") + e.what();
        } catch (const InvalidArgument& e) {
          job.exit_code = kExitUsage;
          job.status = std::string("failed: ") + e.what();
        } catch (const std::exception& e) {
          job.status = std::string("failed: ") + e.what();
        }
        job.wall_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      };

      std::atomic<std::size_t> next{0};
      std::vector<std::thread> workers;
      for (unsigned w = 0; w < std::min<std::size_t>(jobs, jobs_list.size()); ++w) {
        workers.emplace_back([&] {
          for (std::size_t i; (i = next++) < jobs_list.size();) run_job(jobs_list[i]);
        });
      }
      for (auto& t : workers) t.join();

      fs::create_directories(out_dir);
      std::ostringstream summary, walls, convergence;
      summary << "strategy,seed,final_score,evals,status\n";
      walls << "strategy,seed,wall_time_s\n";
      convergence << "strategy,seed,evaluations,best_score\n";
      bool any_ok = false;
      for (const auto& job : jobs_list) {
        std::string status = job.status;
        std::replace(status.begin(), status.end(), ',', ';');
        std::replace(status.begin(), status.end(), '\n', ' ');
        summary << job.strategy << ',' << job.seed << ','
                << (job.ok ? shortest(job.score) : std::string("nan")) << ',' << job.evaluations
                << ',' << status << '\n';
        walls << job.strategy << ',' << job.seed << ',' << shortest(job.wall_s) << '\n';
        any_ok = any_ok || job.ok;
        if (job.trace) {
          std::ostringstream csv;
          write_trace_csv(csv, *job.trace);
          io::write_file_atomic(fs::path(out_dir) / ("trace_" + job.strategy + "_seed" +
                                                     std::to_string(job.seed) + ".csv"),
                                csv.str());
          for (const auto& row : job.trace->rows) {
            convergence << job.strategy << ',' << job.seed << ',' << row.evaluations << ','
                        << shortest(row.best_score) << '\n';
          }
        } else if (job.ok) {
          convergence << job.strategy << ',' << job.seed << ",1," << shortest(job.score) << '\n';
        }
      }
      io::write_file_atomic(fs::path(out_dir) / "summary.csv", summary.str());
      io::write_file_atomic(fs::path(out_dir) / "wall_times.csv", walls.str());
      io::write_file_atomic(fs::path(out_dir) / "convergence.csv", convergence.str());

      json report = json::object();
      for (const auto& name : names) {
        std::vector<double> scores;
        std::size_t failures = 0;
        for (const auto& job : jobs_list) {
          if (job.strategy != name) continue;
          if (job.ok) {
            scores.push_back(job.score);
          } else {
            ++failures;
          }
        }
        json entry = {{"runs", scores.size()}, {"failures", failures}};
        if (!scores.empty()) {
          entry["median_score"] = median(scores);
          entry["min_score"] = *std::min_element(scores.begin(), scores.end());
          entry["max_score"] = *std::max_element(scores.begin(), scores.end());
        }
        report[name] = std::move(entry);
      }
      report["eval_budget"] = equal_budget;
      out << dump(report);
      if (!any_ok) {
        for (const auto& job : jobs_list) err << job.strategy << ": " << job.status << "\n";
        return jobs_list.front().exit_code;
      }
      return kExitOk;
    }

    if (*synth_cmd) {
      json j;
      if (*synth_timings) {
        SyntheticTimingSpec spec = random_timing_spec(syn_layers, syn_seed);
        spec.low_sparsity_overhead = syn_overhead;
        spec.base_time = syn_base;
        j = io::timing_to_json(gen_timings(spec, make_grid(syn_lower, syn_upper, syn_levels)));
      } else if (*synth_loss) {
        j = io::loss_spec_to_json(syn_quadratic ? quadratic_loss_spec(syn_layers, syn_seed)
                                                : random_loss_spec(syn_layers, syn_seed,
                                                                   syn_coupling));
      } else {
        j = io::stats_to_json(random_weight_stats(syn_layers, syn_seed));
      }
      if (syn_out.empty()) {
        out << dump(j);
      } else {
        io::write_file_atomic(syn_out, dump(j));
      }
      return kExitOk;
    }
  } catch (const InfeasibleError& e) {
    err << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const MalformedInput& e) {
    err << "malformed input: " << e.what() << "\n";
    return kExitDataErr;
  } catch (const EvaluatorError& e) {
    err << "evaluator failure: " << e.what() << "\n";
    return kExitEvaluator;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const EnumerationCapError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}

}  // namespace sparsedp::cli
