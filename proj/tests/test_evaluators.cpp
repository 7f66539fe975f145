#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>
#include <vector>

#include "doctest.h"
#include "sparsedp/errors.hpp"
#include "sparsedp/evaluators.hpp"
#include "sparsedp/io.hpp"
#include "sparsedp/testbed.hpp"
#include "support.hpp"

using namespace sparsedp;
using namespace std::chrono_literals;
namespace t = sparsedp::testing;

namespace {

class CountingEvaluator final : public Evaluator {
 public:
  double eval(const Profile& p) override {
    ++calls;
    double s = 0.0;
    for (int c : p.choices) s += c;
    return s;
  }
  std::size_t layer_count() const override { return 3; }
  std::size_t level_count() const override { return 4; }
  Concurrency concurrency() const override { return Concurrency::concurrent_safe; }
  std::atomic<int> calls{0};
};

std::vector<std::string> layer_names(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < n; ++l) names.push_back("layer" + std::to_string(l));
  return names;
}

struct ExternalFixture {
  std::size_t layers = 8;
  SparsityGrid grid = make_grid(0.4, 0.99, 9);
  SyntheticLossSpec spec = random_loss_spec(8, 21, 0.5);
  std::filesystem::path spec_path;

  explicit ExternalFixture(const std::string& tag) {
    spec_path = t::temp_dir("eval_" + tag) / "loss.json";
    t::write_text(spec_path, io::loss_spec_to_json(spec).dump());
  }

  std::vector<std::string> command(const std::string& mode) const {
    return {FAKE_EVALUATOR_PATH, spec_path.string(), mode};
  }
};

}  // namespace

TEST_CASE("cache forwards each distinct profile once") {
  CountingEvaluator inner;
  EvalCache cache(inner);
  const Profile a{{0, 1, 2}};
  const Profile b{{3, 1, 2}};
  CHECK(cache.eval(a) == 3.0);
  CHECK(cache.eval(a) == 3.0);
  CHECK(cache.eval(b) == 6.0);
  CHECK(cache.eval(a) == 3.0);
  CHECK(inner.calls == 2);
  CHECK(cache.misses() == 2);
  CHECK(cache.hits() == 2);
  CHECK(cache.size() == 2);
  CHECK(cache.contains(b));
  CHECK_FALSE(cache.contains(Profile{{0, 0, 0}}));
}

TEST_CASE("cache is sound under concurrent use") {
  CountingEvaluator inner;
  EvalCache cache(inner);
  std::vector<std::thread> pool;
  std::atomic<int> wrong{0};
  for (int w = 0; w < 4; ++w) {
    pool.emplace_back([&, w] {
      SplitMix64 rng(static_cast<std::uint64_t>(w));
      for (int k = 0; k < 2000; ++k) {
        const Profile p{{static_cast<int>(rng.below(4)), static_cast<int>(rng.below(4)),
                         static_cast<int>(rng.below(4))}};
        const double expect = p.choices[0] + p.choices[1] + p.choices[2];
        if (cache.eval(p) != expect) ++wrong;
      }
    });
  }
  for (auto& th : pool) th.join();
  CHECK(wrong == 0);
  CHECK(cache.size() <= 64);
  CHECK(cache.hits() + cache.misses() == 8000);
}

TEST_CASE("synthetic loss surfaces") {
  SyntheticLossSpec spec;
  spec.amplitudes = {1.0, 0.5};
  spec.exponents = {2.0, 1.0};
  spec.couplings = {0.8};
  SyntheticLoss add(spec, 5, false);
  SyntheticLoss cpl(spec, 5, true);
  const Profile p{{2, 4}};
  CHECK(add.eval(p) == doctest::Approx(0.25 + 0.5));
  CHECK(cpl.eval(p) == doctest::Approx(0.25 + 0.5 + 0.8 * 0.5 * 1.0));
  CHECK(add.eval(Profile::dense(2)) == 0.0);
  CHECK_THROWS_AS(add.eval(Profile{{0, 5}}), InvalidArgument);
}

TEST_CASE("external evaluator matches the in-process coupled loss") {
  ExternalFixture fx("normal");
  auto ext = spawn_external(fx.command("normal"), 10s, layer_names(fx.layers), fx.grid);
  auto local = coupled_loss(fx.spec, fx.grid);
  SplitMix64 rng(99);
  for (int k = 0; k < 50; ++k) {
    Profile p{std::vector<int>(fx.layers)};
    for (auto& c : p.choices) c = static_cast<int>(rng.below(fx.grid.size()));
    CHECK(ext->eval(p) == doctest::Approx(local->eval(p)).epsilon(1e-9));
  }
  CHECK(ext->requests() == 50);
  CHECK_FALSE(ext->broken());
}

TEST_CASE("external evaluator failures are reported and sticky") {
  ExternalFixture fx("bad");
  const auto names = layer_names(fx.layers);
  const Profile p = Profile::dense(fx.layers);

  SUBCASE("garbage response") {
    auto ext = spawn_external(fx.command("garbage"), 5s, names, fx.grid);
    CHECK_THROWS_AS(ext->eval(p), EvaluatorError);
    CHECK(ext->broken());
    CHECK_THROWS_AS(ext->eval(p), EvaluatorError);
  }
  SUBCASE("error message") {
    auto ext = spawn_external(fx.command("error"), 5s, names, fx.grid);
    CHECK_THROWS_WITH_AS(ext->eval(p), doctest::Contains("model exploded"), EvaluatorError);
  }
  SUBCASE("crash") {
    auto ext = spawn_external(fx.command("crash"), 5s, names, fx.grid);
    CHECK_THROWS_AS(ext->eval(p), EvaluatorError);
    CHECK(ext->broken());
  }
  SUBCASE("handshake mismatch") {
    CHECK_THROWS_AS(spawn_external(fx.command("mismatch"), 5s, names, fx.grid), EvaluatorError);
  }
  SUBCASE("missing executable") {
    CHECK_THROWS_AS(spawn_external({"/nonexistent/evaluator"}, 5s, names, fx.grid),
                    EvaluatorError);
  }
  SUBCASE("timeout then fail fast") {
    auto ext = spawn_external(fx.command("hang"), 300ms, names, fx.grid);
    const auto start = std::chrono::steady_clock::now();
    CHECK_THROWS_WITH_AS(ext->eval(p), doctest::Contains("timed out"), EvaluatorError);
    const auto first = std::chrono::steady_clock::now() - start;
    CHECK(first < 5s);
    CHECK(ext->broken());
    const auto again = std::chrono::steady_clock::now();
    CHECK_THROWS_AS(ext->eval(p), EvaluatorError);
    CHECK(std::chrono::steady_clock::now() - again < 100ms);
  }
}

TEST_CASE("external evaluator validates profiles before sending") {
  ExternalFixture fx("validate");
  auto ext = spawn_external(fx.command("normal"), 5s, layer_names(fx.layers), fx.grid);
  CHECK_THROWS_AS(ext->eval(Profile{{0, 1}}), InvalidArgument);
  CHECK_FALSE(ext->broken());
  CHECK(ext->eval(Profile::dense(fx.layers)) == 0.0);
}
