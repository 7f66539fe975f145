#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "sparsedp/core.hpp"

namespace sparsedp {

enum class Concurrency { serial_only, concurrent_safe };

// Black-box profile scorer. Lower is better; scores are finite.
class Evaluator {
 public:
  virtual ~Evaluator() = default;

  virtual double eval(const Profile& p) = 0;
  virtual std::size_t layer_count() const = 0;
  virtual std::size_t level_count() const = 0;
  virtual Concurrency concurrency() const = 0;
};

// Memoizing wrapper. The wrapped evaluator must outlive the cache. Concurrent
// misses on the same profile may both reach the inner evaluator; the first
// insertion wins and later results are discarded.
class EvalCache final : public Evaluator {
 public:
  explicit EvalCache(Evaluator& inner) : inner_(inner) {}

  double eval(const Profile& p) override;
  std::size_t layer_count() const override { return inner_.layer_count(); }
  std::size_t level_count() const override { return inner_.level_count(); }
  Concurrency concurrency() const override { return inner_.concurrency(); }

  bool contains(const Profile& p) const;
  std::uint64_t hits() const { return hits_.load(); }
  // Number of calls forwarded to the inner evaluator.
  std::uint64_t misses() const { return misses_.load(); }
  std::size_t size() const;

 private:
  Evaluator& inner_;
  mutable std::mutex mu_;
  std::map<std::vector<int>, double> scores_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
};

inline constexpr std::chrono::milliseconds kDefaultEvalTimeout{300'000};

// Child process speaking newline-delimited JSON on stdin/stdout:
//   -> {"type":"init","layers":[names],"grid":[sparsities]}
//   <- {"type":"ready","layers":L,"levels":n}
//   -> {"type":"eval","id":k,"choices":[int]}
//   <- {"type":"loss","id":k,"loss":float}
//   -> {"type":"close"}
// Requests are strictly sequential. After a timeout or protocol error the
// evaluator is marked broken and every later call fails immediately.
class ExternalEvaluator final : public Evaluator {
 public:
  ExternalEvaluator(std::vector<std::string> command, std::chrono::milliseconds timeout,
                    const std::vector<std::string>& layer_names, const SparsityGrid& grid);
  ~ExternalEvaluator() override;

  ExternalEvaluator(const ExternalEvaluator&) = delete;
  ExternalEvaluator& operator=(const ExternalEvaluator&) = delete;

  double eval(const Profile& p) override;
  std::size_t layer_count() const override { return layers_; }
  std::size_t level_count() const override { return levels_; }
  Concurrency concurrency() const override { return Concurrency::serial_only; }

  bool broken() const { return broken_; }
  std::uint64_t requests() const { return next_id_; }

 private:
  void send_line(const std::string& line);
  std::string read_line();
  [[noreturn]] void fail(const std::string& message);
  void terminate_child();

  std::vector<std::string> command_;
  std::chrono::milliseconds timeout_;
  std::size_t layers_;
  std::size_t levels_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  std::uint64_t next_id_ = 0;
  bool broken_ = false;
};

std::unique_ptr<ExternalEvaluator> spawn_external(
    std::vector<std::string> command, std::chrono::milliseconds timeout,
    const std::vector<std::string>& layer_names, const SparsityGrid& grid);

}  // namespace sparsedp
