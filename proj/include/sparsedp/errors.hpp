#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace sparsedp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated precondition on a caller-supplied value.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// No profile satisfies the time budget. For discretized problems the minimal
// achievable bucket total is attached.
class InfeasibleError : public Error {
 public:
  explicit InfeasibleError(const std::string& what,
                           std::optional<std::int64_t> minimal_buckets = std::nullopt)
      : Error(what), minimal_buckets_(minimal_buckets) {}

  std::optional<std::int64_t> minimal_buckets() const { return minimal_buckets_; }

 private:
  std::optional<std::int64_t> minimal_buckets_;
};

// Input file or wire message that does not match its schema.
class MalformedInput : public Error {
 public:
  using Error::Error;
};

class EvaluatorError : public Error {
 public:
  using Error::Error;
};

class EnumerationCapError : public Error {
 public:
  using Error::Error;
};

}  // namespace sparsedp
