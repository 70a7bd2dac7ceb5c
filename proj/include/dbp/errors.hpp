#pragma once

#include <stdexcept>
#include <string>

namespace dbp {

enum class ErrorKind {
  domain,
  structural,
  range,
  shape,
  config,
  replay_integrity,
  numeric_divergence,
  io,
};

/// Base of every error raised by the library. The CLI maps `kind()` to exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Math domain violation inside a differentiable op (log of a non-positive value, ...).
class DomainError : public Error {
 public:
  DomainError(const std::string& op, const std::string& detail)
      : Error(ErrorKind::domain, "domain error in op '" + op + "': " + detail), op_(op) {}
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

class StructuralError : public Error {
 public:
  explicit StructuralError(const std::string& what) : Error(ErrorKind::structural, what) {}
};

class RangeError : public Error {
 public:
  explicit RangeError(const std::string& what) : Error(ErrorKind::range, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::shape, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

/// A recomputed reverse step did not reproduce the stored forward state bit for bit.
class ReplayIntegrityError : public Error {
 public:
  ReplayIntegrityError(int round, int step, const std::string& detail)
      : Error(ErrorKind::replay_integrity,
              "replay mismatch at round " + std::to_string(round) + ", step " +
                  std::to_string(step) + ": " + detail),
        round_(round),
        step_(step) {}
  int round() const noexcept { return round_; }
  int step() const noexcept { return step_; }

 private:
  int round_;
  int step_;
};

class NumericDivergenceError : public Error {
 public:
  explicit NumericDivergenceError(const std::string& what)
      : Error(ErrorKind::numeric_divergence, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

}  // namespace dbp
