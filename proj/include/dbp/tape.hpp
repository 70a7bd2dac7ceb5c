#pragma once

#include "dbp/tensor.hpp"

#include <functional>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

namespace dbp {

class Tape;

/// A value flowing through differentiable code. Untracked vars are constants.
class Var {
 public:
  Var() = default;
  /*implicit*/ Var(Tensor value) : value_(std::move(value)) {}

  const Tensor& value() const noexcept { return value_; }
  const Shape& shape() const noexcept { return value_.shape(); }
  std::size_t size() const noexcept { return value_.size(); }
  bool tracked() const noexcept { return node_ >= 0; }
  int node() const noexcept { return node_; }
  Tape* tape() const noexcept { return tape_; }

 private:
  friend class Tape;
  Var(Tensor value, Tape* tape, int node) : value_(std::move(value)), tape_(tape), node_(node) {}

  Tensor value_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

/// Maps the output cotangent to one cotangent per input (same order as recorded).
using VjpFn = std::function<std::vector<Tensor>(const Tensor& cotangent)>;

class Gradients;

/// Append-only record of primitive ops for reverse-mode differentiation.
///
/// With recording off nothing is appended: leaves come back untracked and every
/// op downstream evaluates as plain arithmetic. Tapes are single-writer.
class Tape {
 public:
  Tape() = default;
  explicit Tape(bool recording) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }
  void set_recording(bool on) noexcept { recording_ = on; }

  Var leaf(Tensor value);

  /// Appends a node for an op whose value is already computed. Returns an
  /// untracked var when recording is off or no input is tracked.
  Var record(std::string op, Tensor value, std::initializer_list<const Var*> inputs, VjpFn vjp);
  Var record(std::string op, Tensor value, const std::vector<const Var*>& inputs, VjpFn vjp);

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::string& op_name(int node) const;

  /// Reverse sweep from `output` seeded with `seed`. Pure read of the tape.
  Gradients backward(const Var& output, const Tensor& seed) const;
  /// Scalar outputs only: seed = 1.
  Gradients backward(const Var& output) const;

 private:
  struct Node {
    std::string op;
    std::vector<int> inputs;
    std::vector<Shape> input_shapes;
    VjpFn vjp;
  };

  bool recording_ = true;
  std::vector<Node> nodes_;
};

class Gradients {
 public:
  /// Cotangent of a tracked var; zeros when no path reaches it or it is untracked.
  Tensor wrt(const Var& v) const;

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<std::optional<Tensor>> cotangents_;
};

}  // namespace dbp
