#pragma once

#include "dbp/purifier.hpp"

#include <functional>
#include <string>

namespace dbp {

/// Gradient w.r.t. the purifier input, split into the direct chain and the
/// guidance paths.
struct GradResult {
  Tensor grad;
  Tensor g_grad;
  Tensor total() const { return grad + g_grad; }
};

struct GradMode {
  enum class Kind { full, surrogate, bpda, oracle };
  Kind kind = Kind::full;
  /// surrogate only: coarse step = ratio * dt
  int ratio = 1;
};

GradMode parse_grad_mode(const std::string& name, int ratio = 1);

struct CheckpointStats {
  std::size_t replayed_steps = 0;
  std::size_t max_step_nodes = 0;
};

/// Scalar loss of a purified output.
using LossFn = std::function<Var(const Var& x0)>;

/// Backpropagates `seed` (cotangent of copy's final output) through the stored
/// trajectory one step at a time, re-verifying every recomputed state.
GradResult checkpoint_backward(const Tensor& seed, const PurifyState& state, int copy, const Purifier& p,
                               CheckpointStats* stats = nullptr);

/// Whole purification and loss on one tape.
GradResult full_tape_oracle(const PurifyState& state, int copy, const Purifier& p, const LossFn& loss);

/// Differentiates a coarse replica (step ratio * dt) of the purifier, run
/// afresh on the same Brownian path; the fine forward states are not used.
GradResult surrogate_backward(const PurifyState& state, int copy, const Purifier& p, const LossFn& loss,
                              int ratio);

/// Identity Jacobian.
GradResult bpda_backward(const Tensor& seed);

/// Purifier whose step is ratio times the fine step of `p`.
Purifier coarsened(const Purifier& p, int ratio);

struct PathGradient {
  GradResult result;
  double loss = 0.0;
};

/// Loss gradient of one stored path under the chosen mode.
PathGradient path_gradient(const PurifyState& state, int copy, const Purifier& p, const LossFn& loss,
                           GradMode mode);

struct EotGradient {
  Tensor mean;
  std::vector<Tensor> per_path;
  std::vector<double> losses;
};

/// Mean of per-path total gradients over all copies of `state`, folded in
/// ascending copy order.
EotGradient eot_gradient(const PurifyState& state, const Purifier& p, const LossFn& loss, GradMode mode,
                         int jobs = 1);
EotGradient eot_gradient(const Tensor& x, const Purifier& p, const LossFn& loss, GradMode mode,
                         std::uint64_t seed, int jobs = 1);

}  // namespace dbp
