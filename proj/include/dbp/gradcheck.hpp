#pragma once

#include "dbp/tape.hpp"

#include <functional>

namespace dbp {

using ScalarFn = std::function<Var(const Var&)>;

struct GradCheck {
  double max_rel_error = 0.0;
  Tensor tape_grad;
  Tensor fd_grad;
};

/// Compares the tape gradient of `f` at `x` with central differences of step h.
/// Error per coordinate is |g_tape - g_fd| / max(|g_tape|, 1e-12).
GradCheck finite_diff_check(const ScalarFn& f, const Tensor& x, double h);

}  // namespace dbp
