#pragma once

#include "dbp/tape.hpp"

#include <limits>
#include <utility>
#include <vector>

namespace dbp {

/// Per-pixel color kernel of an (H, W) image: exp(-(x[i,j] - x[q])^2 / 2 sigma_c^2)
/// over the centered M x N window, 0 where the window leaves the image.
/// sigma_c = infinity gives 1 inside the image.
Tensor color_kernel(const Tensor& image, std::size_t i, std::size_t j, std::size_t M, std::size_t N,
                    double sigma_c);

/// One optimizable filter: kernel logits of shape (H, W, M, N) and a color
/// permissiveness.
struct OptFilter {
  std::size_t M = 3, N = 3;
  double sigma_c = std::numeric_limits<double>::infinity();
  Tensor logits;
};

/// Logits whose softmax puts 1 - (MN - 1) e^-30 on the window center.
Tensor identity_logits(std::size_t H, std::size_t W, std::size_t M, std::size_t N);

struct FilterChain {
  std::vector<OptFilter> filters;
  /// true: filter b's color kernels come from its own input; false: from the original image.
  bool color_from_input = true;
};

FilterChain identity_chain(std::size_t H, std::size_t W, const std::vector<std::pair<std::size_t, std::size_t>>& shapes,
                           double sigma_c);

/// out[i,j] = sum over the window of V ⊙ x, with V the renormalized
/// color-kernel ⊙ softmax(logits[i,j]). Differentiable in x, logits and guide.
Var of_apply(const Var& x, const Var& logits, const Var& guide, double sigma_c);

/// Sequential of_apply over the chain; `logits` holds one var per filter.
Var chain_apply(const Var& x, const FilterChain& chain, const std::vector<Var>& logits);

}  // namespace dbp
