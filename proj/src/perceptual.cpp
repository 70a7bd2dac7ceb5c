#include "dbp/perceptual.hpp"

#include "dbp/errors.hpp"
#include "dbp/noise.hpp"
#include "dbp/ops.hpp"

namespace dbp {

PerceptualProxy::PerceptualProxy(std::uint64_t seed, std::size_t channels) : channels_(channels) {
  for (std::uint64_t s = 0; s < 2; ++s) {
    banks_[s] = (1.0 / 3.0) * normal_tensor(stream_key(seed, "perceptual.bank", {s}), {channels, 1, 3, 3});
  }
}

Var PerceptualProxy::features(const Var& image, std::size_t scale) const {
  const std::size_t H = image.shape()[0], W = image.shape()[1];
  Var x = reshape(image, {1, H, W});
  if (scale == 1) {
    if (H < 2 || W < 2) throw ShapeError("perceptual proxy needs images of at least 2x2");
    x = conv2d(x, Var(Tensor::full({1, 1, 2, 2}, 0.25)), 2, 0);
  }
  const Var f = tanh(conv2d(x, Var(banks_[scale]), 1, 1));
  // Per-pixel channel norm, broadcast back over channels.
  const Var norm2 = conv2d(square(f), Var(Tensor::ones({1, channels_, 1, 1})), 1, 0);
  const Var norm = sqrt(shift(norm2, 1e-10));
  std::vector<Var> copies(channels_, norm);
  return div(f, concat(copies, 0));
}

Var PerceptualProxy::distance(const Var& a, const Var& b) const {
  if (a.value().rank() != 2 || a.shape() != b.shape()) {
    throw ShapeError("perceptual distance needs two (H, W) images of equal shape");
  }
  const Var d0 = mean(square(sub(features(a, 0), features(b, 0))));
  const Var d1 = mean(square(sub(features(a, 1), features(b, 1))));
  return scale(add(d0, d1), 0.5);
}

double PerceptualProxy::distance(const Tensor& a, const Tensor& b) const {
  return distance(Var(a), Var(b)).value()[0];
}

}  // namespace dbp
