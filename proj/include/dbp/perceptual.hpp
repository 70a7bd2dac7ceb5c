#pragma once

#include "dbp/tape.hpp"

#include <cstdint>

namespace dbp {

/// Stand-in for a learned perceptual metric on (H, W) images: fixed seeded
/// random 3x3 conv banks at full and half resolution, tanh, per-pixel unit
/// normalization across channels, then the mean squared feature difference
/// averaged over the two scales.
class PerceptualProxy {
 public:
  explicit PerceptualProxy(std::uint64_t seed = 0x5eed, std::size_t channels = 8);

  Var distance(const Var& a, const Var& b) const;
  double distance(const Tensor& a, const Tensor& b) const;

 private:
  Var features(const Var& image, std::size_t scale) const;

  std::size_t channels_;
  Tensor banks_[2];
};

}  // namespace dbp
