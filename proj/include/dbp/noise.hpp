#pragma once

#include "dbp/tensor.hpp"

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace dbp {

std::uint64_t splitmix64(std::uint64_t x);

/// Key of an independent stream: a hash of the master seed, a component name
/// and any number of indices. Adding new components never shifts old streams.
std::uint64_t stream_key(std::uint64_t seed, std::string_view component,
                         std::initializer_list<std::uint64_t> indices = {});

/// Counter-mode uniform bit generator over one stream key.
class StreamEngine {
 public:
  using result_type = std::uint64_t;
  explicit StreamEngine(std::uint64_t key) : key_(key) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() { return splitmix64(key_ ^ splitmix64(++counter_)); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Standard normal tensor drawn from one stream; a pure function of (key, shape).
Tensor normal_tensor(std::uint64_t key, const Shape& shape);
/// Uniform [lo, hi) tensor drawn from one stream.
Tensor uniform_tensor(std::uint64_t key, const Shape& shape, double lo, double hi);

/// Reproducible noise for purification. Every draw is keyed by
/// (seed, copy, round, step) so any draw can be regenerated on its own.
///
/// With stride k > 1 the sampler serves a coarse process whose step j spans
/// fine steps (j-1)k+1 .. jk: its noise is the sum of those fine draws over
/// sqrt(k), i.e. the same Brownian path seen at a coarser resolution.
class NoiseSampler {
 public:
  NoiseSampler(std::uint64_t seed, Shape shape, int fine_steps, int rounds, int copies, int stride = 1,
               bool enabled = true);

  /// Noise of step i (1-based, in this sampler's own step units).
  Tensor step_noise(int round, int copy, int i) const;
  /// Draw used by the closed-form forward diffusion at the start of a round.
  Tensor diffusion_noise(int round, int copy) const;

  std::uint64_t seed() const noexcept { return seed_; }
  int stride() const noexcept { return stride_; }
  int steps() const noexcept { return fine_steps_ / stride_; }
  bool enabled() const noexcept { return enabled_; }
  const Shape& shape() const noexcept { return shape_; }

 private:
  void check(int round, int copy) const;
  Tensor fine(int round, int copy, int i) const;

  std::uint64_t seed_;
  Shape shape_;
  int fine_steps_;
  int rounds_;
  int copies_;
  int stride_;
  bool enabled_;
};

}  // namespace dbp
