#include "dbp/noise.hpp"

#include "dbp/errors.hpp"

#include <cmath>
#include <random>
#include <string>

namespace dbp {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_key(std::uint64_t seed, std::string_view component,
                         std::initializer_list<std::uint64_t> indices) {
  // FNV-1a over the component name.
  std::uint64_t name = 0xcbf29ce484222325ULL;
  for (unsigned char c : component) {
    name ^= c;
    name *= 0x100000001b3ULL;
  }
  std::uint64_t k = splitmix64(seed ^ splitmix64(name));
  for (std::uint64_t i : indices) k = splitmix64(k ^ splitmix64(i + 0x632be59bd9b4e019ULL));
  return k;
}

Tensor normal_tensor(std::uint64_t key, const Shape& shape) {
  StreamEngine eng(key);
  std::normal_distribution<double> dist;
  Eigen::ArrayXd a(static_cast<Eigen::Index>(shape_size(shape)));
  for (auto& v : a) v = dist(eng);
  return Tensor(shape, std::move(a));
}

Tensor uniform_tensor(std::uint64_t key, const Shape& shape, double lo, double hi) {
  StreamEngine eng(key);
  std::uniform_real_distribution<double> dist(lo, hi);
  Eigen::ArrayXd a(static_cast<Eigen::Index>(shape_size(shape)));
  for (auto& v : a) v = dist(eng);
  return Tensor(shape, std::move(a));
}

NoiseSampler::NoiseSampler(std::uint64_t seed, Shape shape, int fine_steps, int rounds, int copies, int stride,
                           bool enabled)
    : seed_(seed),
      shape_(std::move(shape)),
      fine_steps_(fine_steps),
      rounds_(rounds),
      copies_(copies),
      stride_(stride),
      enabled_(enabled) {
  if (stride < 1 || fine_steps < 0 || fine_steps % stride != 0) {
    throw ConfigError("noise stride " + std::to_string(stride) + " does not divide " +
                      std::to_string(fine_steps) + " steps");
  }
}

void NoiseSampler::check(int round, int copy) const {
  if (round < 0 || round >= rounds_) throw RangeError("noise round " + std::to_string(round) + " out of range");
  if (copy < 0 || copy >= copies_) throw RangeError("noise copy " + std::to_string(copy) + " out of range");
}

Tensor NoiseSampler::fine(int round, int copy, int i) const {
  return normal_tensor(stream_key(seed_, "purify.step",
                                  {static_cast<std::uint64_t>(copy), static_cast<std::uint64_t>(round),
                                   static_cast<std::uint64_t>(i)}),
                       shape_);
}

Tensor NoiseSampler::step_noise(int round, int copy, int i) const {
  check(round, copy);
  if (i < 1 || i > steps()) throw RangeError("noise step " + std::to_string(i) + " out of range");
  if (!enabled_) return Tensor::zeros(shape_);
  if (stride_ == 1) return fine(round, copy, i);
  Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(shape_size(shape_)));
  for (int f = (i - 1) * stride_ + 1; f <= i * stride_; ++f) acc += fine(round, copy, f).array();
  return Tensor(shape_, acc / std::sqrt(static_cast<double>(stride_)));
}

Tensor NoiseSampler::diffusion_noise(int round, int copy) const {
  check(round, copy);
  if (!enabled_) return Tensor::zeros(shape_);
  return normal_tensor(stream_key(seed_, "purify.diffuse",
                                  {static_cast<std::uint64_t>(copy), static_cast<std::uint64_t>(round)}),
                       shape_);
}

}  // namespace dbp
