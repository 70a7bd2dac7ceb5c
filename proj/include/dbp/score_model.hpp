#pragma once

#include "dbp/schedule.hpp"
#include "dbp/tape.hpp"

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

namespace dbp {

/// Isotropic Gaussian mixture sum_k pi_k N(mu_k, sigma^2 I). Means may be any
/// shape (images are (H, W)); all share it.
struct GaussianMixture {
  std::vector<double> weights;
  std::vector<Tensor> means;
  double sigma = 1.0;
  /// Class of each component; empty means component k is class k.
  std::vector<int> labels;

  std::size_t components() const noexcept { return means.size(); }
  int label_of(std::size_t k) const { return labels.empty() ? static_cast<int>(k) : labels.at(k); }
  std::size_t classes() const;
  const Shape& shape() const { return means.at(0).shape(); }
  void validate() const;
};

GaussianMixture unit_gaussian(std::size_t dim);
/// K classes of oriented stripe templates on an H x W grid, amplitude +-a.
GaussianMixture stripe_mixture(std::size_t K, std::size_t H, std::size_t W, double amplitude, double sigma);
/// per_class * classes equal-weight components on a circle of the given
/// radius in a fixed 2-D plane of H x W images. Class c owns an arc centered
/// at 2 pi (c + 1/2) / classes covering arc_fraction of its sector; the rest
/// of the sector is an empty gap. With spacing below sigma each arc
/// approximates a continuous one-dimensional data manifold.
GaussianMixture ring_mixture(std::size_t classes, std::size_t per_class, std::size_t H, std::size_t W, double radius,
                             double sigma, double arc_fraction = 1.0);
/// Orthonormal pair of H x W images spanning the ring plane.
std::pair<Tensor, Tensor> ring_plane(std::size_t H, std::size_t W);
/// K means drawn uniformly from [-spread, spread]^dim.
GaussianMixture random_mixture(std::size_t K, std::size_t dim, double spread, double sigma, std::uint64_t seed);

struct Marginal {
  std::vector<Tensor> means;
  double variance;
};

/// Diffused mixture at time t: means sqrt(alpha) mu_k, variance alpha sigma^2 + 1 - alpha.
Marginal marginal_params(const GaussianMixture& mix, const NoiseSchedule& sched, double t);

struct LabeledSample {
  Tensor x;
  int label;
};

/// n draws, classes taken round-robin and a uniformly drawn component within the class.
std::vector<LabeledSample> sample_mixture(const GaussianMixture& mix, std::size_t n, std::uint64_t seed);

class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  /// s(x, t) composed from taped primitives.
  virtual Var score(const Var& x, double t) const = 0;

  Tensor score_eval(const Tensor& x, double t) const;
  Tensor score_vjp(const Tensor& x, double t, const Tensor& cotangent) const;
};

class MixtureScore : public ScoreModel {
 public:
  MixtureScore(GaussianMixture mix, NoiseSchedule sched);
  Var score(const Var& x, double t) const override;
  /// Posterior component weights at time t.
  Tensor responsibilities(const Tensor& x, double t) const;
  const GaussianMixture& mixture() const noexcept { return mix_; }

 private:
  // Posterior logits at time t, up to a per-input constant: shape (K).
  Var posterior_logits(const Var& x, double t) const;

  GaussianMixture mix_;
  NoiseSchedule sched_;
  Tensor means_, means_t_;  // (K, d) and (d, K)
  std::vector<double> sq_norms_;
};

/// Fixed random-weight two-layer network with a time input. No training.
class MlpScore : public ScoreModel {
 public:
  MlpScore(Shape shape, std::size_t hidden, std::uint64_t seed);
  Var score(const Var& x, double t) const override;

 private:
  Shape shape_;
  Tensor w1_, b1_, c1_, w2_, b2_;
};

}  // namespace dbp
