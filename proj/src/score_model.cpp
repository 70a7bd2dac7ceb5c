#include "dbp/score_model.hpp"

#include "dbp/errors.hpp"
#include "dbp/noise.hpp"
#include "dbp/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace dbp {

void GaussianMixture::validate() const {
  if (means.empty() || weights.size() != means.size()) {
    throw ConfigError("mixture needs one weight per mean and at least one component");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw ConfigError("mixture weights must be positive");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("mixture weights must sum to 1");
  for (const Tensor& m : means) {
    if (m.shape() != means[0].shape()) throw ShapeError("mixture means differ in shape");
  }
  if (!(sigma > 0.0)) throw ConfigError("mixture sigma must be positive");
  if (!labels.empty()) {
    if (labels.size() != means.size()) throw ConfigError("mixture needs one label per component");
    for (int l : labels) {
      if (l < 0) throw ConfigError("mixture labels must be non-negative");
    }
  }
}

std::size_t GaussianMixture::classes() const {
  int top = -1;
  for (std::size_t k = 0; k < components(); ++k) top = std::max(top, label_of(k));
  return static_cast<std::size_t>(top + 1);
}

GaussianMixture unit_gaussian(std::size_t dim) { return {{1.0}, {Tensor::zeros({dim})}, 1.0, {}}; }

GaussianMixture stripe_mixture(std::size_t K, std::size_t H, std::size_t W, double amplitude, double sigma) {
  if (K < 2) throw ConfigError("stripe mixture needs at least 2 classes");
  GaussianMixture mix;
  mix.sigma = sigma;
  const double pi = std::numbers::pi;
  for (std::size_t k = 0; k < K; ++k) {
    // Stripes at angle k*pi/K with a period of about four pixels.
    const double theta = pi * static_cast<double>(k) / static_cast<double>(K);
    const double c = std::cos(theta), s = std::sin(theta);
    Eigen::ArrayXd a(static_cast<Eigen::Index>(H * W));
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        const double phase = 2.0 * pi * (c * static_cast<double>(j) + s * static_cast<double>(i)) / 4.0;
        a[static_cast<Eigen::Index>(i * W + j)] = std::cos(phase) >= 0.0 ? amplitude : -amplitude;
      }
    }
    mix.means.emplace_back(Shape{H, W}, std::move(a));
    mix.weights.push_back(1.0 / static_cast<double>(K));
  }
  return mix;
}

std::pair<Tensor, Tensor> ring_plane(std::size_t H, std::size_t W) {
  const GaussianMixture s = stripe_mixture(2, H, W, 1.0, 1.0);
  Eigen::ArrayXd e1 = s.means[0].array(), e2 = s.means[1].array();
  e1 /= std::sqrt(e1.square().sum());
  for (int pass = 0; pass < 2; ++pass) e2 -= (e1 * e2).sum() * e1;
  const double n2 = std::sqrt(e2.square().sum());
  if (n2 < 1e-9) throw ShapeError("image grid too small for a ring plane");
  e2 /= n2;
  return {Tensor({H, W}, std::move(e1)), Tensor({H, W}, std::move(e2))};
}

GaussianMixture ring_mixture(std::size_t classes, std::size_t per_class, std::size_t H, std::size_t W, double radius,
                             double sigma, double arc_fraction) {
  if (classes < 2 || per_class < 1) throw ConfigError("ring mixture needs at least 2 classes and 1 component each");
  if (!(radius > 0.0)) throw ConfigError("ring radius must be positive");
  if (!(arc_fraction > 0.0 && arc_fraction <= 1.0)) throw ConfigError("ring arc fraction must lie in (0, 1]");
  const auto [e1, e2] = ring_plane(H, W);
  const double sector = 2.0 * std::numbers::pi / static_cast<double>(classes);
  // A full ring spaces components evenly all the way round; a gapped one pins both arc ends.
  const double step = arc_fraction * sector / static_cast<double>(arc_fraction < 1.0 && per_class > 1 ? per_class - 1 : per_class);
  const double width = arc_fraction < 1.0 ? step * static_cast<double>(per_class - 1) : step * static_cast<double>(per_class);
  GaussianMixture mix;
  mix.sigma = sigma;
  for (std::size_t c = 0; c < classes; ++c) {
    const double start = sector * (static_cast<double>(c) + 0.5) - 0.5 * width;
    for (std::size_t j = 0; j < per_class; ++j) {
      const double theta = start + step * static_cast<double>(j);
      mix.means.push_back(radius * std::cos(theta) * e1 + radius * std::sin(theta) * e2);
      mix.weights.push_back(1.0 / static_cast<double>(classes * per_class));
      mix.labels.push_back(static_cast<int>(c));
    }
  }
  return mix;
}

GaussianMixture random_mixture(std::size_t K, std::size_t dim, double spread, double sigma, std::uint64_t seed) {
  GaussianMixture mix;
  mix.sigma = sigma;
  for (std::size_t k = 0; k < K; ++k) {
    mix.means.push_back(uniform_tensor(stream_key(seed, "data.means", {k}), {dim}, -spread, spread));
    mix.weights.push_back(1.0 / static_cast<double>(K));
  }
  return mix;
}

Marginal marginal_params(const GaussianMixture& mix, const NoiseSchedule& sched, double t) {
  const double a = sched.alpha(t);
  Marginal m;
  m.variance = a * mix.sigma * mix.sigma + (1.0 - a);
  for (const Tensor& mu : mix.means) m.means.push_back(std::sqrt(a) * mu);
  return m;
}

std::vector<LabeledSample> sample_mixture(const GaussianMixture& mix, std::size_t n, std::uint64_t seed) {
  mix.validate();
  const std::size_t C = mix.classes();
  std::vector<std::vector<std::size_t>> members(C);
  for (std::size_t k = 0; k < mix.components(); ++k) members[static_cast<std::size_t>(mix.label_of(k))].push_back(k);
  std::vector<LabeledSample> out;
  out.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto& m = members[j % C];
    if (m.empty()) throw ConfigError("class " + std::to_string(j % C) + " has no mixture component");
    std::size_t k = m[0];
    if (m.size() > 1) {
      StreamEngine eng(stream_key(seed, "data.component", {j}));
      k = m[std::uniform_int_distribution<std::size_t>(0, m.size() - 1)(eng)];
    }
    const Tensor z = normal_tensor(stream_key(seed, "data.sample", {j}), mix.shape());
    out.push_back({mix.means[k] + mix.sigma * z, mix.label_of(k)});
  }
  return out;
}

Tensor ScoreModel::score_eval(const Tensor& x, double t) const {
  Tape tape(false);
  return score(tape.leaf(x), t).value();
}

Tensor ScoreModel::score_vjp(const Tensor& x, double t, const Tensor& cotangent) const {
  Tape tape;
  const Var xv = tape.leaf(x);
  const Var s = score(xv, t);
  if (!s.tracked()) return Tensor::zeros(x.shape());
  return tape.backward(s, cotangent).wrt(xv);
}

MixtureScore::MixtureScore(GaussianMixture mix, NoiseSchedule sched) : mix_(std::move(mix)), sched_(sched) {
  mix_.validate();
  const std::size_t K = mix_.components(), d = mix_.means[0].size();
  Eigen::ArrayXd m(static_cast<Eigen::Index>(K * d)), mt(m.size());
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t i = 0; i < d; ++i) {
      m[static_cast<Eigen::Index>(k * d + i)] = mix_.means[k][i];
      mt[static_cast<Eigen::Index>(i * K + k)] = mix_.means[k][i];
    }
    sq_norms_.push_back(dot(mix_.means[k], mix_.means[k]));
  }
  means_ = Tensor({K, d}, std::move(m));
  means_t_ = Tensor({d, K}, std::move(mt));
}

// log pi_k - |x - sqrt(a) mu_k|^2 / 2v with the |x|^2 term dropped, since
// softmax over k does not see it.
Var MixtureScore::posterior_logits(const Var& x, double t) const {
  const std::size_t K = mix_.components(), d = x.size();
  const double a = sched_.alpha(t);
  const double v = a * mix_.sigma * mix_.sigma + (1.0 - a);
  Eigen::ArrayXd c(static_cast<Eigen::Index>(K));
  for (std::size_t k = 0; k < K; ++k) {
    c[static_cast<Eigen::Index>(k)] = std::log(mix_.weights[k]) - a * sq_norms_[k] / (2.0 * v);
  }
  const Var proj = reshape(matmul(Var(means_), reshape(x, {d, 1})), {K});
  return add(scale(proj, std::sqrt(a) / v), Var(Tensor({K}, std::move(c))));
}

Var MixtureScore::score(const Var& x, double t) const {
  if (x.shape() != mix_.shape()) {
    throw ShapeError("score: input " + shape_string(x.shape()) + " vs data " + shape_string(mix_.shape()));
  }
  const std::size_t K = mix_.components();
  const double a = sched_.alpha(t);
  const double v = a * mix_.sigma * mix_.sigma + (1.0 - a);
  const Var r = softmax(posterior_logits(x, t));
  // sum_k r_k sqrt(a) mu_k
  const Var center = scale(reshape(matmul(Var(means_t_), reshape(r, {K, 1})), x.shape()), std::sqrt(a));
  return scale(sub(x, center), -1.0 / v);
}

Tensor MixtureScore::responsibilities(const Tensor& x, double t) const {
  return softmax(posterior_logits(Var(x), t)).value();
}

MlpScore::MlpScore(Shape shape, std::size_t hidden, std::uint64_t seed) : shape_(std::move(shape)) {
  const std::size_t d = shape_size(shape_);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  w1_ = s1 * normal_tensor(stream_key(seed, "mlp.w1"), {hidden, d});
  b1_ = 0.1 * normal_tensor(stream_key(seed, "mlp.b1"), {hidden, 1});
  c1_ = normal_tensor(stream_key(seed, "mlp.c1"), {hidden, 1});
  w2_ = s2 * normal_tensor(stream_key(seed, "mlp.w2"), {d, hidden});
  b2_ = 0.1 * normal_tensor(stream_key(seed, "mlp.b2"), {d, 1});
}

Var MlpScore::score(const Var& x, double t) const {
  if (x.shape() != shape_) throw ShapeError("mlp score: unexpected input shape " + shape_string(x.shape()));
  const std::size_t d = x.size();
  const Var col = reshape(x, {d, 1});
  const Var h = tanh(add(add(matmul(Var(w1_), col), Var(b1_)), Var(t * c1_)));
  const Var out = add(matmul(Var(w2_), h), Var(b2_));
  // Pull toward the origin so purification with this model stays bounded.
  return reshape(sub(out, col), shape_);
}

}  // namespace dbp
