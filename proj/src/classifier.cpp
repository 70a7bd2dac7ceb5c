#include "dbp/classifier.hpp"

#include "dbp/errors.hpp"
#include "dbp/noise.hpp"
#include "dbp/ops.hpp"

#include <cmath>
#include <numbers>

namespace dbp {

int Classifier::predict(const Tensor& x) const {
  const Tensor l = logits(Var(x)).value();
  std::size_t best = 0;
  for (std::size_t k = 1; k < l.size(); ++k) {
    if (l[k] > l[best]) best = k;
  }
  return static_cast<int>(best);
}

BayesClassifier::BayesClassifier(GaussianMixture mix) : mix_(std::move(mix)) {
  mix_.validate();
  if (mix_.classes() < 2) throw ConfigError("classifier needs at least 2 classes");
}

Var BayesClassifier::logits(const Var& x) const {
  if (x.shape() != mix_.shape()) throw ShapeError("classifier input " + shape_string(x.shape()));
  const double s2 = mix_.sigma * mix_.sigma;
  const double d = static_cast<double>(x.size());
  const double norm = -0.5 * d * std::log(2.0 * std::numbers::pi * s2);
  std::vector<Var> parts;
  for (std::size_t k = 0; k < mix_.components(); ++k) {
    const Var q = sum(square(sub(x, Var(mix_.means[k]))));
    parts.push_back(shift(scale(q, -1.0 / (2.0 * s2)), std::log(mix_.weights[k]) + norm));
  }
  const Var comp = concat(parts);
  if (mix_.labels.empty()) return comp;

  // Class logit: log-sum-exp over the class's components.
  std::vector<Var> cls;
  for (std::size_t c = 0; c < classes(); ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < mix_.components(); ++k) {
      if (mix_.label_of(k) == static_cast<int>(c)) idx.push_back(k);
    }
    if (idx.empty()) throw ConfigError("class " + std::to_string(c) + " has no mixture component");
    const Var g = gather(comp, idx);
    const double m = g.value().array().maxCoeff();
    cls.push_back(shift(log(sum(exp(shift(g, -m)))), m));
  }
  return concat(cls);
}

LinearClassifier::LinearClassifier(Tensor W, Tensor b, Shape input_shape)
    : W_(std::move(W)), b_(std::move(b)), input_shape_(std::move(input_shape)) {
  if (W_.rank() != 2 || W_.shape()[1] != shape_size(input_shape_) || b_.shape() != Shape{W_.shape()[0]}) {
    throw ShapeError("linear classifier: inconsistent W " + shape_string(W_.shape()) + ", b " +
                     shape_string(b_.shape()));
  }
  if (W_.shape()[0] < 2) throw ConfigError("classifier needs at least 2 classes");
}

Var LinearClassifier::logits(const Var& x) const {
  if (x.shape() != input_shape_) throw ShapeError("classifier input " + shape_string(x.shape()));
  const Var col = reshape(x, {x.size(), 1});
  return add(reshape(matmul(Var(W_), col), {classes()}), Var(b_));
}

namespace {

// One random direction of norm lambda per class, orthogonal to every mixture mean.
std::vector<Eigen::ArrayXd> nonrobust_directions(const GaussianMixture& mix, std::size_t C, double lambda,
                                                 std::uint64_t seed) {
  const std::size_t d = shape_size(mix.shape());
  // Orthonormal basis of the span of the means (Gram-Schmidt).
  std::vector<Eigen::VectorXd> basis;
  auto project_out = [&](Eigen::VectorXd v) {
    for (const auto& q : basis) v -= q.dot(v) * q;
    return v;
  };
  for (const Tensor& m : mix.means) {
    Eigen::VectorXd v = project_out(m.array().matrix());
    v = project_out(v);
    if (v.norm() > 1e-9) basis.push_back(v / v.norm());
  }
  if (basis.size() >= d) throw ConfigError("mixture means span the whole input space");
  std::vector<Eigen::ArrayXd> out;
  for (std::size_t c = 0; c < C; ++c) {
    Eigen::VectorXd r = project_out(normal_tensor(stream_key(seed, "clf.nonrobust", {c}), {d}).array().matrix());
    r = project_out(r);  // second pass keeps it orthogonal to working precision
    out.push_back((lambda / r.norm()) * r.array());
  }
  return out;
}

}  // namespace

LinearClassifier bayes_linear(const GaussianMixture& mix, double lambda, std::uint64_t seed) {
  mix.validate();
  if (!mix.labels.empty()) throw ConfigError("bayes_linear needs one component per class");
  const std::size_t C = mix.components();
  const std::size_t d = shape_size(mix.shape());
  const double s2 = mix.sigma * mix.sigma;
  const auto r = nonrobust_directions(mix, C, lambda, seed);

  Eigen::ArrayXd W(static_cast<Eigen::Index>(C * d));
  Eigen::ArrayXd b(static_cast<Eigen::Index>(C));
  for (std::size_t c = 0; c < C; ++c) {
    const Eigen::ArrayXd mu = mix.means[c].array();
    W.segment(static_cast<Eigen::Index>(c * d), static_cast<Eigen::Index>(d)) = mu / s2 + r[c];
    b[static_cast<Eigen::Index>(c)] = std::log(mix.weights[c]) - mu.square().sum() / (2.0 * s2);
  }
  return LinearClassifier(Tensor({C, d}, std::move(W)), Tensor({C}, std::move(b)), mix.shape());
}

LinearClassifier centroid_linear(const GaussianMixture& mix, double gain, double lambda, std::uint64_t seed) {
  mix.validate();
  const std::size_t C = mix.classes();
  const std::size_t d = shape_size(mix.shape());
  const auto r = nonrobust_directions(mix, C, lambda, seed);

  Eigen::ArrayXd W(static_cast<Eigen::Index>(C * d));
  for (std::size_t c = 0; c < C; ++c) {
    Eigen::ArrayXd centroid = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(d));
    for (std::size_t k = 0; k < mix.components(); ++k) {
      if (mix.label_of(k) == static_cast<int>(c)) centroid += mix.means[k].array();
    }
    const double n = std::sqrt(centroid.square().sum());
    if (n < 1e-12) throw ConfigError("class " + std::to_string(c) + " has a zero centroid");
    W.segment(static_cast<Eigen::Index>(c * d), static_cast<Eigen::Index>(d)) = (gain / n) * centroid + r[c];
  }
  return LinearClassifier(Tensor({C, d}, std::move(W)), Tensor::zeros({C}), mix.shape());
}

LossKind parse_loss(const std::string& name) {
  if (name == "max_margin" || name == "margin") return LossKind::max_margin;
  if (name == "prob_y" || name == "prob") return LossKind::prob_y;
  throw ConfigError("unknown loss '" + name + "'");
}

namespace {

void check_label(const Var& logits, int y) {
  if (y < 0 || static_cast<std::size_t>(y) >= logits.size()) {
    throw RangeError("label " + std::to_string(y) + " out of range for " + std::to_string(logits.size()) +
                     " classes");
  }
}

}  // namespace

Var max_margin_loss(const Var& logits, int y) {
  check_label(logits, y);
  if (logits.size() < 2) throw ShapeError("max_margin_loss needs at least 2 logits");
  std::vector<std::size_t> others;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (static_cast<int>(j) != y) others.push_back(j);
  }
  return sub(gather(logits, {static_cast<std::size_t>(y)}), max_reduce(gather(logits, others)));
}

Var prob_y_loss(const Var& logits, int y) {
  check_label(logits, y);
  return gather(softmax(logits), {static_cast<std::size_t>(y)});
}

Var class_loss(LossKind kind, const Var& logits, int y) {
  return kind == LossKind::max_margin ? max_margin_loss(logits, y) : prob_y_loss(logits, y);
}

bool misclassified(const Classifier& clf, const Tensor& x, int y) {
  return max_margin_loss(clf.logits(Var(x)), y).value()[0] < 0.0;
}

}  // namespace dbp
