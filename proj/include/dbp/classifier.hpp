#pragma once

#include "dbp/score_model.hpp"
#include "dbp/tape.hpp"

#include <cstdint>
#include <string>

namespace dbp {

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual Var logits(const Var& x) const = 0;
  virtual std::size_t classes() const = 0;

  /// argmax of the logits; ties go to the smallest index.
  int predict(const Tensor& x) const;
};

/// Exact posterior of the mixture components: log pi_k + log N(x; mu_k, sigma^2 I).
/// With component labels, a class logit is the log-sum-exp over its components.
class BayesClassifier : public Classifier {
 public:
  explicit BayesClassifier(GaussianMixture mix);
  Var logits(const Var& x) const override;
  std::size_t classes() const override { return mix_.classes(); }

 private:
  GaussianMixture mix_;
};

/// logits = W vec(x) + b with W of shape (C, d).
class LinearClassifier : public Classifier {
 public:
  LinearClassifier(Tensor W, Tensor b, Shape input_shape);
  Var logits(const Var& x) const override;
  std::size_t classes() const override { return W_.shape()[0]; }
  const Tensor& weights() const noexcept { return W_; }
  const Tensor& bias() const noexcept { return b_; }

 private:
  Tensor W_, b_;
  Shape input_shape_;
};

/// Linear rule equal to the Bayes rule of an equal-weight mixture, plus a
/// component of norm `lambda` per class that is orthogonal to every mean. That
/// component never changes a decision on the data manifold but dominates the
/// input gradient, which is what a gradient-obfuscated attack would follow.
LinearClassifier bayes_linear(const GaussianMixture& mix, double lambda, std::uint64_t seed);

/// logits_c = gain * unit(class centroid) . x + the same orthogonal nonrobust
/// component as bayes_linear. For a ring mixture this picks the nearest arc center.
LinearClassifier centroid_linear(const GaussianMixture& mix, double gain, double lambda, std::uint64_t seed);

enum class LossKind { max_margin, prob_y };

LossKind parse_loss(const std::string& name);

/// logits[y] - max_{j != y} logits[j]; negative iff y is not the unique winner.
Var max_margin_loss(const Var& logits, int y);
/// softmax(logits)[y]
Var prob_y_loss(const Var& logits, int y);
Var class_loss(LossKind kind, const Var& logits, int y);

/// Misclassification by margin sign; a tie counts as correct.
bool misclassified(const Classifier& clf, const Tensor& x, int y);

}  // namespace dbp
