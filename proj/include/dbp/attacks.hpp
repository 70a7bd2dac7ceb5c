#pragma once

#include "dbp/classifier.hpp"
#include "dbp/diffgrad.hpp"
#include "dbp/filters.hpp"
#include "dbp/perceptual.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace dbp {

/// When an attacked input counts as broken, judged on the purified copies.
struct SuccessRule {
  enum class Kind { sp, wor, mv };
  Kind kind = Kind::sp;
  /// mv only: votes come from the first k copies
  int k = 1;

  bool holds(const std::vector<int>& preds, int y) const;
  /// Copies the rule needs to see.
  int copies_needed() const { return kind == Kind::mv ? k : 1; }
};

SuccessRule parse_success_rule(const std::string& name, int k = 1);
std::string success_rule_name(const SuccessRule& r);

struct AttackConfig {
  enum class Kind { pgd, lf };
  Kind kind = Kind::pgd;
  /// pgd L∞ budget; infinity leaves only the value range.
  double eps_inf = 0.5;
  /// pgd step; 0 means eps_inf / 4
  double eta = 0.0;
  int iters = 10;
  /// lf: gradient accumulation factor
  int eot_steps = 1;
  double lr_delta = 0.008;
  double lr_filters = 0.05;
  double c = 1e4;
  double tau_p = 0.05;
  SuccessRule success;
  double min_val = -1.0, max_val = 1.0;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::size_t, std::size_t>> filter_shapes{{3, 3}, {5, 5}, {3, 3}};
  double sigma_c = std::numeric_limits<double>::infinity();
  bool color_from_input = true;
  /// Judge success on a separate fresh batch instead of the EOT copies.
  bool fresh_eval = false;
  /// pgd: stop as soon as the success rule holds
  bool early_stop = true;

  double step_size() const { return eta > 0.0 ? eta : eps_inf / 4.0; }
  void validate() const;
};

AttackConfig::Kind parse_attack_kind(const std::string& name);

/// Purifier, classifier and how gradients are taken through them.
struct Pipeline {
  const Purifier& purifier;
  const Classifier& clf;
  LossKind loss = LossKind::max_margin;
  GradMode grad;
  int jobs = 1;
  const PerceptualProxy* perceptual = nullptr;
};

/// Predicted label of every purified copy.
std::vector<int> copy_predictions(const PurifyState& st, const Classifier& clf);

struct TraceRow {
  int iteration = 0;
  double loss = 0.0;
  /// pgd: L∞ distance to x; lf: perceptual distance
  double distance = 0.0;
  std::vector<int> preds;
};

struct AttackResult {
  Tensor x_adv;
  bool success = false;
  /// Iterations whose update was applied before stopping.
  int iterations = 0;
  std::vector<int> final_preds;
  std::vector<TraceRow> trace;
  /// Distance of x_adv from x: L-inf for pgd, perceptual for lf.
  double distance = 0.0;
};

/// Key of the purification randomness used at one attack iteration.
std::uint64_t attack_iteration_seed(std::uint64_t seed, std::uint64_t sample, int iteration);

/// Sign-gradient PGD with EOT gradients, stopping as soon as the success rule holds.
AttackResult pgd_attack(const Tensor& x, int y, const AttackConfig& cfg, const Pipeline& pl,
                        std::uint64_t sample = 0);

/// Optimizable-filter attack. Returns x itself unless some iterate both
/// satisfied the success rule and stayed within the perceptual threshold.
AttackResult lf_attack(const Tensor& x, int y, const AttackConfig& cfg, const Pipeline& pl, std::uint64_t sample = 0);

AttackResult run_attack(const Tensor& x, int y, const AttackConfig& cfg, const Pipeline& pl, std::uint64_t sample = 0);

/// Affine map of [min_val, max_val] onto (-1, 1) (clamped 1e-6 inside), then arctanh.
Tensor arctanh_reparam(const Tensor& x, double min_val, double max_val);
/// Inverse of arctanh_reparam.
Var tanh_scale(const Var& u, double min_val, double max_val);

/// Adam over a fixed list of parameter tensors.
class Adam {
 public:
  Adam(std::vector<double> lrs, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads);

 private:
  std::vector<double> lrs_;
  double b1_, b2_, eps_;
  int t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace dbp
