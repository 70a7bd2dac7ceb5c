#include "dbp/attacks.hpp"

#include "dbp/errors.hpp"
#include "dbp/noise.hpp"
#include "dbp/ops.hpp"
#include "dbp/protocol.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>

namespace dbp {

bool SuccessRule::holds(const std::vector<int>& preds, int y) const {
  if (preds.size() < static_cast<std::size_t>(copies_needed())) {
    throw ConfigError("success rule needs " + std::to_string(copies_needed()) + " purified copies");
  }
  switch (kind) {
    case Kind::sp:
      return preds[0] != y;
    case Kind::wor:
      for (int p : preds) {
        if (p != y) return true;
      }
      return false;
    case Kind::mv:
      return majority_vote(std::vector<int>(preds.begin(), preds.begin() + k)) != y;
  }
  return false;
}

SuccessRule parse_success_rule(const std::string& name, int k) {
  if (name == "sp") return {SuccessRule::Kind::sp, 1};
  if (name == "wor") return {SuccessRule::Kind::wor, 1};
  if (name == "mv") {
    if (k < 1) throw ConfigError("mv needs at least one vote");
    return {SuccessRule::Kind::mv, k};
  }
  throw ConfigError("unknown success condition '" + name + "'");
}

std::string success_rule_name(const SuccessRule& r) {
  switch (r.kind) {
    case SuccessRule::Kind::sp:
      return "sp";
    case SuccessRule::Kind::wor:
      return "wor";
    case SuccessRule::Kind::mv:
      return "mv";
  }
  return "sp";
}

void AttackConfig::validate() const {
  if (iters < 0) throw ConfigError("attack.iters must be non-negative");
  if (!(max_val > min_val)) throw ConfigError("attack value range is empty");
  if (kind == Kind::pgd) {
    if (!(eps_inf >= 0.0)) throw ConfigError("attack.eps_inf must be non-negative");
    if (eta < 0.0) throw ConfigError("attack.eta must be non-negative");
  } else {
    if (!(tau_p > 0.0)) throw ConfigError("attack.tau_p must be positive");
    if (!(c > 0.0)) throw ConfigError("attack.c must be positive");
    if (eot_steps < 1) throw ConfigError("attack.eot_steps must be at least 1");
    if (!(lr_delta >= 0.0 && lr_filters >= 0.0)) throw ConfigError("learning rates must be non-negative");
    if (!(sigma_c > 0.0)) throw ConfigError("attack.sigma_c must be positive");
  }
}

AttackConfig::Kind parse_attack_kind(const std::string& name) {
  if (name == "pgd") return AttackConfig::Kind::pgd;
  if (name == "lf") return AttackConfig::Kind::lf;
  throw ConfigError("unknown attack method '" + name + "'");
}

std::vector<int> copy_predictions(const PurifyState& st, const Classifier& clf) {
  std::vector<int> preds(st.states.size());
  for (std::size_t c = 0; c < preds.size(); ++c) preds[c] = clf.predict(st.output(static_cast<int>(c)));
  return preds;
}

std::uint64_t attack_iteration_seed(std::uint64_t seed, std::uint64_t sample, int iteration) {
  return stream_key(seed, "attack.iter", {sample, static_cast<std::uint64_t>(iteration)});
}

namespace {

std::uint64_t fresh_seed(std::uint64_t seed, std::uint64_t sample, int iteration) {
  return stream_key(seed, "attack.eval", {sample, static_cast<std::uint64_t>(iteration)});
}

void check_pipeline(const AttackConfig& cfg, const Pipeline& pl) {
  cfg.validate();
  if (cfg.success.copies_needed() > pl.purifier.config().copies) {
    throw ConfigError("success rule needs more copies than the purifier draws");
  }
}

double mean_loss(const PurifyState& st, const Pipeline& pl, int y) {
  double acc = 0.0;
  for (std::size_t c = 0; c < st.states.size(); ++c) {
    acc += class_loss(pl.loss, pl.clf.logits(Var(st.output(static_cast<int>(c)))), y).value()[0];
  }
  return acc / static_cast<double>(st.states.size());
}

std::vector<int> judged_predictions(const Tensor& x, const PurifyState& st, const AttackConfig& cfg,
                                    const Pipeline& pl, std::uint64_t sample, int iteration) {
  if (!cfg.fresh_eval) return copy_predictions(st, pl.clf);
  return copy_predictions(pl.purifier.forward(x, fresh_seed(cfg.seed, sample, iteration)), pl.clf);
}

LossFn loss_of(const Pipeline& pl, int y) {
  return [&pl, y](const Var& x0) { return class_loss(pl.loss, pl.clf.logits(x0), y); };
}

}  // namespace

AttackResult pgd_attack(const Tensor& x, int y, const AttackConfig& cfg, const Pipeline& pl, std::uint64_t sample) {
  check_pipeline(cfg, pl);
  const double eps = cfg.eps_inf, eta = cfg.step_size();
  const Tensor lo(x.shape(), (x.array() - eps).max(cfg.min_val));
  const Tensor hi(x.shape(), (x.array() + eps).min(cfg.max_val));
  const LossFn loss = loss_of(pl, y);

  AttackResult res;
  res.x_adv = x;
  for (int k = 0;; ++k) {
    const PurifyState st = pl.purifier.forward(res.x_adv, attack_iteration_seed(cfg.seed, sample, k));
    TraceRow row{k, mean_loss(st, pl, y), max_abs_diff(res.x_adv, x),
                 judged_predictions(res.x_adv, st, cfg, pl, sample, k)};
    res.success = cfg.success.holds(row.preds, y);
    res.final_preds = row.preds;
    res.trace.push_back(std::move(row));
    if ((res.success && cfg.early_stop) || k == cfg.iters) break;

    const EotGradient g = eot_gradient(st, pl.purifier, loss, pl.grad, pl.jobs);
    res.x_adv = clamp(res.x_adv - eta * sign(g.mean), lo, hi);
    // (x + eps) - x may exceed eps by rounding; allow a few ulps of slack.
    if (!(max_abs_diff(res.x_adv, x) <= eps + 1e-12 * std::max(1.0, max_abs(x)))) throw std::logic_error("pgd iterate left the L-inf ball");
    res.iterations = k + 1;
  }
  res.distance = max_abs_diff(res.x_adv, x);
  return res;
}

Tensor arctanh_reparam(const Tensor& x, double min_val, double max_val) {
  const double m = 1.0 - 1e-6;
  Eigen::ArrayXd s = ((x.array() - min_val) / (max_val - min_val) * 2.0 - 1.0).max(-m).min(m);
  return Tensor(x.shape(), s.atanh());
}

Var tanh_scale(const Var& u, double min_val, double max_val) {
  const double half = 0.5 * (max_val - min_val);
  return shift(scale(tanh(u), half), min_val + half);
}

Adam::Adam(std::vector<double> lrs, double beta1, double beta2, double eps)
    : lrs_(std::move(lrs)), b1_(beta1), b2_(beta2), eps_(eps) {}

void Adam::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
  if (params.size() != lrs_.size() || grads.size() != lrs_.size()) throw ShapeError("Adam: parameter count mismatch");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Tensor::zeros(p.shape()));
      v_.push_back(Tensor::zeros(p.shape()));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, t_), c2 = 1.0 - std::pow(b2_, t_);
  for (std::size_t k = 0; k < params.size(); ++k) {
    require_same_shape(params[k], grads[k], "Adam");
    const Eigen::ArrayXd& g = grads[k].array();
    Eigen::ArrayXd m = b1_ * m_[k].array() + (1.0 - b1_) * g;
    Eigen::ArrayXd v = b2_ * v_[k].array() + (1.0 - b2_) * g.square();
    Eigen::ArrayXd p = params[k].array() - lrs_[k] * (m / c1) / ((v / c2).sqrt() + eps_);
    m_[k] = Tensor(params[k].shape(), std::move(m));
    v_[k] = Tensor(params[k].shape(), std::move(v));
    params[k] = Tensor(params[k].shape(), std::move(p));
  }
}

AttackResult lf_attack(const Tensor& x, int y, const AttackConfig& cfg, const Pipeline& pl, std::uint64_t sample) {
  check_pipeline(cfg, pl);
  if (x.rank() != 2) throw ShapeError("lf attack expects an (H, W) image");
  static const PerceptualProxy default_proxy;
  const PerceptualProxy& perc = pl.perceptual ? *pl.perceptual : default_proxy;
  const std::size_t H = x.shape()[0], W = x.shape()[1];

  FilterChain chain = identity_chain(H, W, cfg.filter_shapes, cfg.sigma_c);
  chain.color_from_input = cfg.color_from_input;
  // params[0] is the direct modifier, then one logits tensor per filter.
  std::vector<Tensor> params{Tensor::zeros(x.shape())};
  std::vector<double> lrs{cfg.lr_delta};
  for (const auto& f : chain.filters) {
    params.push_back(f.logits);
    lrs.push_back(cfg.lr_filters);
  }
  Adam opt(lrs);
  const Tensor x_inv = arctanh_reparam(x, cfg.min_val, cfg.max_val);
  const LossFn loss = loss_of(pl, y);

  AttackResult res;
  res.x_adv = x;
  std::vector<Tensor> acc;
  const int total = cfg.iters * cfg.eot_steps;
  for (int i = 1; i <= total; ++i) {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& p : params) leaves.push_back(tape.leaf(p));
    const std::vector<Var> logits(leaves.begin() + 1, leaves.end());
    const Var xa = chain_apply(tanh_scale(add(Var(x_inv), leaves[0]), cfg.min_val, cfg.max_val), chain, logits);
    const Var dist = perc.distance(Var(x), xa);

    const PurifyState st = pl.purifier.forward(xa.value(), attack_iteration_seed(cfg.seed, sample, i));
    const double penalty = cfg.c * std::max(dist.value()[0] - cfg.tau_p, 0.0);
    TraceRow row{i, mean_loss(st, pl, y) + penalty, dist.value()[0],
                 judged_predictions(xa.value(), st, cfg, pl, sample, i)};
    if (!std::isfinite(row.loss)) {
      throw NumericDivergenceError("lf attack: non-finite objective at iteration " + std::to_string(i));
    }
    const bool cond = cfg.success.holds(row.preds, y);
    const bool close = dist.value()[0] <= cfg.tau_p;
    res.trace.push_back(row);
    if (cond && close) {
      res.x_adv = xa.value();
      res.success = true;
      res.final_preds = row.preds;
      res.distance = row.distance;
      return res;
    }

    const EotGradient g = eot_gradient(st, pl.purifier, loss, pl.grad, pl.jobs);
    double mean = 0.0;
    for (double l : g.losses) mean += l;
    mean /= static_cast<double>(g.losses.size());
    const Var purified = tape.record("purified_loss", Tensor::scalar(mean), {&xa},
                                     [gm = g.mean](const Tensor& cot) { return std::vector<Tensor>{cot.item() * gm}; });
    const Var objective = add(purified, scale(relu(shift(dist, -cfg.tau_p)), cfg.c));
    const Gradients grads = tape.backward(objective);
    for (std::size_t k = 0; k < leaves.size(); ++k) {
      const Tensor gk = grads.wrt(leaves[k]);
      if (acc.size() < leaves.size()) {
        acc.push_back(gk);
      } else {
        acc[k] = acc[k] + gk;
      }
    }
    if (i % cfg.eot_steps == 0) {
      opt.step(params, acc);
      acc.clear();
      res.iterations = i / cfg.eot_steps;
    }
  }
  // Failure: x itself, judged with the iteration-0 randomness.
  res.final_preds = copy_predictions(pl.purifier.forward(x, attack_iteration_seed(cfg.seed, sample, 0)), pl.clf);
  return res;
}

AttackResult run_attack(const Tensor& x, int y, const AttackConfig& cfg, const Pipeline& pl, std::uint64_t sample) {
  return cfg.kind == AttackConfig::Kind::pgd ? pgd_attack(x, y, cfg, pl, sample) : lf_attack(x, y, cfg, pl, sample);
}

}  // namespace dbp
