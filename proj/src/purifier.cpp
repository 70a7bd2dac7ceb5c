#include "dbp/purifier.hpp"

#include "dbp/errors.hpp"
#include "dbp/ops.hpp"

#include <cmath>

namespace dbp {

int PurifyConfig::steps() const {
  if (!(dt < 0.0)) throw ConfigError("purify.dt must be negative");
  if (!(t_star >= 0.0 && t_star <= 1.0)) throw ConfigError("purify.t_star must lie in [0, 1]");
  const double n = t_star / -dt;
  const double r = std::round(n);
  if (std::abs(n - r) > 1e-9 * std::max(1.0, n)) {
    throw ConfigError("purify.dt must divide purify.t_star into a whole number of steps");
  }
  return static_cast<int>(r);
}

void PurifyConfig::validate() const {
  steps();
  if (rounds < 1) throw ConfigError("purify.rounds must be at least 1");
  if (copies < 1) throw ConfigError("purify.copies must be at least 1");
  if (guidance.scale < 0.0) throw ConfigError("guidance.scale must be non-negative");
}

Solver parse_solver(const std::string& name) {
  if (name == "sde") return Solver::sde;
  if (name == "ddpm") return Solver::ddpm;
  throw ConfigError("unknown solver '" + name + "'");
}

std::string solver_name(Solver s) { return s == Solver::sde ? "sde" : "ddpm"; }

Tensor diffuse(const Tensor& x, double t_star, const Tensor& eps, const NoiseSchedule& sched) {
  require_same_shape(x, eps, "diffuse");
  const double a = sched.alpha(t_star);
  return std::sqrt(a) * x + std::sqrt(1.0 - a) * eps;
}

Purifier::Purifier(NoiseSchedule sched, std::shared_ptr<const ScoreModel> model, PurifyConfig cfg)
    : sched_(sched), model_(std::move(model)), cfg_(cfg) {
  cfg_.validate();
  steps_ = cfg_.steps();
  if (!model_) throw ConfigError("purifier needs a score model");
}

NoiseSampler Purifier::make_sampler(const Shape& shape, std::uint64_t seed) const {
  return NoiseSampler(seed, shape, steps_, cfg_.rounds, cfg_.copies, 1, cfg_.stochastic);
}

Var Purifier::calc_dx(const Var& x_hat, double t, const Tensor& noise, const Var* guide) const {
  const double h = cfg_.abs_dt();
  const Var s = model_->score(x_hat, t);
  Var dx;
  double rate;
  if (cfg_.solver == Solver::sde) {
    const double b = sched_.beta(t);
    rate = b * h;
    dx = scale(add(x_hat, scale(s, 2.0)), -0.5 * b * cfg_.dt);
    dx = add(dx, Var(std::sqrt(rate) * noise));
  } else {
    rate = sched_.step_beta(t, h);
    const double keep = std::sqrt(1.0 - rate);
    dx = scale(add(scale(x_hat, 1.0 - keep), scale(s, rate)), 1.0 / keep);
    dx = add(dx, Var(std::sqrt(rate) * noise));
  }
  if (cfg_.guidance.active()) {
    if (!guide) throw ConfigError("mse guidance needs a guide");
    // -s * rate * grad ||x_hat - guide||^2
    dx = add(dx, scale(sub(x_hat, *guide), -2.0 * cfg_.guidance.scale * rate));
  }
  return dx;
}

Var Purifier::step(const Var& x_hat, int, double t, const Tensor& noise, const Var* guide) const {
  return add(x_hat, calc_dx(x_hat, t, noise, guide));
}

Tensor Purifier::step_noise(const NoiseSampler& ns, int round, int copy, int i) const {
  if (cfg_.solver == Solver::ddpm && i == 1 && !cfg_.ddpm_final_noise) return Tensor::zeros(ns.shape());
  return ns.step_noise(round, copy, i);
}

std::optional<Tensor> Purifier::resolve_guide(const Tensor& x, std::optional<Tensor> external) const {
  if (!cfg_.guidance.active()) return std::nullopt;
  if (cfg_.guidance.aux == GuidanceSpec::Aux::identity) return x;
  if (!external) throw ConfigError("mse guidance without g_aux needs an explicit guide");
  require_same_shape(x, *external, "guide");
  return external;
}

PurifyState Purifier::forward(const Tensor& x, std::uint64_t seed, std::optional<Tensor> external_guide) const {
  return forward(x, make_sampler(x.shape(), seed), std::move(external_guide));
}

PurifyState Purifier::forward(const Tensor& x, const NoiseSampler& sampler,
                              std::optional<Tensor> external_guide) const {
  if (sampler.shape() != x.shape() || sampler.steps() != steps_) {
    throw ConfigError("noise sampler does not match the purifier");
  }
  PurifyState st{x, resolve_guide(x, std::move(external_guide)), sampler, {}};
  const double a = sched_.alpha(cfg_.t_star);
  const Var guide_var = st.guide ? Var(*st.guide) : Var();
  const Var* guide = st.guide ? &guide_var : nullptr;

  st.states.resize(static_cast<std::size_t>(cfg_.copies));
  for (int c = 0; c < cfg_.copies; ++c) {
    auto& rounds = st.states[static_cast<std::size_t>(c)];
    Tensor input = x;
    for (int r = 0; r < cfg_.rounds; ++r) {
      std::vector<Tensor> log(static_cast<std::size_t>(steps_) + 1);
      Var cur = add(scale(Var(input), std::sqrt(a)), Var(std::sqrt(1.0 - a) * sampler.diffusion_noise(r, c)));
      log[static_cast<std::size_t>(steps_)] = cur.value();
      for (int i = steps_; i >= 1; --i) {
        cur = step(cur, i, time(i), step_noise(sampler, r, c, i), guide);
        if (!cur.value().all_finite()) {
          throw NumericDivergenceError("purify: non-finite state in round " + std::to_string(r) + " at step " +
                                       std::to_string(i));
        }
        log[static_cast<std::size_t>(i - 1)] = cur.value();
      }
      input = cur.value();
      rounds.push_back(std::move(log));
    }
  }
  return st;
}

StepVjp Purifier::step_vjp(const Tensor& x_hat, const Tensor* guide, int i, double t, const Tensor& noise,
                           const Tensor& cot) const {
  Tape tape;
  const Var xl = tape.leaf(x_hat);
  const Var gl = guide ? tape.leaf(*guide) : Var();
  const Var next = step(xl, i, t, noise, guide ? &gl : nullptr);
  const Var obj = sum(mul(next, Var(cot)));
  const Gradients g = tape.backward(obj);
  StepVjp out{next.value(), g.wrt(xl), guide ? g.wrt(gl) : Tensor::zeros(x_hat.shape()), tape.size()};
  return out;
}

Var Purifier::purify_taped(const Var& x, const Var* guide, const NoiseSampler& ns, int copy) const {
  if (cfg_.guidance.active() && !guide) throw ConfigError("mse guidance needs a guide");
  const double a = sched_.alpha(cfg_.t_star);
  Var cur = x;
  for (int r = 0; r < cfg_.rounds; ++r) {
    cur = add(scale(cur, std::sqrt(a)), Var(std::sqrt(1.0 - a) * ns.diffusion_noise(r, copy)));
    for (int i = ns.steps(); i >= 1; --i) cur = step(cur, i, time(i), step_noise(ns, r, copy, i), guide);
  }
  return cur;
}

}  // namespace dbp
