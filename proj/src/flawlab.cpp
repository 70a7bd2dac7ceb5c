#include "dbp/flawlab.hpp"

#include "dbp/errors.hpp"
#include "dbp/ops.hpp"
#include "dbp/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace dbp {

RelError rel_error(const Tensor& g_f, const Tensor& g_nf) {
  require_same_shape(g_f, g_nf, "rel_error");
  const double d = l2_norm(g_f - g_nf);
  return {d, d / std::max(l2_norm(g_f), 1e-12)};
}

namespace {

Purifier with_config(const Purifier& p, const PurifyConfig& cfg) { return Purifier(p.schedule(), p.model_ptr(), cfg); }

Tensor loss_seed(const Tensor& out, const LossFn& loss) {
  Tape tape;
  const Var o = tape.leaf(out);
  const Var l = loss(o);
  if (l.size() != 1) throw ShapeError("loss must be scalar");
  return l.tracked() ? tape.backward(l).wrt(o) : Tensor::zeros(out.shape());
}

// Seeds of trial k at grid point g.
std::uint64_t trial_seed(std::uint64_t seed, const char* exp, std::size_t g, int k) {
  return stream_key(seed, exp, {g, static_cast<std::uint64_t>(k)});
}

// Runs fn(trial) for every trial of one grid point and averages g_d and g_e.
template <class F>
FlawPoint averaged(double x_value, int trials, int jobs, F fn) {
  std::vector<RelError> errs(static_cast<std::size_t>(trials));
  parallel_for(errs.size(), jobs, [&](std::size_t k) { errs[k] = fn(static_cast<int>(k)); });
  FlawPoint pt{x_value, 0.0, 0.0, 0.0, trials};
  for (const RelError& e : errs) {
    pt.g_d += e.g_d;
    pt.g_e += e.g_e;
  }
  pt.g_d /= trials;
  pt.g_e /= trials;
  return pt;
}

void check_trials(int trials) {
  if (trials < 1) throw ConfigError("flaws.trials must be at least 1");
}

}  // namespace

Tensor drifted_gradient(const PurifyState& st, int copy, const Purifier& p, const LossFn& loss, double delta) {
  const PurifyConfig& cfg = p.config();
  Tape tape;
  const Var xl = tape.leaf(st.x);
  const bool guide_tracked = st.guide && cfg.guidance.aux == GuidanceSpec::Aux::identity;
  Var gl;
  if (st.guide) gl = guide_tracked ? tape.leaf(*st.guide) : Var(*st.guide);
  const Var* guide = st.guide ? &gl : nullptr;
  const double a = p.schedule().alpha(cfg.t_star);
  Var cur = xl;
  for (int r = 0; r < cfg.rounds; ++r) {
    cur = add(scale(cur, std::sqrt(a)), Var(std::sqrt(1.0 - a) * st.sampler.diffusion_noise(r, copy)));
    for (int i = p.steps(); i >= 1; --i) {
      cur = p.step(cur, i, p.time(i) + i * delta, p.step_noise(st.sampler, r, copy, i), guide);
    }
  }
  const Var l = loss(cur);
  if (!l.tracked()) return Tensor::zeros(st.x.shape());
  const Gradients g = tape.backward(l);
  return guide_tracked ? g.wrt(xl) + g.wrt(gl) : g.wrt(xl);
}

namespace {

// Backward sweep of coarse purifier q over per-round state logs indexed by coarse step.
// Coarse step i reads logs[r][i * stride].
Tensor coarse_sweep(const Tensor& seed, const std::vector<std::vector<Tensor>>& logs, int stride,
                    const PurifyState& st, int copy, const Purifier& q, const NoiseSampler& ns) {
  const Tensor* guide = st.guide ? &*st.guide : nullptr;
  const double sqrt_a = std::sqrt(q.schedule().alpha(q.config().t_star));
  Tensor grad = seed;
  std::optional<Tensor> g_grad;
  for (int r = q.config().rounds - 1; r >= 0; --r) {
    const auto& log = logs.at(static_cast<std::size_t>(r));
    for (int i = 1; i <= q.steps(); ++i) {
      const StepVjp sv = q.step_vjp(log.at(static_cast<std::size_t>(i * stride)), guide, i, q.time(i),
                                    q.step_noise(ns, r, copy, i), grad);
      grad = sv.d_state;
      if (guide) g_grad = g_grad ? *g_grad + sv.d_guide : sv.d_guide;
    }
    grad = sqrt_a * grad;
  }
  if (g_grad && q.config().guidance.aux == GuidanceSpec::Aux::identity) grad = grad + *g_grad;
  return grad;
}

NoiseSampler coarse_sampler(const PurifyState& st, const Purifier& p, int ratio) {
  const NoiseSampler& fine = st.sampler;
  return NoiseSampler(fine.seed(), fine.shape(), p.steps(), p.config().rounds, p.config().copies, ratio,
                      fine.enabled());
}

}  // namespace

Tensor surrogate_sweep_gradient(const PurifyState& st, int copy, const Purifier& p, const LossFn& loss, int ratio) {
  const Purifier q = coarsened(p, ratio);
  const NoiseSampler ns = coarse_sampler(st, p, ratio);
  const PurifyState cs = q.forward(st.x, ns, st.guide);
  return coarse_sweep(loss_seed(cs.output(copy), loss), cs.states.at(static_cast<std::size_t>(copy)), 1, cs, copy, q,
                      ns);
}

Tensor flawed_surrogate_gradient(const PurifyState& st, int copy, const Purifier& p, const LossFn& loss, int ratio) {
  const Purifier q = coarsened(p, ratio);
  const NoiseSampler ns = coarse_sampler(st, p, ratio);
  // Same loss cotangent as the correct sweep, so only the state reuse differs.
  const PurifyState cs = q.forward(st.x, ns, st.guide);
  // The flaw: coarse step i starts from the fine trajectory's state at the same time, not the coarse one's.
  return coarse_sweep(loss_seed(cs.output(copy), loss), st.states.at(static_cast<std::size_t>(copy)), ratio, st, copy,
                      q, ns);
}

FlawReport eot_variance_experiment(const FlawSetup& s, const std::vector<int>& copies_grid, int trials,
                                   std::uint64_t seed, int jobs) {
  check_trials(trials);
  if (!std::is_sorted(copies_grid.begin(), copies_grid.end())) throw ConfigError("eot grid must be ascending");
  FlawReport rep{"eot", seed, {}};
  for (std::size_t g = 0; g < copies_grid.size(); ++g) {
    if (copies_grid[g] < 1) throw ConfigError("eot grid entries must be at least 1");
    PurifyConfig cfg = s.purifier.config();
    cfg.copies = copies_grid[g];
    const Purifier p = with_config(s.purifier, cfg);
    std::vector<Tensor> gs(static_cast<std::size_t>(trials));
    parallel_for(gs.size(), jobs, [&](std::size_t k) {
      gs[k] = eot_gradient(s.x, p, s.loss, GradMode{}, trial_seed(seed, "flaw.eot", g, static_cast<int>(k))).mean;
    });

    Tensor mean = gs[0];
    for (std::size_t k = 1; k < gs.size(); ++k) mean = mean + gs[k];
    mean = mean / static_cast<double>(trials);
    FlawPoint pt{static_cast<double>(copies_grid[g]), 0.0, 0.0, 0.0, trials};
    double pair_sum = 0.0;
    for (std::size_t i = 0; i < gs.size(); ++i) {
      double worst = 0.0;
      for (std::size_t j = 0; j < gs.size(); ++j) {
        const double d = l2_norm(gs[i] - gs[j]);
        worst = std::max(worst, d);
        if (j > i) pair_sum += d;
      }
      pt.g_d_mean += worst;
    }
    const double pairs = 0.5 * trials * (trials - 1);
    pt.g_d = trials > 1 ? pair_sum / pairs : 0.0;
    pt.g_e = pt.g_d / std::max(l2_norm(mean), 1e-12);
    pt.g_d_mean /= trials;
    rep.points.push_back(pt);
  }
  return rep;
}

FlawReport time_drift_experiment(const FlawSetup& s, const std::vector<double>& t_star_grid, double delta, int trials,
                                 std::uint64_t seed, int jobs) {
  check_trials(trials);
  FlawReport rep{"time", seed, {}};
  for (std::size_t g = 0; g < t_star_grid.size(); ++g) {
    PurifyConfig cfg = s.purifier.config();
    cfg.t_star = t_star_grid[g];
    cfg.copies = 1;
    const Purifier p = with_config(s.purifier, cfg);
    rep.points.push_back(averaged(cfg.t_star, trials, jobs, [&](int k) {
      const PurifyState st = p.forward(s.x, trial_seed(seed, "flaw.time", g, k));
      return rel_error(drifted_gradient(st, 0, p, s.loss, 0.0), drifted_gradient(st, 0, p, s.loss, delta));
    }));
  }
  return rep;
}

FlawReport guidance_omission_experiment(const FlawSetup& s, const std::vector<double>& t_star_grid, int trials,
                                        std::uint64_t seed, int jobs) {
  check_trials(trials);
  if (!s.purifier.config().guidance.active()) throw ConfigError("guidance experiment needs guidance.kind = mse");
  FlawReport rep{"guidance", seed, {}};
  for (std::size_t g = 0; g < t_star_grid.size(); ++g) {
    PurifyConfig cfg = s.purifier.config();
    cfg.t_star = t_star_grid[g];
    cfg.copies = 1;
    const Purifier p = with_config(s.purifier, cfg);
    rep.points.push_back(averaged(cfg.t_star, trials, jobs, [&](int k) {
      const PurifyState st = p.forward(s.x, trial_seed(seed, "flaw.guidance", g, k));
      const GradResult r = path_gradient(st, 0, p, s.loss, GradMode{}).result;
      return rel_error(r.total(), r.grad);
    }));
  }
  return rep;
}

FlawReport surrogate_mismatch_experiment(const FlawSetup& s, const std::vector<int>& ratios, int trials,
                                         std::uint64_t seed, int jobs) {
  check_trials(trials);
  FlawReport rep{"surrogate", seed, {}};
  PurifyConfig cfg = s.purifier.config();
  cfg.copies = 1;
  const Purifier p = with_config(s.purifier, cfg);
  for (std::size_t g = 0; g < ratios.size(); ++g) {
    const int ratio = ratios[g];
    if (ratio < 1 || p.steps() % ratio != 0) {
      throw ConfigError("surrogate ratio " + std::to_string(ratio) + " must divide the " +
                        std::to_string(p.steps()) + " fine steps");
    }
    rep.points.push_back(averaged(ratio, trials, jobs, [&](int k) {
      const PurifyState st = p.forward(s.x, trial_seed(seed, "flaw.surrogate", g, k));
      return rel_error(surrogate_sweep_gradient(st, 0, p, s.loss, ratio),
                       flawed_surrogate_gradient(st, 0, p, s.loss, ratio));
    }));
  }
  return rep;
}

}  // namespace dbp
