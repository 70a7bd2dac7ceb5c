#include "dbp/diffgrad.hpp"

#include "dbp/errors.hpp"
#include "dbp/ops.hpp"
#include "dbp/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace dbp {

GradMode parse_grad_mode(const std::string& name, int ratio) {
  if (name == "full") return {GradMode::Kind::full, 1};
  if (name == "bpda") return {GradMode::Kind::bpda, 1};
  if (name == "oracle") return {GradMode::Kind::oracle, 1};
  if (name == "surrogate") {
    if (ratio < 1) throw ConfigError("grad.surrogate_ratio must be at least 1");
    return {GradMode::Kind::surrogate, ratio};
  }
  throw ConfigError("unknown gradient mode '" + name + "'");
}

GradResult checkpoint_backward(const Tensor& seed, const PurifyState& st, int copy, const Purifier& p,
                               CheckpointStats* stats) {
  require_same_shape(seed, st.x, "checkpoint_backward seed");
  const auto& rounds = st.states.at(static_cast<std::size_t>(copy));
  const Tensor* guide = st.guide ? &*st.guide : nullptr;
  const double sqrt_a = std::sqrt(p.schedule().alpha(p.config().t_star));

  Tensor grad = seed;
  std::optional<Tensor> g_grad;
  for (int r = p.config().rounds - 1; r >= 0; --r) {
    const auto& log = rounds.at(static_cast<std::size_t>(r));
    for (int i = 1; i <= p.steps(); ++i) {
      const StepVjp sv = p.step_vjp(log[static_cast<std::size_t>(i)], guide, i, p.time(i),
                                    p.step_noise(st.sampler, r, copy, i), grad);
      if (!bitwise_equal(sv.next, log[static_cast<std::size_t>(i - 1)])) {
        throw ReplayIntegrityError(r, i, "recomputed state differs from the stored forward state");
      }
      grad = sv.d_state;
      if (guide) g_grad = g_grad ? *g_grad + sv.d_guide : sv.d_guide;
      if (stats) {
        ++stats->replayed_steps;
        stats->max_step_nodes = std::max(stats->max_step_nodes, sv.tape_nodes);
      }
    }
    grad = sqrt_a * grad;
  }

  const bool to_x = g_grad && p.config().guidance.aux == GuidanceSpec::Aux::identity;
  return {grad, to_x ? *g_grad : Tensor::zeros(st.x.shape())};
}

namespace {

GradResult taped_gradient(const PurifyState& st, int copy, const Purifier& p, const NoiseSampler& ns,
                          const LossFn& loss) {
  Tape tape;
  const Var xl = tape.leaf(st.x);
  const bool guide_tracked = st.guide && p.config().guidance.aux == GuidanceSpec::Aux::identity;
  Var gl;
  if (st.guide) gl = guide_tracked ? tape.leaf(*st.guide) : Var(*st.guide);
  const Var out = p.purify_taped(xl, st.guide ? &gl : nullptr, ns, copy);
  const Var l = loss(out);
  if (l.size() != 1) throw ShapeError("loss must be scalar");
  if (!l.tracked()) return {Tensor::zeros(st.x.shape()), Tensor::zeros(st.x.shape())};
  const Gradients g = tape.backward(l);
  return {g.wrt(xl), guide_tracked ? g.wrt(gl) : Tensor::zeros(st.x.shape())};
}

}  // namespace

GradResult full_tape_oracle(const PurifyState& st, int copy, const Purifier& p, const LossFn& loss) {
  return taped_gradient(st, copy, p, st.sampler, loss);
}

Purifier coarsened(const Purifier& p, int ratio) {
  if (ratio < 1 || p.steps() % ratio != 0) {
    throw ConfigError("surrogate step ratio " + std::to_string(ratio) + " does not divide " +
                      std::to_string(p.steps()) + " steps");
  }
  PurifyConfig cfg = p.config();
  cfg.dt = cfg.dt * ratio;
  return Purifier(p.schedule(), p.model_ptr(), cfg);
}

GradResult surrogate_backward(const PurifyState& st, int copy, const Purifier& p, const LossFn& loss, int ratio) {
  const Purifier q = coarsened(p, ratio);
  const NoiseSampler& fine = st.sampler;
  const NoiseSampler ns(fine.seed(), fine.shape(), p.steps(), p.config().rounds, p.config().copies, ratio,
                        fine.enabled());
  return taped_gradient(st, copy, q, ns, loss);
}

GradResult bpda_backward(const Tensor& seed) { return {seed, Tensor::zeros(seed.shape())}; }

PathGradient path_gradient(const PurifyState& st, int copy, const Purifier& p, const LossFn& loss, GradMode mode) {
  Tape tape;
  const Var out = tape.leaf(st.output(copy));
  const Var l = loss(out);
  if (l.size() != 1) throw ShapeError("loss must be scalar");
  const Tensor seed = l.tracked() ? tape.backward(l).wrt(out) : Tensor::zeros(out.shape());

  PathGradient pg;
  pg.loss = l.value()[0];
  switch (mode.kind) {
    case GradMode::Kind::full:
      pg.result = checkpoint_backward(seed, st, copy, p);
      break;
    case GradMode::Kind::oracle:
      pg.result = full_tape_oracle(st, copy, p, loss);
      break;
    case GradMode::Kind::surrogate:
      pg.result = surrogate_backward(st, copy, p, loss, mode.ratio);
      break;
    case GradMode::Kind::bpda:
      pg.result = bpda_backward(seed);
      break;
  }
  return pg;
}

EotGradient eot_gradient(const PurifyState& st, const Purifier& p, const LossFn& loss, GradMode mode, int jobs) {
  const auto n = static_cast<std::size_t>(p.config().copies);
  EotGradient out;
  out.per_path.resize(n);
  out.losses.resize(n);
  parallel_for(n, jobs, [&](std::size_t c) {
    const PathGradient pg = path_gradient(st, static_cast<int>(c), p, loss, mode);
    out.per_path[c] = pg.result.total();
    out.losses[c] = pg.loss;
  });
  Tensor acc = out.per_path[0];
  for (std::size_t c = 1; c < n; ++c) acc = acc + out.per_path[c];
  out.mean = acc / static_cast<double>(n);
  return out;
}

EotGradient eot_gradient(const Tensor& x, const Purifier& p, const LossFn& loss, GradMode mode, std::uint64_t seed,
                         int jobs) {
  return eot_gradient(p.forward(x, seed), p, loss, mode, jobs);
}

}  // namespace dbp
