#pragma once

#include "dbp/noise.hpp"
#include "dbp/schedule.hpp"
#include "dbp/score_model.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dbp {

enum class Solver { sde, ddpm };

struct GuidanceSpec {
  enum class Kind { none, mse };
  enum class Aux { identity, none };
  Kind kind = Kind::none;
  double scale = 0.0;
  /// identity: the guide is the input x itself, so its gradient flows back to x.
  Aux aux = Aux::identity;

  bool active() const noexcept { return kind != Kind::none; }
};

struct PurifyConfig {
  double t_star = 0.1;
  double dt = -1e-3;
  Solver solver = Solver::sde;
  int rounds = 1;
  int copies = 1;
  GuidanceSpec guidance;
  /// DDPM only: add noise on the last step (i = 1) as well.
  bool ddpm_final_noise = true;
  /// false zeroes every noise draw, which makes the purifier deterministic.
  bool stochastic = true;

  int steps() const;
  double abs_dt() const { return -dt; }
  void validate() const;
};

Solver parse_solver(const std::string& name);
std::string solver_name(Solver s);

/// sqrt(alpha(t*)) x + sqrt(1 - alpha(t*)) eps
Tensor diffuse(const Tensor& x, double t_star, const Tensor& eps, const NoiseSchedule& sched);

/// Replay record of one purification. states[copy][round][i] holds x_hat at
/// time index i (i = steps is the diffused input, i = 0 the round's output).
struct PurifyState {
  Tensor x;
  std::optional<Tensor> guide;
  NoiseSampler sampler;
  std::vector<std::vector<std::vector<Tensor>>> states;

  const Tensor& output(int copy) const { return states.at(copy).back().front(); }
};

struct StepVjp {
  Tensor next;
  Tensor d_state;
  Tensor d_guide;
  /// Nodes on the step's private tape (the live-graph bound of the checkpointed sweep).
  std::size_t tape_nodes = 0;
};

class Purifier {
 public:
  Purifier(NoiseSchedule sched, std::shared_ptr<const ScoreModel> model, PurifyConfig cfg);

  const PurifyConfig& config() const noexcept { return cfg_; }
  const NoiseSchedule& schedule() const noexcept { return sched_; }
  const ScoreModel& model() const noexcept { return *model_; }
  const std::shared_ptr<const ScoreModel>& model_ptr() const noexcept { return model_; }
  int steps() const noexcept { return steps_; }
  /// Time of state index i: i |dt|.
  double time(int i) const { return i * cfg_.abs_dt(); }

  NoiseSampler make_sampler(const Shape& shape, std::uint64_t seed) const;

  /// The increment dx_hat of reverse step i starting at time t.
  Var calc_dx(const Var& x_hat, double t, const Tensor& noise, const Var* guide) const;
  /// x_hat + calc_dx, the state at index i - 1.
  Var step(const Var& x_hat, int i, double t, const Tensor& noise, const Var* guide) const;
  /// Noise used by reverse step i, honoring the final-step DDPM switch.
  Tensor step_noise(const NoiseSampler& ns, int round, int copy, int i) const;

  /// Runs every copy with recording off and logs every state.
  PurifyState forward(const Tensor& x, std::uint64_t seed, std::optional<Tensor> external_guide = {}) const;
  PurifyState forward(const Tensor& x, const NoiseSampler& sampler,
                      std::optional<Tensor> external_guide = {}) const;

  /// Recompute step i from a stored state with recording on, and pull `cot`
  /// back to the step input and the guide.
  StepVjp step_vjp(const Tensor& x_hat, const Tensor* guide, int i, double t, const Tensor& noise,
                   const Tensor& cot) const;

  /// One purification path on a caller-supplied tape (leaves x and guide may
  /// be distinct vars holding the same value).
  Var purify_taped(const Var& x, const Var* guide, const NoiseSampler& ns, int copy) const;

  std::optional<Tensor> resolve_guide(const Tensor& x, std::optional<Tensor> external) const;

 private:
  NoiseSchedule sched_;
  std::shared_ptr<const ScoreModel> model_;
  PurifyConfig cfg_;
  int steps_;
};

}  // namespace dbp
