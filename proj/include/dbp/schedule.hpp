#pragma once

#include <vector>

namespace dbp {

/// Linear VP schedule: beta(t) = beta_min + t (beta_max - beta_min) on t in [0, 1].
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  NoiseSchedule(double beta_min, double beta_max);

  double beta_min() const noexcept { return beta_min_; }
  double beta_max() const noexcept { return beta_max_; }

  double beta(double t) const;
  /// exp(-integral_0^t beta)
  double alpha(double t) const;
  /// beta_i = beta(i/T) / T for i = 1..T; every value must stay below 1.
  std::vector<double> discrete_betas(int T) const;
  /// Per-step DDPM rate beta(t) |dt| at the step's starting time.
  double step_beta(double t, double abs_dt) const;

 private:
  double beta_min_ = 0.1;
  double beta_max_ = 20.0;
};

}  // namespace dbp
