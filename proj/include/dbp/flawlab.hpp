#pragma once

#include "dbp/diffgrad.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dbp {

struct RelError {
  double g_d = 0.0;  ///< ||g_f - g_nf||
  double g_e = 0.0;  ///< g_d / ||g_f||, denominator floored at 1e-12
};

/// g_f is the trusted gradient, g_nf the flawed one.
RelError rel_error(const Tensor& g_f, const Tensor& g_nf);

struct FlawPoint {
  double x_value = 0.0;
  double g_d = 0.0;
  double g_e = 0.0;
  /// eot only: mean over trials of the largest distance to another trial's gradient
  double g_d_mean = 0.0;
  int trials = 0;
};

struct FlawReport {
  std::string experiment;
  std::uint64_t seed = 0;
  std::vector<FlawPoint> points;
};

/// What every experiment differentiates: one input, its loss, and a purifier
/// whose config the experiment varies.
struct FlawSetup {
  const Purifier& purifier;
  LossFn loss;
  Tensor x;
};

/// For each N: `trials` EOT gradients over N fresh copies each. g_d_mean is
/// (1/trials) sum_i max_j ||g_i - g_j||; g_d is the mean pairwise distance
/// and g_e that distance over the norm of the mean trial gradient.
FlawReport eot_variance_experiment(const FlawSetup& s, const std::vector<int>& copies_grid, int trials,
                                   std::uint64_t seed, int jobs = 1);

/// g_nf differentiates a process whose step i runs at t_i + i * delta instead of t_i.
FlawReport time_drift_experiment(const FlawSetup& s, const std::vector<double>& t_star_grid, double delta, int trials,
                                 std::uint64_t seed, int jobs = 1);

/// The purifier must be guided. g_f is the total gradient, g_nf drops the guidance paths.
FlawReport guidance_omission_experiment(const FlawSetup& s, const std::vector<double>& t_star_grid, int trials,
                                        std::uint64_t seed, int jobs = 1);

/// g_f is the coarse surrogate gradient; g_nf sweeps the coarse steps against
/// the stored fine-step forward states at matching times.
FlawReport surrogate_mismatch_experiment(const FlawSetup& s, const std::vector<int>& ratios, int trials,
                                         std::uint64_t seed, int jobs = 1);

/// Path gradient (direct + guidance) of one copy with every step time shifted by i * delta.
Tensor drifted_gradient(const PurifyState& st, int copy, const Purifier& p, const LossFn& loss, double delta);

/// Coarse-step backward sweep that reads the fine stored states (the flawed variant).
Tensor flawed_surrogate_gradient(const PurifyState& st, int copy, const Purifier& p, const LossFn& loss, int ratio);

/// Step-wise coarse sweep over coarse states recomputed on the same Brownian path.
Tensor surrogate_sweep_gradient(const PurifyState& st, int copy, const Purifier& p, const LossFn& loss, int ratio);

}  // namespace dbp
