#include "dbp/schedule.hpp"

#include "dbp/errors.hpp"

#include <cmath>
#include <string>

namespace dbp {

namespace {

void check_time(double t, const char* what) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw RangeError(std::string(what) + ": time " + std::to_string(t) + " outside [0, 1]");
  }
}

}  // namespace

NoiseSchedule::NoiseSchedule(double beta_min, double beta_max) : beta_min_(beta_min), beta_max_(beta_max) {
  if (!(beta_min > 0.0) || !(beta_max >= beta_min) || !std::isfinite(beta_max)) {
    throw ConfigError("schedule needs 0 < beta_min <= beta_max, got " + std::to_string(beta_min) + ", " +
                      std::to_string(beta_max));
  }
}

double NoiseSchedule::beta(double t) const {
  check_time(t, "beta");
  return beta_min_ + t * (beta_max_ - beta_min_);
}

double NoiseSchedule::alpha(double t) const {
  check_time(t, "alpha");
  return std::exp(-(beta_min_ * t + (beta_max_ - beta_min_) * t * t / 2.0));
}

std::vector<double> NoiseSchedule::discrete_betas(int T) const {
  if (T < 1) throw RangeError("discrete_betas: T must be at least 1");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(T));
  for (int i = 1; i <= T; ++i) {
    const double b = beta(static_cast<double>(i) / T) / T;
    if (!(b < 1.0)) {
      throw RangeError("discrete_betas: beta_" + std::to_string(i) + " = " + std::to_string(b) +
                       " is not below 1; use more steps");
    }
    out.push_back(b);
  }
  return out;
}

double NoiseSchedule::step_beta(double t, double abs_dt) const {
  const double b = beta(t) * abs_dt;
  if (!(b < 1.0)) throw RangeError("step beta " + std::to_string(b) + " is not below 1");
  return b;
}

}  // namespace dbp
