#pragma once

// Forward noising x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, with abar_t the
// cumulative product of (1 - beta) over steps 1..t and abar_0 = 1.

#include <cmath>
#include <span>
#include <vector>

#include "otfmri/core/error.hpp"

namespace otfmri::regression {

class NoiseSchedule {
 public:
  // abar[0] must be 1; the rest non-increasing within [0, 1].
  static NoiseSchedule from_alpha_bar(std::vector<double> abar) {
    if (abar.size() < 2) throw ConfigError("noise schedule needs at least one step");
    if (abar[0] != 1.0) throw ConfigError("noise schedule must start at abar_0 = 1");
    for (std::size_t t = 1; t < abar.size(); ++t)
      if (!(abar[t] >= 0.0 && abar[t] <= abar[t - 1])) throw ConfigError("noise schedule must be non-increasing in [0, 1]");
    NoiseSchedule s;
    s.abar_ = std::move(abar);
    return s;
  }

  // Betas spaced linearly from beta_start to beta_end over T steps.
  static NoiseSchedule linear(std::size_t steps, double beta_start = 1e-4, double beta_end = 2e-2) {
    if (steps == 0) throw ConfigError("noise schedule needs at least one step");
    if (!(beta_start >= 0.0 && beta_end <= 1.0 && beta_start <= beta_end)) throw ConfigError("betas must satisfy 0 <= start <= end <= 1");
    std::vector<double> abar(steps + 1, 1.0);
    for (std::size_t t = 1; t <= steps; ++t) {
      const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(steps - 1);
      abar[t] = abar[t - 1] * (1.0 - (beta_start + frac * (beta_end - beta_start)));
    }
    return from_alpha_bar(std::move(abar));
  }

  std::size_t steps() const { return abar_.size() - 1; }
  double alpha_bar(std::size_t t) const {
    if (t > steps()) throw ConfigError("noise step " + std::to_string(t) + " outside 0.." + std::to_string(steps()));
    return abar_[t];
  }
  const std::vector<double>& alpha_bars() const { return abar_; }

 private:
  std::vector<double> abar_;
};

inline std::vector<double> forward_noise(std::span<const double> x0, std::size_t t, const NoiseSchedule& schedule,
                                         std::span<const double> eps) {
  if (t < 1 || t > schedule.steps())
    throw ConfigError("forward_noise: t=" + std::to_string(t) + " outside 1.." + std::to_string(schedule.steps()));
  if (x0.size() != eps.size()) throw ConfigError("forward_noise: x0 and eps differ in length");
  const double a = schedule.alpha_bar(t);
  const double sa = std::sqrt(a), sn = std::sqrt(1.0 - a);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = sa * x0[i] + sn * eps[i];
  return out;
}

}  // namespace otfmri::regression
