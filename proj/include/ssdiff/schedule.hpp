#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ssdiff/error.hpp"
#include "ssdiff/tensor.hpp"

namespace ssdiff {

/// Variance schedule beta_1..beta_T with alpha_t = 1 - beta_t and
/// alpha_bar_t = prod_{i<=t} alpha_i. Index 0 is the clean endpoint:
/// beta_0 = 0, alpha_bar_0 = 1.
class NoiseSchedule {
 public:
  explicit NoiseSchedule(std::vector<double> betas) {
    if (betas.empty()) throw ConfigError("schedule: T must be at least 1");
    beta_.reserve(betas.size() + 1);
    alpha_bar_.reserve(betas.size() + 1);
    beta_.push_back(0.0);
    alpha_bar_.push_back(1.0);
    for (std::size_t t = 0; t < betas.size(); ++t) {
      const double b = betas[t];
      if (!(b > 0.0 && b < 1.0)) {
        throw ConfigError("schedule: beta[" + std::to_string(t + 1) + "] = " + std::to_string(b) + " outside (0,1)");
      }
      beta_.push_back(b);
      alpha_bar_.push_back(alpha_bar_.back() * (1.0 - b));
    }
  }

  std::size_t steps() const noexcept { return beta_.size() - 1; }

  double beta(std::size_t t) const { return beta_.at(t); }
  double alpha(std::size_t t) const { return 1.0 - beta_.at(t); }
  double alpha_bar(std::size_t t) const { return alpha_bar_.at(t); }

  /// Posterior (tilde-beta) variance of q(x_{t-1} | x_t, x_0).
  double posterior_variance(std::size_t t) const {
    check_step(t);
    return beta_[t] * (1.0 - alpha_bar_[t - 1]) / (1.0 - alpha_bar_[t]);
  }

  double max_posterior_variance() const {
    double best = 0.0;
    for (std::size_t t = 1; t <= steps(); ++t) best = std::max(best, posterior_variance(t));
    return best;
  }

  void check_step(std::size_t t) const {
    if (t < 1 || t > steps()) {
      throw std::out_of_range("timestep " + std::to_string(t) + " outside [1," + std::to_string(steps()) + "]");
    }
  }

 private:
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
};

/// Linearly spaced betas from beta_start to beta_end, both inclusive.
inline NoiseSchedule make_linear_schedule(std::size_t steps, double beta_start, double beta_end) {
  if (steps < 1) throw ConfigError("schedule: T must be at least 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ConfigError("schedule: need 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(steps - 1);
    betas[k] = beta_start + frac * (beta_end - beta_start);
  }
  return NoiseSchedule(std::move(betas));
}

inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 0.02;

/// The 1e-4..0.02 linear schedule, endpoints rescaled by 1000/T so that
/// alpha_bar_T stays near zero for short chains.
inline NoiseSchedule make_default_schedule(std::size_t steps) {
  const double scale = 1000.0 / static_cast<double>(steps);
  return make_linear_schedule(steps, std::min(kDefaultBetaStart * scale, 0.5),
                              std::min(kDefaultBetaEnd * scale, 0.999));
}

/// Closed-form forward draw x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps; t = 0 returns x0.
inline ImageTensor q_sample(const ImageTensor& x0, std::size_t t, const ImageTensor& eps, const NoiseSchedule& sched) {
  x0.require_same_shape(eps, "q_sample");
  const double ab = sched.alpha_bar(t);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  ImageTensor out(x0.shape());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a * x0[k] + b * eps[k];
  return out;
}

/// One-step forward kernel q(x_t | x_{t-1}): sqrt(alpha_t) x + sqrt(beta_t) eps.
inline ImageTensor forward_step(const ImageTensor& x_prev, std::size_t t, const ImageTensor& eps,
                                const NoiseSchedule& sched) {
  x_prev.require_same_shape(eps, "forward_step");
  sched.check_step(t);
  const double a = std::sqrt(sched.alpha(t)), b = std::sqrt(sched.beta(t));
  ImageTensor out(x_prev.shape());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a * x_prev[k] + b * eps[k];
  return out;
}

/// Clean-image estimate x0_hat = x_t / sqrt(ab_t) - eps_hat sqrt((1 - ab_t) / ab_t).
inline ImageTensor predict_x0(const ImageTensor& xt, const ImageTensor& eps_hat, std::size_t t,
                              const NoiseSchedule& sched) {
  xt.require_same_shape(eps_hat, "predict_x0");
  const double ab = sched.alpha_bar(t);
  const double a = 1.0 / std::sqrt(ab), b = std::sqrt((1.0 - ab) / ab);
  ImageTensor out(xt.shape());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a * xt[k] - b * eps_hat[k];
  return out;
}

struct PosteriorMoments {
  ImageTensor mean;
  double variance_scale = 0.0;
};

inline PosteriorMoments posterior(const ImageTensor& xt, const ImageTensor& eps_hat, std::size_t t,
                                  const NoiseSchedule& sched) {
  xt.require_same_shape(eps_hat, "posterior");
  sched.check_step(t);
  const double alpha = sched.alpha(t);
  const double coef = (1.0 - alpha) / std::sqrt(1.0 - sched.alpha_bar(t));
  const double inv = 1.0 / std::sqrt(alpha);
  PosteriorMoments m{ImageTensor(xt.shape()), sched.posterior_variance(t)};
  for (std::size_t k = 0; k < xt.size(); ++k) m.mean[k] = inv * (xt[k] - coef * eps_hat[k]);
  return m;
}

/// Guided reverse draw: mean - s * var * grad + sqrt(var) * noise.
inline ImageTensor guided_transition(const PosteriorMoments& m, const ImageTensor& grad, double scale,
                                     const ImageTensor& noise) {
  m.mean.require_same_shape(grad, "guided_transition(grad)");
  m.mean.require_same_shape(noise, "guided_transition(noise)");
  if (m.variance_scale < 0.0) throw std::invalid_argument("guided_transition: negative variance_scale");
  const double shift = scale * m.variance_scale;
  const double sd = std::sqrt(m.variance_scale);
  ImageTensor out(m.mean.shape());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = m.mean[k] - shift * grad[k] + sd * noise[k];
  return out;
}

}  // namespace ssdiff
