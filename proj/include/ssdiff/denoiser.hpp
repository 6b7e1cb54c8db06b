#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "ssdiff/error.hpp"
#include "ssdiff/schedule.hpp"
#include "ssdiff/tensor.hpp"

namespace ssdiff {

/// The epsilon-prediction capability consumed by the sampler.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  /// Returns eps_hat(xt, t) with xt's shape. Must be deterministic in (xt, t).
  virtual ImageTensor predict_eps(const ImageTensor& xt, std::size_t t) = 0;
};

struct DiagonalGaussianModel {
  ImageTensor mean;
  ImageTensor var;  // per-element prior variance, >= 0

  void validate() const {
    mean.require_same_shape(var, "DiagonalGaussianModel");
    for (double v : var.data()) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("gaussian model: variances must be finite and >= 0");
    }
    if (!mean.all_finite()) throw ConfigError("gaussian model: mean must be finite");
  }
};

struct GaussianMixtureModel {
  struct Component {
    double weight = 1.0;
    DiagonalGaussianModel model;
  };
  std::vector<Component> components;

  void validate() const {
    if (components.empty()) throw ConfigError("gmm: at least one component required");
    double total = 0.0;
    for (const auto& c : components) {
      if (!(c.weight > 0.0)) throw ConfigError("gmm: component weights must be positive");
      c.model.validate();
      c.model.mean.require_same_shape(components.front().model.mean, "GaussianMixtureModel");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("gmm: weights must sum to 1");
  }
};

namespace detail {

// E[x0 | xt] for one diagonal Gaussian prior.
inline ImageTensor gaussian_posterior_mean(const DiagonalGaussianModel& m, const ImageTensor& xt, double ab) {
  const double sab = std::sqrt(ab);
  ImageTensor out(xt.shape());
  for (std::size_t k = 0; k < xt.size(); ++k) {
    const double v = m.var[k];
    const double denom = ab * v + (1.0 - ab);
    out[k] = denom > 0.0 ? m.mean[k] + sab * v / denom * (xt[k] - sab * m.mean[k]) : m.mean[k];
  }
  return out;
}

// The eps_hat that makes predict_x0 return x0.
inline ImageTensor eps_from_x0(const ImageTensor& xt, const ImageTensor& x0, double ab) {
  ImageTensor eps(xt.shape());
  if (ab >= 1.0) return eps;
  const double sab = std::sqrt(ab), inv = 1.0 / std::sqrt(1.0 - ab);
  for (std::size_t k = 0; k < xt.size(); ++k) eps[k] = (xt[k] - sab * x0[k]) * inv;
  return eps;
}

// log N(xt; sqrt(ab) mu, ab var + (1 - ab)), summed over all elements.
inline double gaussian_log_likelihood(const DiagonalGaussianModel& m, const ImageTensor& xt, double ab) {
  constexpr double kLog2Pi = 1.8378770664093453;
  const double sab = std::sqrt(ab);
  double acc = 0.0;
  for (std::size_t k = 0; k < xt.size(); ++k) {
    const double s2 = ab * m.var[k] + (1.0 - ab);
    const double d = xt[k] - sab * m.mean[k];
    if (s2 <= 0.0) {
      if (d != 0.0) return -std::numeric_limits<double>::infinity();
      continue;
    }
    acc += -0.5 * (kLog2Pi + std::log(s2) + d * d / s2);
  }
  return acc;
}

}  // namespace detail

/// Exact-posterior eps_hat for a diagonal Gaussian data distribution.
inline ImageTensor gaussian_predict_eps(const DiagonalGaussianModel& model, const ImageTensor& xt, std::size_t t,
                                        const NoiseSchedule& sched) {
  model.mean.require_same_shape(xt, "gaussian_predict_eps");
  const double ab = sched.alpha_bar(t);
  if (ab >= 1.0) return ImageTensor(xt.shape());
  return detail::eps_from_x0(xt, detail::gaussian_posterior_mean(model, xt, ab), ab);
}

/// Mixture responsibilities r_k(xt) under the noised component marginals.
inline std::vector<double> gmm_responsibilities(const GaussianMixtureModel& model, const ImageTensor& xt,
                                                double ab) {
  std::vector<double> logp(model.components.size());
  for (std::size_t k = 0; k < logp.size(); ++k) {
    const auto& c = model.components[k];
    logp[k] = std::log(c.weight) + detail::gaussian_log_likelihood(c.model, xt, ab);
  }
  const double top = *std::max_element(logp.begin(), logp.end());
  std::vector<double> r(logp.size());
  if (!std::isfinite(top)) {
    // Every component excludes xt (only reachable with zero variances); fall back to the prior weights.
    for (std::size_t k = 0; k < r.size(); ++k) r[k] = model.components[k].weight;
    return r;
  }
  double total = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) total += r[k] = std::exp(logp[k] - top);
  for (auto& v : r) v /= total;
  return r;
}

inline ImageTensor gmm_posterior_mean(const GaussianMixtureModel& model, const ImageTensor& xt, double ab) {
  const auto r = gmm_responsibilities(model, xt, ab);
  ImageTensor x0(xt.shape());
  for (std::size_t k = 0; k < r.size(); ++k) {
    const auto ek = detail::gaussian_posterior_mean(model.components[k].model, xt, ab);
    for (std::size_t i = 0; i < x0.size(); ++i) x0[i] += r[k] * ek[i];
  }
  return x0;
}

inline ImageTensor gmm_predict_eps(const GaussianMixtureModel& model, const ImageTensor& xt, std::size_t t,
                                   const NoiseSchedule& sched) {
  model.components.front().model.mean.require_same_shape(xt, "gmm_predict_eps");
  const double ab = sched.alpha_bar(t);
  if (ab >= 1.0) return ImageTensor(xt.shape());
  return detail::eps_from_x0(xt, gmm_posterior_mean(model, xt, ab), ab);
}

class GaussianDenoiser final : public Denoiser {
 public:
  GaussianDenoiser(DiagonalGaussianModel model, NoiseSchedule sched) : model_(std::move(model)), sched_(std::move(sched)) {
    model_.validate();
  }

  ImageTensor predict_eps(const ImageTensor& xt, std::size_t t) override {
    return gaussian_predict_eps(model_, xt, t, sched_);
  }

  const DiagonalGaussianModel& model() const noexcept { return model_; }

 private:
  DiagonalGaussianModel model_;
  NoiseSchedule sched_;
};

class GmmDenoiser final : public Denoiser {
 public:
  GmmDenoiser(GaussianMixtureModel model, NoiseSchedule sched) : model_(std::move(model)), sched_(std::move(sched)) {
    model_.validate();
  }

  ImageTensor predict_eps(const ImageTensor& xt, std::size_t t) override {
    return gmm_predict_eps(model_, xt, t, sched_);
  }

  const GaussianMixtureModel& model() const noexcept { return model_; }

 private:
  GaussianMixtureModel model_;
  NoiseSchedule sched_;
};

}  // namespace ssdiff
