#pragma once

// Property checks on the analytic backends. Shared by `ssdiff selftest` and
// the acceptance suite; every tolerance here is fixed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ssdiff/denoiser.hpp"
#include "ssdiff/guidance.hpp"
#include "ssdiff/metrics.hpp"
#include "ssdiff/oracle.hpp"
#include "ssdiff/regions.hpp"
#include "ssdiff/sampler.hpp"
#include "ssdiff/schedule.hpp"

namespace ssdiff::checks {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct Options {
  // Mutation hook: flip the sign of the fidelity gradient before checking it.
  bool flip_fidelity_gradient = false;
};

namespace detail {

inline std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline CheckResult finish(std::string name, bool ok, std::string detail, const Stopwatch& sw, double budget_s) {
  const double s = sw.seconds();
  if (budget_s > 0.0 && s > budget_s) {
    ok = false;
    detail += " [over time budget " + fmt("%.0f s", budget_s) + "]";
  }
  return {std::move(name), ok, std::move(detail), s};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Synthetic scenes

namespace scene {

inline ImageTensor uniform(const Shape& s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  ImageTensor out(s);
  for (auto& v : out.data()) v = u(rng);
  return out;
}

inline BinaryMask bernoulli(std::size_t h, std::size_t w, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution b(p);
  BinaryMask out(h, w);
  for (std::size_t k = 0; k < out.size(); ++k) out.set(k, b(rng));
  return out;
}

inline ParsingMap random_parsing(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, kMaxLabel);
  std::vector<std::uint8_t> labels(h * w);
  for (auto& v : labels) v = static_cast<std::uint8_t>(u(rng));
  return ParsingMap(h, w, std::move(labels));
}

/// Smooth synthetic "face": skin disc, hair band on top, background elsewhere,
/// and a pair of eye blobs.
inline ParsingMap face_parsing(std::size_t h, std::size_t w) {
  ParsingMap p(h, w, 0);
  const double ci = 0.55 * static_cast<double>(h), cj = 0.5 * static_cast<double>(w);
  const double rad = 0.42 * static_cast<double>(std::min(h, w));
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double di = static_cast<double>(i) - ci, dj = static_cast<double>(j) - cj;
      if (di * di + dj * dj <= rad * rad) p.set(i, j, 1);
      if (i < h / 5) p.set(i, j, 17);
    }
  }
  const std::size_t ei = static_cast<std::size_t>(0.45 * static_cast<double>(h));
  for (const double fj : {0.35, 0.65}) {
    const std::size_t ej = static_cast<std::size_t>(fj * static_cast<double>(w));
    p.set(ei, ej, fj < 0.5 ? 4 : 5);
  }
  return p;
}

/// Mixture of smooth color ramps with small iid pixel variance.
inline GaussianMixtureModel smooth_mixture(const Shape& s, std::size_t components, double var, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> base(-0.5, 0.5), slope(-0.6, 0.6);
  GaussianMixtureModel gmm;
  for (std::size_t k = 0; k < components; ++k) {
    DiagonalGaussianModel m{ImageTensor(s), ImageTensor(s, var)};
    for (std::size_t c = 0; c < s.channels; ++c) {
      const double b = base(rng), a = slope(rng), d = slope(rng);
      for (std::size_t i = 0; i < s.height; ++i) {
        for (std::size_t j = 0; j < s.width; ++j) {
          const double u = static_cast<double>(i) / static_cast<double>(s.height - 1) - 0.5;
          const double v = static_cast<double>(j) / static_cast<double>(s.width - 1) - 0.5;
          m.mean.at(c, i, j) = b + a * u + d * v;
        }
      }
    }
    gmm.components.push_back({1.0 / static_cast<double>(components), std::move(m)});
  }
  return gmm;
}

/// A bright one-pixel-wide diagonal scratch; the returned detection misses
/// every fifth scratch pixel, like an imperfect scratch detector.
struct Scratch {
  ImageTensor damaged;
  BinaryMask truth;
  BinaryMask detected;
};

inline Scratch add_scratch(const ImageTensor& clean) {
  Scratch s{clean, BinaryMask(clean.height(), clean.width()), BinaryMask(clean.height(), clean.width())};
  const std::size_t h = clean.height(), w = clean.width();
  std::size_t n = 0;
  for (std::size_t i = h / 6; i < h - h / 6; ++i) {
    const std::size_t j = std::min(w - 1, w / 5 + (i * 3) / 5);
    for (std::size_t c = 0; c < clean.channels(); ++c) s.damaged.at(c, i, j) = 1.0;
    s.truth.set(i, j, true);
    s.detected.set(i, j, (n++ % 5) != 4);
  }
  return s;
}

}  // namespace scene

// ---------------------------------------------------------------------------
// Gradient correctness against central differences

inline double max_abs(const ImageTensor& t) {
  double m = 0.0;
  for (double v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

/// Max-norm relative gradient error over the elements selected by `use`.
inline double relative_gradient_error(const ImageTensor& analytic, const ImageTensor& numeric,
                                      const std::vector<bool>* use = nullptr) {
  double err = 0.0, scale = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    if (use && !(*use)[k]) continue;
    err = std::max(err, std::abs(analytic[k] - numeric[k]));
    scale = std::max(scale, std::abs(numeric[k]));
  }
  return scale > 0.0 ? err / scale : err;
}

/// Elements whose value differs from each in-bounds 4-neighbour (same
/// channel) by more than `gap`: there the smoothness loss is differentiable
/// within any FD step smaller than the gap.
inline std::vector<bool> kink_free(const ImageTensor& x, double gap = 1e-3) {
  std::vector<bool> ok(x.size(), true);
  const long h = static_cast<long>(x.height()), w = static_cast<long>(x.width());
  for (std::size_t c = 0; c < x.channels(); ++c) {
    for (long i = 0; i < h; ++i) {
      for (long j = 0; j < w; ++j) {
        const double v = x.at(c, i, j);
        bool good = true;
        for (const auto& [di, dj] : {std::pair{0L, 1L}, {0L, -1L}, {1L, 0L}, {-1L, 0L}}) {
          const long a = i + di, b = j + dj;
          if (a < 0 || b < 0 || a >= h || b >= w) continue;
          if (std::abs(v - x.at(c, a, b)) <= gap) good = false;
        }
        ok[(c * x.height() + static_cast<std::size_t>(i)) * x.width() + static_cast<std::size_t>(j)] = good;
      }
    }
  }
  return ok;
}

inline CheckResult check_gradients(const Options& opt = {}, std::size_t instances = 50) {
  detail::Stopwatch sw;
  std::mt19937_64 rng(20240611);
  const Shape s{3, 8, 8};
  double worst1 = 0.0, worst2 = 0.0, worst3 = 0.0;
  std::size_t kinkfree_total = 0;
  for (std::size_t n = 0; n < instances; ++n) {
    const auto x = scene::uniform(s, rng), y = scene::uniform(s, rng);
    const auto scratch = scene::bernoulli(8, 8, 0.3, rng);
    const auto ext = scene::bernoulli(8, 8, 0.7, rng);
    const auto skin = scene::bernoulli(8, 8, 0.6, rng);

    auto g1 = loss_fidelity(x, y, scratch).grad;
    if (opt.flip_fidelity_gradient) g1 *= -1.0;
    const auto fd1 = oracle::central_difference([&](const ImageTensor& z) { return loss_fidelity(z, y, scratch).value; }, x);
    worst1 = std::max(worst1, relative_gradient_error(g1, fd1));

    const auto g3 = loss_color(x, y, skin).grad;
    const auto fd3 = oracle::central_difference([&](const ImageTensor& z) { return loss_color(z, y, skin).value; }, x);
    worst3 = std::max(worst3, relative_gradient_error(g3, fd3));

    const auto g2 = loss_smoothness(x, y, ext).grad;
    const auto fd2 = oracle::central_difference([&](const ImageTensor& z) { return loss_smoothness(z, y, ext).value; }, x);
    const auto use = kink_free(x);
    kinkfree_total += static_cast<std::size_t>(std::count(use.begin(), use.end(), true));
    worst2 = std::max(worst2, relative_gradient_error(g2, fd2, &use));
  }
  const bool ok = worst1 <= 1e-6 && worst3 <= 1e-6 && worst2 <= 1e-4;
  return detail::finish("gradient correctness (L1, L3 <= 1e-6; L2 <= 1e-4 kink-free)", ok,
                        "max rel err L1=" + detail::fmt("%.2e", worst1) + " L2=" + detail::fmt("%.2e", worst2) +
                            " L3=" + detail::fmt("%.2e", worst3) + " over " + std::to_string(instances) +
                            " instances, " + std::to_string(kinkfree_total) + " kink-free L2 elements",
                        sw, 30.0);
}

// ---------------------------------------------------------------------------
// Operator oracles

inline CheckResult check_operator_oracles(std::size_t instances = 100) {
  detail::Stopwatch sw;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> density(0.05, 0.9);
  std::uniform_int_distribution<std::size_t> radius(0, 4);
  double worst_edge = 0.0;
  std::size_t dilation_mismatch = 0;
  for (std::size_t n = 0; n < instances; ++n) {
    const std::size_t channels = n % 2 == 0 ? 3 : 1;
    const auto y = scene::uniform({channels, 16, 16}, rng);
    const auto m = scene::bernoulli(16, 16, density(rng), rng);
    const auto fast = edge_magnitude(y, m);
    const auto slow = oracle::edge_magnitude(y, m);
    for (std::size_t k = 0; k < slow.size(); ++k) worst_edge = std::max(worst_edge, std::abs(fast[k] - slow[k]));
  }
  for (std::size_t n = 0; n < instances; ++n) {
    const auto m = scene::bernoulli(16, 16, density(rng) * 0.3, rng);
    const auto r = radius(rng);
    if (!(extend_mask(m, r) == oracle::extend_mask(m, r))) ++dilation_mismatch;
  }
  const bool ok = worst_edge <= 1e-12 && dilation_mismatch == 0;
  return detail::finish("operator oracles (edge magnitude, mask extension)", ok,
                        "edge max |diff|=" + detail::fmt("%.1e", worst_edge) +
                            ", dilation mismatches=" + std::to_string(dilation_mismatch) + "/" +
                            std::to_string(instances),
                        sw, 10.0);
}

// ---------------------------------------------------------------------------
// Sampler soundness: unguided restore reproduces the Gaussian prior moments

inline CheckResult check_sampler_soundness(std::size_t samples = 5000) {
  detail::Stopwatch sw;
  std::mt19937_64 rng(11);
  const Shape s{1, 8, 8};
  DiagonalGaussianModel prior{scene::uniform(s, rng, -0.5, 0.5), scene::uniform(s, rng, 0.5, 1.5)};
  const auto sched = make_default_schedule(100);
  GaussianDenoiser den(prior, sched);

  // A supplied pseudo-label skips the (unguided, unused) weak pass.
  RestoreInputs in{ImageTensor(s), std::nullopt, BinaryMask(8, 8), ParsingMap(8, 8), ImageTensor(s)};
  GuidanceConfig cfg;
  cfg.s_w = 0.0;
  cfg.s_s = 0.0;

  std::vector<double> sum(s.size(), 0.0), sum2(s.size(), 0.0);
  for (std::size_t n = 0; n < samples; ++n) {
    cfg.seed = n;
    const auto x = restore(in, den, sched, cfg).x0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      sum[k] += x[k];
      sum2[k] += x[k] * x[k];
    }
  }
  double worst_mean = 0.0, var_emp = 0.0, var_prior = 0.0, worst_pixel_ratio = 1.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double mean = sum[k] / static_cast<double>(samples);
    const double var = sum2[k] / static_cast<double>(samples) - mean * mean;
    worst_mean = std::max(worst_mean, std::abs(mean - prior.mean[k]));
    var_emp += var;
    var_prior += prior.var[k];
    const double ratio = var / prior.var[k];
    if (std::abs(ratio - 1.0) > std::abs(worst_pixel_ratio - 1.0)) worst_pixel_ratio = ratio;
  }
  const double var_ratio = var_emp / var_prior;
  const bool ok = worst_mean <= 0.05 && std::abs(var_ratio - 1.0) <= 0.10;
  return detail::finish("sampler soundness (prior moments, T=100, 5000 samples)", ok,
                        "max |mean err|=" + detail::fmt("%.4f", worst_mean) + ", variance ratio=" +
                            detail::fmt("%.4f", var_ratio) + " (worst pixel " + detail::fmt("%.4f", worst_pixel_ratio) + ")",
                        sw, 120.0);
}

// ---------------------------------------------------------------------------
// Strong-guidance convergence (fidelity term only, empty scratch mask)

inline CheckResult check_strong_guidance_convergence() {
  detail::Stopwatch sw;
  std::mt19937_64 rng(13);
  const Shape s{1, 8, 8};
  DiagonalGaussianModel prior{scene::uniform(s, rng, -0.5, 0.5), scene::uniform(s, rng, 0.05, 0.5)};
  const auto sched = make_default_schedule(1000);
  GaussianDenoiser den(prior, sched);
  const auto target = scene::uniform(s, rng);

  RestoreInputs in{target, target, BinaryMask(8, 8), ParsingMap(8, 8), target};
  GuidanceConfig cfg;
  cfg.s_s = 3.5e-3 / static_cast<double>(s.pixels());
  cfg.t1 = 0;
  cfg.seed = 3;
  const auto out = restore(in, den, sched, cfg);
  const double mse = mse_psnr(out.x0, target).mse;
  return detail::finish("strong-guidance convergence (s_s = 3.5e-3 / pixels, MSE < 0.01)", mse < 0.01,
                        "final MSE to target=" + detail::fmt("%.4f", mse) + " at s_s=" + detail::fmt("%.3e", cfg.s_s),
                        sw, 60.0);
}

// ---------------------------------------------------------------------------
// Weak vs strong fidelity ordering

inline CheckResult check_fidelity_ordering(std::size_t seeds = 20) {
  detail::Stopwatch sw;
  std::mt19937_64 rng(17);
  const Shape s{3, 8, 8};
  const auto gmm = scene::smooth_mixture(s, 3, 0.05, rng);
  const auto sched = make_default_schedule(1000);
  GmmDenoiser den(gmm, sched);
  // Degraded input: a blend of two modes plus a scratch.
  auto clean = 0.5 * (gmm.components[0].model.mean + gmm.components[1].model.mean);
  const auto y0 = scene::add_scratch(clean).damaged;

  const auto mean_mse = [&](double scale) {
    double acc = 0.0;
    for (std::size_t n = 0; n < seeds; ++n) {
      GuidanceConfig cfg;
      cfg.s_w = scale;
      cfg.seed = n;
      acc += mse_psnr(generate_pseudo_label(y0, den, sched, cfg).y_p, y0).mse;
    }
    return acc / static_cast<double>(seeds);
  };
  const double weak = mean_mse(1e-3), strong = mean_mse(3.5e-3);
  return detail::finish("weak/strong fidelity ordering (s=3.5e-3 below s=1e-3)", strong < weak,
                        "mean MSE s=1e-3: " + detail::fmt("%.6f", weak) + ", s=3.5e-3: " + detail::fmt("%.6f", strong),
                        sw, 300.0);
}

// ---------------------------------------------------------------------------
// Stage gating and mask safety on full-length runs

struct GatingScene {
  Shape shape{3, 16, 16};
  DiagonalGaussianModel prior;
  RestoreInputs inputs;
};

inline GatingScene gating_scene(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GatingScene g;
  g.prior = {scene::uniform(g.shape, rng, -0.3, 0.3), scene::uniform(g.shape, rng, 0.05, 0.3)};
  const auto clean = scene::uniform(g.shape, rng, -0.6, 0.6);
  const auto scratch = scene::add_scratch(clean);
  g.inputs = {scratch.damaged, std::nullopt, mask_or(scratch.detected, scene::bernoulli(16, 16, 0.1, rng)),
              scene::face_parsing(16, 16), std::nullopt};
  return g;
}

inline CheckResult check_stage_gating() {
  detail::Stopwatch sw;
  auto g = gating_scene(19);
  const auto sched = make_default_schedule(1000);
  GaussianDenoiser den(g.prior, sched);
  GuidanceConfig cfg;
  cfg.t1 = 400;
  cfg.seed = 5;
  const auto out = restore(g.inputs, den, sched, cfg);

  std::size_t violations = 0;
  std::optional<std::size_t> first_l3;
  for (const auto& r : out.trace) {
    if (r.t > 400 && (r.l3 != 0.0 || r.g3 != 0.0 || r.stage != Stage::restoration)) ++violations;
    if (r.t <= 400 && r.stage != Stage::coloring) ++violations;
    if (!first_l3 && r.l3 != 0.0) first_l3 = r.t;
  }
  const bool ok = violations == 0 && first_l3 == std::size_t{400} && out.trace.size() == 1000;
  return detail::finish("stage gating (T=1000, T1=400)", ok,
                        "violations=" + std::to_string(violations) + ", first nonzero l3 at t=" +
                            (first_l3 ? std::to_string(*first_l3) : std::string("none")),
                        sw, 180.0);
}

inline CheckResult check_mask_safety() {
  detail::Stopwatch sw;
  auto g = gating_scene(23);
  const auto sched = make_default_schedule(1000);
  GaussianDenoiser den(g.prior, sched);
  GuidanceConfig cfg;
  cfg.seed = 9;

  const auto& in = g.inputs;
  const auto radius = cfg.resolved_radius(g.shape.height);
  const auto ext = extend_mask(make_guide_mask(in.scratch, in.parsing, cfg.labels), radius);
  const auto skin = labels_to_mask(in.parsing, cfg.labels.skin);
  double leak1 = 0.0, leak2 = 0.0, leak3 = 0.0, inside1 = 0.0, inside2 = 0.0, inside3 = 0.0;
  const StepObserver watch = [&](std::size_t, const ImageTensor&, const LossReport& r) {
    const std::size_t n = g.shape.pixels();
    for (std::size_t c = 0; c < g.shape.channels; ++c) {
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t e = c * n + k;
        (in.scratch[k] ? leak1 : inside1) += std::abs(r.grad_l1[e]);
        (ext[k] ? inside2 : leak2) += std::abs(r.grad_l2[e]);
        (skin[k] ? inside3 : leak3) += std::abs(r.grad_l3[e]);
      }
    }
  };
  restore(in, den, sched, cfg, watch);
  // The active-region sums guard against a vacuous pass.
  const bool ok = leak1 == 0.0 && leak2 == 0.0 && leak3 == 0.0 && inside1 > 0.0 && inside2 > 0.0 && inside3 > 0.0;
  return detail::finish("mask safety (zero gradient outside governing masks)", ok,
                        "leaks L1/L2/L3=" + detail::fmt("%g", leak1) + "/" + detail::fmt("%g", leak2) + "/" +
                            detail::fmt("%g", leak3) + ", in-region mass " + detail::fmt("%.3g", inside1) + "/" +
                            detail::fmt("%.3g", inside2) + "/" + detail::fmt("%.3g", inside3),
                        sw, 180.0);
}

// ---------------------------------------------------------------------------
// Breakage smoothing

inline CheckResult check_breakage_smoothing(std::size_t seeds = 10) {
  detail::Stopwatch sw;
  std::mt19937_64 rng(29);
  const Shape s{3, 32, 32};
  const auto gmm = scene::smooth_mixture(s, 3, 0.01, rng);
  const auto sched = make_default_schedule(1000);
  GmmDenoiser den(gmm, sched);
  const auto scratch = scene::add_scratch(gmm.components[0].model.mean);
  const auto parsing = scene::face_parsing(32, 32);
  RestoreInputs in{scratch.damaged, std::nullopt, scratch.detected, parsing, std::nullopt};

  GuidanceConfig cfg;
  const auto region = extend_mask(make_guide_mask(in.scratch, parsing, cfg.labels), cfg.resolved_radius(32));
  const double before = edge_variation(in.y0, region);
  double after = 0.0;
  for (std::size_t n = 0; n < seeds; ++n) {
    cfg.seed = n;
    after += edge_variation(restore(in, den, sched, cfg).x0, region);
  }
  after /= static_cast<double>(seeds);
  const double ratio = after / before;
  return detail::finish("breakage smoothing (edge variation <= 50% of input)", ratio <= 0.5,
                        "input=" + detail::fmt("%.4f", before) + ", output mean=" + detail::fmt("%.4f", after) +
                            ", ratio=" + detail::fmt("%.3f", ratio),
                        sw, 180.0);
}

// ---------------------------------------------------------------------------
// Color transfer exactness

inline CheckResult check_color_transfer(std::size_t instances = 20) {
  detail::Stopwatch sw;
  std::mt19937_64 rng(31);
  const Shape s{3, 16, 16};
  double worst_moment = 0.0, worst_idem = 0.0;
  const auto moments = [](std::span<const double> v, const BinaryMask& m) {
    double mean = 0.0, n = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (m[k]) {
        mean += v[k];
        n += 1.0;
      }
    }
    mean /= n;
    double var = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (m[k]) var += (v[k] - mean) * (v[k] - mean);
    }
    return std::pair{mean, std::sqrt(var / n)};
  };
  for (std::size_t n = 0; n < instances; ++n) {
    const auto content = scene::uniform(s, rng, -0.6, 0.2);
    const auto reference = scene::uniform(s, rng, -0.1, 0.9);
    const auto mc = scene::bernoulli(16, 16, 0.5, rng);
    const auto mr = scene::bernoulli(16, 16, 0.5, rng);
    const TransferOptions raw{ColorSpace::rgb, false};
    const auto once = color_transfer(content, reference, mc, mr, raw);
    const auto twice = color_transfer(once, reference, mc, mr, raw);
    for (std::size_t c = 0; c < 3; ++c) {
      const auto [mu_o, sd_o] = moments(once.plane(c), mc);
      const auto [mu_r, sd_r] = moments(reference.plane(c), mr);
      worst_moment = std::max({worst_moment, std::abs(mu_o - mu_r), std::abs(sd_o - sd_r)});
    }
    for (std::size_t k = 0; k < once.size(); ++k) worst_idem = std::max(worst_idem, std::abs(once[k] - twice[k]));
  }
  const bool ok = worst_moment <= 1e-6 && worst_idem <= 1e-6;
  return detail::finish("color transfer exactness (moments, idempotence)", ok,
                        "max moment err=" + detail::fmt("%.2e", worst_moment) +
                            ", max idempotence err=" + detail::fmt("%.2e", worst_idem),
                        sw, 10.0);
}

// ---------------------------------------------------------------------------
// Denoiser keystone and schedule identities

inline CheckResult check_analytic_denoiser() {
  detail::Stopwatch sw;
  std::mt19937_64 rng(37);
  const Shape s{3, 8, 8};
  DiagonalGaussianModel prior{scene::uniform(s, rng, -0.5, 0.5), scene::uniform(s, rng, 0.0, 1.0)};
  const auto sched = make_default_schedule(1000);
  double worst_keystone = 0.0, worst_roundtrip = 0.0;
  for (std::size_t t : {1, 10, 100, 500, 900, 1000}) {
    const auto xt = scene::uniform(s, rng, -2.0, 2.0);
    const auto eps = gaussian_predict_eps(prior, xt, t, sched);
    const auto x0 = predict_x0(xt, eps, t, sched);
    const double ab = sched.alpha_bar(t);
    for (std::size_t k = 0; k < xt.size(); ++k) {
      const double v = prior.var[k];
      const double expect = prior.mean[k] + std::sqrt(ab) * v / (ab * v + 1.0 - ab) * (xt[k] - std::sqrt(ab) * prior.mean[k]);
      worst_keystone = std::max(worst_keystone, std::abs(x0[k] - expect) / std::max(1.0, std::abs(expect)));
    }
    const auto clean = scene::uniform(s, rng);
    const auto noise = scene::uniform(s, rng, -3.0, 3.0);
    const auto back = predict_x0(q_sample(clean, t, noise, sched), noise, t, sched);
    for (std::size_t k = 0; k < clean.size(); ++k) {
      worst_roundtrip = std::max(worst_roundtrip, std::abs(back[k] - clean[k]) / std::max(1.0, std::abs(clean[k])));
    }
  }
  const bool ok = worst_keystone <= 1e-9 && worst_roundtrip <= 1e-6;
  return detail::finish("analytic denoiser keystone and x0 round trip", ok,
                        "keystone rel err=" + detail::fmt("%.2e", worst_keystone) +
                            ", round-trip rel err=" + detail::fmt("%.2e", worst_roundtrip),
                        sw, 10.0);
}

/// The property subset run by `ssdiff selftest`.
inline std::vector<CheckResult> run_selftest(const Options& opt = {}) {
  return {check_gradients(opt), check_operator_oracles(), check_analytic_denoiser(), check_color_transfer(),
          check_sampler_soundness(), check_stage_gating(), check_mask_safety()};
}

}  // namespace ssdiff::checks
