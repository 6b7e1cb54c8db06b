#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ssdiff/denoiser.hpp"
#include "ssdiff/guidance.hpp"
#include "ssdiff/metrics.hpp"
#include "ssdiff/noise.hpp"
#include "ssdiff/regions.hpp"
#include "ssdiff/schedule.hpp"
#include "ssdiff/table.hpp"

namespace ssdiff {

/// Where the fidelity target y_c comes from.
enum class FidelitySource {
  automatic,  // the externally restored image when supplied, else the pseudo-label
  restored,
  pseudo_label,
};

inline std::string_view to_string(FidelitySource s) {
  switch (s) {
    case FidelitySource::automatic: return "auto";
    case FidelitySource::restored: return "restored";
    case FidelitySource::pseudo_label: return "pseudo";
  }
  return "?";
}

struct GuidanceConfig {
  double s_w = 1e-3;     // weak scale, pseudo-label pass
  double s_s = 3.5e-3;   // strong scale, restoration pass
  std::optional<std::size_t> t1;  // stage boundary; round(0.4 T) when unset
  std::size_t repeats = 1;        // N
  std::optional<std::size_t> dilation_radius;  // round(3 H / 512) when unset
  LabelSets labels;
  std::size_t color_refresh = 0;  // K; 0 computes y_s once at the boundary
  FidelitySource fidelity_source = FidelitySource::automatic;
  ColorSpace color_space = ColorSpace::rgb;
  std::map<int, double> label_strength;  // per-label gradient multiplier, default 1
  std::uint64_t seed = 0;

  std::size_t resolved_t1(std::size_t steps) const {
    return t1 ? *t1 : static_cast<std::size_t>(std::lround(0.4 * static_cast<double>(steps)));
  }
  std::size_t resolved_radius(std::size_t height) const {
    return dilation_radius ? *dilation_radius : default_dilation_radius(height);
  }

  void validate(std::size_t steps) const {
    if (!(s_w >= 0.0) || !std::isfinite(s_w)) throw ConfigError("guidance.s_w must be finite and >= 0");
    if (!(s_s >= 0.0) || !std::isfinite(s_s)) throw ConfigError("guidance.s_s must be finite and >= 0");
    if (resolved_t1(steps) > steps) throw ConfigError("guidance.T1 must not exceed schedule.T");
    if (repeats < 1) throw ConfigError("guidance.N must be at least 1");
    labels.validate();
    for (const auto& [label, w] : label_strength) {
      if (label < 0 || label > kMaxLabel) throw ConfigError("guidance.label_strength: label outside [0,18]");
      if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("guidance.label_strength: weights must be finite and >= 0");
    }
  }
};

struct StepTrace {
  std::size_t t = 0;
  Stage stage = Stage::restoration;
  double l1 = 0.0, l2 = 0.0, l3 = 0.0;
  double g1 = 0.0, g2 = 0.0, g3 = 0.0, g_total = 0.0;
};

/// Called once per timestep with the clean estimate and the report of the
/// kept (last) repeat.
using StepObserver = std::function<void(std::size_t t, const ImageTensor& x0_hat, const LossReport& report)>;

inline const std::vector<std::string>& trace_columns() {
  static const std::vector<std::string> cols = {"t", "stage", "l1", "l2", "l3", "g1", "g2", "g3", "g_total"};
  return cols;
}

inline Table trace_table(const std::vector<StepTrace>& trace, std::vector<std::pair<std::string, std::string>> meta = {}) {
  Table tab;
  tab.title = "ssdiff trace v1";
  tab.meta = std::move(meta);
  tab.columns = trace_columns();
  for (const auto& r : trace) {
    tab.add_row({std::to_string(r.t), std::string(to_string(r.stage)), Table::num(r.l1), Table::num(r.l2),
                 Table::num(r.l3), Table::num(r.g1), Table::num(r.g2), Table::num(r.g3), Table::num(r.g_total)});
  }
  return tab;
}

namespace detail {

inline void require_finite(const ImageTensor& x0_hat, std::size_t t, const std::vector<StepTrace>& trace) {
  if (x0_hat.all_finite()) return;
  std::string msg = "non-finite x0 estimate at t=" + std::to_string(t);
  if (!trace.empty()) {
    const auto& r = trace.back();
    msg += " (last trace row: t=" + std::to_string(r.t) + " l1=" + Table::num(r.l1) + " l2=" + Table::num(r.l2) +
           " l3=" + Table::num(r.l3) + " g_total=" + Table::num(r.g_total) + ")";
  }
  throw NumericError(msg);
}

}  // namespace detail

/// Plain ancestral sampling from x_T ~ N(0, I). Consumes the noise stream
/// exactly like the guided loops with N = 1.
inline ImageTensor ancestral_sample(Denoiser& den, const NoiseSchedule& sched, const Shape& shape, NoiseStream& rng) {
  ImageTensor x = rng.standard_normal(shape);
  const ImageTensor zero(shape);
  for (std::size_t t = sched.steps(); t >= 1; --t) {
    const auto eps = den.predict_eps(x, t);
    const auto m = posterior(x, eps, t, sched);
    x = guided_transition(m, zero, 0.0, rng.standard_normal(shape));
  }
  return x;
}

struct PseudoLabelResult {
  ImageTensor y_p;
  std::vector<StepTrace> trace;  // l1 column holds ||y0 - x0_hat||^2
};

/// Reverse diffusion from pure noise under weak fidelity guidance toward y0.
inline PseudoLabelResult generate_pseudo_label(const ImageTensor& y0, Denoiser& den, const NoiseSchedule& sched,
                                               const GuidanceConfig& cfg) {
  NoiseStream rng(cfg.seed, stream_id::pseudo_label);
  PseudoLabelResult out;
  out.trace.reserve(sched.steps());
  ImageTensor x = rng.standard_normal(y0.shape());
  for (std::size_t t = sched.steps(); t >= 1; --t) {
    const auto eps = den.predict_eps(x, t);
    const auto x0_hat = predict_x0(x, eps, t, sched);
    detail::require_finite(x0_hat, t, out.trace);
    ImageTensor grad(y0.shape());
    double loss = 0.0;
    for (std::size_t k = 0; k < grad.size(); ++k) {
      const double d = x0_hat[k] - y0[k];
      loss += d * d;
      grad[k] = 2.0 * d;
    }
    const auto m = posterior(x, eps, t, sched);
    x = guided_transition(m, grad, cfg.s_w, rng.standard_normal(y0.shape()));
    const double gn = l2_norm(grad);
    out.trace.push_back({t, Stage::restoration, loss, 0.0, 0.0, gn, 0.0, 0.0, gn});
  }
  out.y_p = std::move(x);
  return out;
}

struct RestoreInputs {
  ImageTensor y0;                       // degraded input
  std::optional<ImageTensor> restored;  // initially restored y0_hat (optional)
  BinaryMask scratch;                   // M
  ParsingMap parsing;                   // P
  std::optional<ImageTensor> pseudo_label;  // reuse a precomputed y_p instead of sampling one

  void validate() const {
    const auto& s = y0.shape();
    if (restored && restored->shape() != s) throw ShapeError("restore: restored image shape differs from input");
    if (pseudo_label && pseudo_label->shape() != s) throw ShapeError("restore: pseudo-label shape differs from input");
    if (!scratch.matches(s)) throw ShapeError("restore: scratch mask dimensions differ from input");
    if (!parsing.matches(s)) throw ShapeError("restore: parsing map dimensions differ from input");
  }
};

struct RestoreResult {
  ImageTensor x0;
  ImageTensor pseudo_label;
  RegionBundle regions;
  std::vector<StepTrace> trace;
  std::vector<StepTrace> pseudo_trace;
};

inline ImageTensor label_weight_map(const ParsingMap& p, const std::map<int, double>& strength) {
  ImageTensor w(1, p.height(), p.width(), 1.0);
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (const auto it = strength.find(p[k]); it != strength.end()) w[k] = it->second;
  }
  return w;
}

/// Staged selective guidance: restoration guidance (fidelity + breakage
/// smoothness) at every step, color guidance once t <= T1.
inline RestoreResult restore(const RestoreInputs& in, Denoiser& den, const NoiseSchedule& sched,
                             const GuidanceConfig& cfg, const StepObserver& observer = {}) {
  in.validate();
  cfg.validate(sched.steps());
  const Shape shape = in.y0.shape();
  const std::size_t t1 = cfg.resolved_t1(sched.steps());

  RestoreResult out;
  if (in.pseudo_label) {
    out.pseudo_label = *in.pseudo_label;
  } else {
    auto pl = generate_pseudo_label(in.y0, den, sched, cfg);
    out.pseudo_label = std::move(pl.y_p);
    out.pseudo_trace = std::move(pl.trace);
  }

  const ImageTensor* fidelity = &out.pseudo_label;
  if (cfg.fidelity_source == FidelitySource::restored) {
    if (!in.restored) throw ConfigError("guidance.yc_source=restored needs inputs.restored");
    fidelity = &*in.restored;
  } else if (cfg.fidelity_source == FidelitySource::automatic && in.restored) {
    fidelity = &*in.restored;
  }
  out.regions = build_regions(*fidelity, out.pseudo_label, in.scratch, in.parsing, cfg.labels,
                              cfg.resolved_radius(shape.height));
  const auto& reg = out.regions;

  const bool weighted = !cfg.label_strength.empty();
  const ImageTensor weights = weighted ? label_weight_map(in.parsing, cfg.label_strength) : ImageTensor();

  NoiseStream rng(cfg.seed, stream_id::restore);
  ImageTensor x = rng.standard_normal(shape);
  std::optional<ImageTensor> y_s;
  std::size_t y_s_step = 0;
  out.trace.reserve(sched.steps());

  for (std::size_t t = sched.steps(); t >= 1; --t) {
    const Stage stage = stage_for(t, t1);
    ImageTensor next;
    ImageTensor x0_hat;
    LossReport report;
    for (std::size_t rep = 1; rep <= cfg.repeats; ++rep) {
      const auto eps = den.predict_eps(x, t);
      x0_hat = predict_x0(x, eps, t, sched);
      detail::require_finite(x0_hat, t, out.trace);

      auto l1 = loss_fidelity(x0_hat, reg.y_c, in.scratch);
      auto l2 = loss_smoothness(select(x0_hat, reg.guide_ext), reg.y_n, reg.guide_ext);
      std::optional<LossTerm> l3;
      if (stage == Stage::coloring) {
        const auto x_s = select(x0_hat, reg.skin);
        const bool refresh = cfg.color_refresh > 0 && y_s_step - t >= cfg.color_refresh;
        if (!y_s || refresh) {
          y_s = color_transfer(x_s, reg.y_p_skin, reg.skin, reg.skin, {cfg.color_space, true});
          y_s_step = t;
        }
        l3 = loss_color(x_s, *y_s, reg.skin);
      }
      report = assemble_gradient(stage, std::move(l1), std::move(l2), std::move(l3));
      if (weighted) {
        for (std::size_t c = 0; c < shape.channels; ++c) {
          auto g = report.grad.plane(c);
          for (std::size_t k = 0; k < g.size(); ++k) g[k] *= weights[k];
        }
        report.norm_total = l2_norm(report.grad);
      }

      const auto m = posterior(x, eps, t, sched);
      next = guided_transition(m, report.grad, cfg.s_s, rng.standard_normal(shape));
      if (rep < cfg.repeats) x = forward_step(next, t, rng.standard_normal(shape), sched);
    }
    out.trace.push_back({t, stage, report.l1, report.l2, report.l3, report.norm_l1, report.norm_l2, report.norm_l3,
                         report.norm_total});
    if (observer) observer(t, x0_hat, report);
    x = std::move(next);
  }
  out.x0 = std::move(x);
  return out;
}

// ---------------------------------------------------------------------------
// Ablation sweep

struct SweepPoint {
  double s_w = 1e-3;
  double s_s = 3.5e-3;
  std::size_t t1 = 0;
};

struct SweepRow {
  std::size_t input = 0;
  SweepPoint point;
  MetricRow metrics;
};

using DenoiserFactory = std::function<std::unique_ptr<Denoiser>()>;

/// Metrics of a finished restore: fidelity to y_c on intact pixels, edge
/// variation inside the extended guide region, and saturation distance to the
/// pseudo-label for color inputs.
inline MetricRow restore_metrics(const RestoreResult& r) {
  MetricRow m;
  const auto f = mse_psnr(r.x0, r.regions.y_c, &r.regions.valid);
  m.mse = f.mse;
  m.psnr = f.psnr;
  m.edge_variation = edge_variation(r.x0, r.regions.guide_ext);
  if (r.x0.channels() == 3) m.saturation_distance = saturation_distance(r.x0, saturation_histogram(r.pseudo_label));
  return m;
}

/// One restore per (input, grid point), each cell with its own denoiser and
/// the base seed, run on up to `workers` threads. Rows come back in
/// input-major, grid-minor order regardless of scheduling.
inline std::vector<SweepRow> run_ablation_sweep(const std::vector<RestoreInputs>& inputs,
                                                const std::vector<SweepPoint>& grid, const DenoiserFactory& make_denoiser,
                                                const NoiseSchedule& sched, const GuidanceConfig& base,
                                                std::size_t workers = 1) {
  if (grid.empty()) throw ConfigError("sweep: grid is empty");
  const std::size_t cells = inputs.size() * grid.size();
  std::vector<SweepRow> rows(cells);
  std::vector<std::exception_ptr> errors(cells);
  std::size_t next = 0;
  std::mutex lock;

  const auto work = [&] {
    for (;;) {
      std::size_t cell;
      {
        std::lock_guard<std::mutex> g(lock);
        if (next >= cells) return;
        cell = next++;
      }
      const std::size_t i = cell / grid.size();
      const auto& pt = grid[cell % grid.size()];
      try {
        GuidanceConfig cfg = base;
        cfg.s_w = pt.s_w;
        cfg.s_s = pt.s_s;
        cfg.t1 = pt.t1;
        auto den = make_denoiser();
        const auto res = restore(inputs[i], *den, sched, cfg);
        rows[cell] = {i, pt, restore_metrics(res)};
      } catch (...) {
        errors[cell] = std::current_exception();
      }
    }
  };

  const std::size_t n = std::max<std::size_t>(1, std::min(workers, cells));
  if (n == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < n; ++k) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

inline Table sweep_table(const std::vector<SweepRow>& rows, const std::vector<std::string>& input_names) {
  Table tab;
  tab.title = "ssdiff sweep v1";
  tab.columns = {"input", "s_w", "s_s", "T1"};
  for (const auto& c : metric_columns()) tab.columns.push_back(c);
  for (const auto& r : rows) {
    std::vector<std::string> cells = {r.input < input_names.size() ? input_names[r.input] : std::to_string(r.input),
                                      Table::num(r.point.s_w), Table::num(r.point.s_s), std::to_string(r.point.t1)};
    for (auto& c : metric_cells(r.metrics)) cells.push_back(std::move(c));
    tab.add_row(std::move(cells));
  }
  return tab;
}

}  // namespace ssdiff
