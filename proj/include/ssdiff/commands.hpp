#pragma once

#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ssdiff/checks.hpp"
#include "ssdiff/config.hpp"
#include "ssdiff/io.hpp"
#include "ssdiff/metrics.hpp"
#include "ssdiff/sampler.hpp"

namespace ssdiff {

namespace fs = std::filesystem;

inline RestoreInputs load_restore_inputs(const InputPaths& p) {
  RestoreInputs in{load_any_image(p.lq), std::nullopt, load_mask(p.mask), load_parsing(p.parsing), std::nullopt};
  if (p.restored) in.restored = load_any_image(*p.restored);
  if (p.pseudo_label) in.pseudo_label = load_any_image(*p.pseudo_label);
  in.validate();
  return in;
}

/// A batch directory holds one subdirectory per input, each with lq, mask and
/// parsing files (PNG, or .ssdt for lq) and optionally a restored image.
inline std::vector<std::pair<std::string, InputPaths>> scan_batch(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("batch: not a directory: " + dir.string());
  const auto find = [](const fs::path& d, const std::string& stem) -> std::optional<fs::path> {
    for (const char* ext : {".png", ".ssdt"}) {
      if (auto p = d / (stem + ext); fs::is_regular_file(p)) return p;
    }
    return std::nullopt;
  };
  std::vector<std::pair<std::string, InputPaths>> out;
  std::vector<fs::path> subdirs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) subdirs.push_back(e.path());
  }
  std::sort(subdirs.begin(), subdirs.end());
  for (const auto& d : subdirs) {
    const auto lq = find(d, "lq"), mask = find(d, "mask"), parsing = find(d, "parsing");
    if (!lq || !mask || !parsing) throw ConfigError("batch: " + d.string() + " lacks lq, mask or parsing");
    out.push_back({d.filename().string(), {*lq, find(d, "restored"), *mask, *parsing, std::nullopt}});
  }
  return out;
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

// ---------------------------------------------------------------------------
// pseudo-label

inline void cmd_pseudo_label(const RunConfig& cfg, std::ostream& log) {
  validate(cfg);
  const auto y0 = load_any_image(cfg.inputs.lq);
  const auto scratch = load_mask(cfg.inputs.mask);
  const auto parsing = load_parsing(cfg.inputs.parsing);
  if (!scratch.matches(y0.shape()) || !parsing.matches(y0.shape())) {
    throw ShapeError("pseudo-label: mask or parsing dimensions differ from the input");
  }
  const auto sched = cfg.schedule.build();
  auto den = make_denoiser_factory(cfg, y0.shape())();
  const auto res = generate_pseudo_label(y0, *den, sched, cfg.guidance);

  ensure_dir(cfg.output_dir);
  save_png(res.y_p, cfg.output_dir / "pseudo_label.png");
  save_tensor(res.y_p, cfg.output_dir / "pseudo_label.ssdt");
  trace_table(res.trace, config_echo(cfg)).save(cfg.output_dir / "pseudo_trace.txt");

  MetricRow m;
  const auto f = mse_psnr(res.y_p, y0);
  m.mse = f.mse;
  m.psnr = f.psnr;
  const auto region =
      extend_mask(make_guide_mask(scratch, parsing, cfg.guidance.labels), cfg.guidance.resolved_radius(y0.height()));
  m.edge_variation = edge_variation(res.y_p, region);
  if (y0.channels() == 3) m.saturation_distance = saturation_distance(res.y_p, saturation_histogram(y0));
  Table tab;
  tab.title = "ssdiff metrics v1";
  tab.columns = {"input"};
  for (const auto& c : metric_columns()) tab.columns.push_back(c);
  auto cells = metric_cells(m);
  cells.insert(cells.begin(), cfg.inputs.lq.filename().string());
  tab.add_row(std::move(cells));
  tab.save(cfg.output_dir / "metrics.txt");
  log << "pseudo-label written to " << cfg.output_dir.string() << " (mse to input " << Table::num(f.mse) << ")\n";
}

// ---------------------------------------------------------------------------
// restore

inline Table metrics_table(const std::vector<std::pair<std::string, MetricRow>>& rows) {
  Table tab;
  tab.title = "ssdiff metrics v1";
  tab.columns = {"input"};
  for (const auto& c : metric_columns()) tab.columns.push_back(c);
  for (const auto& [name, m] : rows) {
    auto cells = metric_cells(m);
    cells.insert(cells.begin(), name);
    tab.add_row(std::move(cells));
  }
  return tab;
}

/// One restore run writing every artifact under `out_dir`.
inline MetricRow restore_to_dir(const RunConfig& cfg, const RestoreInputs& in, Denoiser& den, const fs::path& out_dir) {
  const auto sched = cfg.schedule.build();
  ensure_dir(out_dir);
  StepObserver snap;
  if (cfg.snapshot_every > 0) {
    ensure_dir(out_dir / "snapshots");
    snap = [&](std::size_t t, const ImageTensor& x0_hat, const LossReport&) {
      if (t % cfg.snapshot_every != 0) return;
      char name[32];
      std::snprintf(name, sizeof name, "x0_t%04zu.ssdt", t);
      save_tensor(x0_hat, out_dir / "snapshots" / name);
    };
  }
  const auto res = restore(in, den, sched, cfg.guidance, snap);
  save_png(res.x0, out_dir / "restored.png");
  save_tensor(res.x0, out_dir / "restored.ssdt");
  save_png(res.pseudo_label, out_dir / "pseudo_label.png");
  save_tensor(res.pseudo_label, out_dir / "pseudo_label.ssdt");
  const auto echo = config_echo(cfg);
  trace_table(res.trace, echo).save(out_dir / "trace.txt");
  if (!res.pseudo_trace.empty()) trace_table(res.pseudo_trace, echo).save(out_dir / "pseudo_trace.txt");
  const auto m = restore_metrics(res);
  metrics_table({{"restored", m}}).save(out_dir / "metrics.txt");
  return m;
}

/// Restores the configured input, or every input of `batch` on a worker pool
/// (one denoiser per worker) into output_dir/<name>/.
inline void cmd_restore(const RunConfig& cfg, std::ostream& log, const std::optional<fs::path>& batch = std::nullopt) {
  if (!batch) {
    validate(cfg);
    const auto in = load_restore_inputs(cfg.inputs);
    auto den = make_denoiser_factory(cfg, in.y0.shape())();
    const auto m = restore_to_dir(cfg, in, *den, cfg.output_dir);
    log << "restored image written to " << cfg.output_dir.string() << " (mse to y_c " << Table::num(m.mse) << ")\n";
    return;
  }

  const auto items = scan_batch(*batch);
  for (const auto& [name, paths] : items) {
    RunConfig c = cfg;
    c.inputs = paths;
    validate(c);
  }
  std::vector<std::pair<std::string, MetricRow>> rows(items.size());
  std::vector<std::exception_ptr> errors(items.size());
  std::size_t next = 0;
  std::mutex lock;
  const auto work = [&] {
    for (;;) {
      std::size_t k;
      {
        std::lock_guard<std::mutex> g(lock);
        if (next >= items.size()) return;
        k = next++;
      }
      try {
        RunConfig c = cfg;
        c.inputs = items[k].second;
        const auto in = load_restore_inputs(c.inputs);
        auto den = make_denoiser_factory(c, in.y0.shape())();
        rows[k] = {items[k].first, restore_to_dir(c, in, *den, cfg.output_dir / items[k].first)};
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::thread> pool;
    const std::size_t n = std::max<std::size_t>(1, std::min(cfg.workers, items.size()));
    for (std::size_t k = 0; k < n; ++k) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  ensure_dir(cfg.output_dir);
  metrics_table(rows).save(cfg.output_dir / "metrics.txt");
  log << items.size() << " inputs restored into " << cfg.output_dir.string() << "\n";
}

// ---------------------------------------------------------------------------
// metrics

/// One metrics entry: "image,parsing" or "image,parsing,ref_image,ref_parsing".
struct MetricEntry {
  fs::path image;
  fs::path parsing;
  std::optional<fs::path> ref_image;
  std::optional<fs::path> ref_parsing;

  static MetricEntry parse(const std::string& spec) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    for (std::string p; std::getline(ss, p, ',');) parts.push_back(p);
    if ((parts.size() != 2 && parts.size() != 4) ||
        std::any_of(parts.begin(), parts.end(), [](const auto& p) { return p.empty(); })) {
      throw ConfigError("metrics entry '" + spec + "': expected image,parsing[,ref_image,ref_parsing]");
    }
    MetricEntry e{parts[0], parts[1], std::nullopt, std::nullopt};
    if (parts.size() == 4) {
      e.ref_image = parts[2];
      e.ref_parsing = parts[3];
    }
    return e;
  }
};

/// Metrics of one image. Edge variation is taken over the face (non-background)
/// region of its parsing map, or the whole image when that is empty; the
/// saturation reference is the histogram file when given, else the reference
/// image.
inline MetricRow image_metrics(const MetricEntry& e, const std::optional<std::vector<double>>& ref_hist) {
  const auto img = load_any_image(e.image);
  const auto parsing = load_parsing(e.parsing);
  if (!parsing.matches(img.shape())) throw ShapeError("metrics: parsing map dimensions differ from " + e.image.string());
  MetricRow m;
  LabelSet face;
  for (int v = 1; v <= kMaxLabel; ++v) face.insert(v);
  auto region = labels_to_mask(parsing, face);
  if (region.none()) region = BinaryMask(img.height(), img.width(), 1);
  m.edge_variation = edge_variation(img, region);
  if (e.ref_image) {
    const auto ref = load_any_image(*e.ref_image);
    const auto ref_p = load_parsing(*e.ref_parsing);
    m.contour_iou = contour_iou(parsing, ref_p);
    m.feature_iou = feature_iou(parsing, ref_p);
    const auto f = mse_psnr(img, ref);
    m.mse = f.mse;
    m.psnr = f.psnr;
    if (img.channels() == 3 && !ref_hist && ref.channels() == 3) {
      m.saturation_distance = saturation_distance(img, saturation_histogram(ref));
    }
  }
  if (img.channels() == 3 && ref_hist) m.saturation_distance = saturation_distance(img, *ref_hist);
  return m;
}

inline Table cmd_metrics(const std::vector<std::string>& entries, const std::optional<fs::path>& ref_hist_path) {
  std::vector<MetricEntry> parsed;
  for (const auto& s : entries) parsed.push_back(MetricEntry::parse(s));
  std::optional<std::vector<double>> ref_hist;
  if (ref_hist_path) ref_hist = load_histogram(*ref_hist_path);
  std::vector<std::pair<std::string, MetricRow>> rows;
  for (const auto& e : parsed) rows.emplace_back(e.image.string(), image_metrics(e, ref_hist));
  return metrics_table(rows);
}

// ---------------------------------------------------------------------------
// sweep

struct SweepGrid {
  std::vector<double> s_w;
  std::vector<double> s_s;
  std::vector<std::size_t> t1;

  /// Empty axes fall back to the configured value.
  std::vector<SweepPoint> points(const GuidanceConfig& base, std::size_t steps) const {
    const auto sw = s_w.empty() ? std::vector<double>{base.s_w} : s_w;
    const auto ss = s_s.empty() ? std::vector<double>{base.s_s} : s_s;
    const auto tt = t1.empty() ? std::vector<std::size_t>{base.resolved_t1(steps)} : t1;
    std::vector<SweepPoint> out;
    for (double a : sw) {
      for (double b : ss) {
        for (std::size_t c : tt) out.push_back({a, b, c});
      }
    }
    return out;
  }
};

inline Table cmd_sweep(const RunConfig& cfg, const SweepGrid& grid, std::ostream& log,
                       const std::optional<fs::path>& batch = std::nullopt) {
  std::vector<std::pair<std::string, InputPaths>> items;
  if (batch) {
    items = scan_batch(*batch);
  } else {
    items.push_back({cfg.inputs.lq.filename().string(), cfg.inputs});
  }
  const auto points = grid.points(cfg.guidance, cfg.schedule.steps);
  for (const auto& [name, paths] : items) {
    RunConfig c = cfg;
    c.inputs = paths;
    validate(c);
    for (const auto& p : points) {
      GuidanceConfig g = cfg.guidance;
      g.s_w = p.s_w;
      g.s_s = p.s_s;
      g.t1 = p.t1;
      g.validate(cfg.schedule.steps);
    }
  }
  if (items.empty()) throw ConfigError("sweep: no inputs");

  std::vector<RestoreInputs> inputs;
  std::vector<std::string> names;
  for (const auto& [name, paths] : items) {
    inputs.push_back(load_restore_inputs(paths));
    names.push_back(name);
  }
  for (const auto& in : inputs) {
    if (in.y0.shape() != inputs.front().y0.shape()) throw ShapeError("sweep: all inputs must share one shape");
  }
  const auto factory = make_denoiser_factory(cfg, inputs.front().y0.shape());
  const auto rows = run_ablation_sweep(inputs, points, factory, cfg.schedule.build(), cfg.guidance, cfg.workers);
  auto tab = sweep_table(rows, names);
  tab.meta = config_echo(cfg);
  ensure_dir(cfg.output_dir);
  tab.save(cfg.output_dir / "sweep.txt");
  log << rows.size() << " sweep cells written to " << (cfg.output_dir / "sweep.txt").string() << "\n";
  return tab;
}

// ---------------------------------------------------------------------------
// selftest

/// Runs the property suite, printing one line per property. Returns true when
/// everything passed.
inline bool cmd_selftest(std::ostream& out, const checks::Options& opt = {}) {
  bool all = true;
  for (const auto& r : checks::run_selftest(opt)) {
    out << (r.passed ? "PASS  " : "FAIL  ") << r.name << "  (" << r.detail << "; " << checks::detail::fmt("%.1f", r.seconds)
        << " s)\n";
    all = all && r.passed;
  }
  out << (all ? "selftest passed\n" : "selftest FAILED\n");
  return all;
}

}  // namespace ssdiff
