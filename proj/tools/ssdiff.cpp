#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ssdiff/ssdiff.hpp"

namespace {

using ssdiff::RunConfig;

// Flag values are kept optional so that only flags actually given override
// the config file.
struct RunFlags {
  std::string config;
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<double> beta_start, beta_end;
  std::optional<double> s_w, s_s;
  std::optional<std::size_t> t1, repeats, dilation_radius, color_refresh, snapshot_every;
  std::optional<std::string> yc_source, color_space;
  std::vector<std::string> label_strength;
  std::optional<std::string> lq, restored, mask, parsing, pseudo_label;
  std::optional<std::string> backend, endpoint, mean, var;
  std::optional<std::size_t> timeout_ms, workers;
  std::optional<std::string> batch;
};

void add_run_flags(CLI::App& cmd, RunFlags& f, bool batch) {
  cmd.add_option("-c,--config", f.config, "JSON run configuration");
  cmd.add_option("-o,--output-dir", f.output_dir, "Output directory");
  cmd.add_option("--seed", f.seed, "Run seed");
  cmd.add_option("--steps", f.steps, "Diffusion steps T");
  cmd.add_option("--beta-start", f.beta_start, "First beta of the linear schedule");
  cmd.add_option("--beta-end", f.beta_end, "Last beta of the linear schedule");
  cmd.add_option("--s-w", f.s_w, "Weak guidance scale (pseudo-label pass)");
  cmd.add_option("--s-s", f.s_s, "Strong guidance scale (restoration pass)");
  cmd.add_option("--t1", f.t1, "Stage boundary T1");
  cmd.add_option("--repeats", f.repeats, "Inner repeats N per step");
  cmd.add_option("--dilation-radius", f.dilation_radius, "Scratch mask extension radius");
  cmd.add_option("--color-refresh", f.color_refresh, "Recompute the color target every K steps (0: once)");
  cmd.add_option("--snapshot-every", f.snapshot_every, "Write x0 estimates every K steps (0: off)");
  cmd.add_option("--yc-source", f.yc_source, "Fidelity target: auto, restored or pseudo");
  cmd.add_option("--color-space", f.color_space, "Color transfer space: rgb or lab");
  cmd.add_option("--label-strength", f.label_strength, "Per-label gradient weight, LABEL=W (repeatable)");
  cmd.add_option("--lq", f.lq, "Degraded input image (PNG or .ssdt)");
  cmd.add_option("--restored", f.restored, "Initially restored image");
  cmd.add_option("--mask", f.mask, "Scratch mask PNG");
  cmd.add_option("--parsing", f.parsing, "Parsing map PNG (label codes 0..18)");
  cmd.add_option("--pseudo-label", f.pseudo_label, "Reuse a precomputed pseudo-label");
  cmd.add_option("--backend", f.backend, "Denoiser backend: gaussian, gmm or remote");
  cmd.add_option("--endpoint", f.endpoint, "Remote denoiser: tcp://host:port or exec:<command>");
  cmd.add_option("--timeout-ms", f.timeout_ms, "Remote denoiser timeout");
  cmd.add_option("--mean", f.mean, "Gaussian backend mean: number or tensor path");
  cmd.add_option("--var", f.var, "Gaussian backend variance: number or tensor path");
  cmd.add_option("--workers", f.workers, "Worker threads for batch and sweep runs");
  if (batch) cmd.add_option("--batch", f.batch, "Directory with one subdirectory per input");
}

ssdiff::FieldSpec field_from_flag(const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  return std::filesystem::path(text);
}

RunConfig resolve(const RunFlags& f) {
  RunConfig cfg = f.config.empty() ? ssdiff::parse_config(ssdiff::Json::object()) : ssdiff::load_config(f.config);
  auto& g = cfg.guidance;
  if (f.output_dir) cfg.output_dir = *f.output_dir;
  if (f.seed) g.seed = *f.seed;
  if (f.steps) cfg.schedule.steps = *f.steps;
  if (f.beta_start) cfg.schedule.beta_start = *f.beta_start;
  if (f.beta_end) cfg.schedule.beta_end = *f.beta_end;
  if (f.s_w) g.s_w = *f.s_w;
  if (f.s_s) g.s_s = *f.s_s;
  if (f.t1) g.t1 = *f.t1;
  if (f.repeats) g.repeats = *f.repeats;
  if (f.dilation_radius) g.dilation_radius = *f.dilation_radius;
  if (f.color_refresh) g.color_refresh = *f.color_refresh;
  if (f.snapshot_every) cfg.snapshot_every = *f.snapshot_every;

  // Enumerations and label weights go through the config parser so flags and
  // files share one set of rules.
  ssdiff::Json guidance = ssdiff::Json::object();
  if (f.yc_source) guidance["yc_source"] = *f.yc_source;
  if (f.color_space) guidance["color_space"] = *f.color_space;
  for (const auto& entry : f.label_strength) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos) throw ssdiff::ConfigError("--label-strength: expected LABEL=WEIGHT, got '" + entry + "'");
    try {
      guidance["label_strength"][entry.substr(0, eq)] = std::stod(entry.substr(eq + 1));
    } catch (const std::logic_error&) {
      throw ssdiff::ConfigError("--label-strength: bad weight in '" + entry + "'");
    }
  }
  if (!guidance.empty()) {
    const auto parsed = ssdiff::parse_config({{"guidance", guidance}}).guidance;
    if (f.yc_source) g.fidelity_source = parsed.fidelity_source;
    if (f.color_space) g.color_space = parsed.color_space;
    for (const auto& [label, w] : parsed.label_strength) g.label_strength[label] = w;
  }

  if (f.lq) cfg.inputs.lq = *f.lq;
  if (f.restored) cfg.inputs.restored = *f.restored;
  if (f.mask) cfg.inputs.mask = *f.mask;
  if (f.parsing) cfg.inputs.parsing = *f.parsing;
  if (f.pseudo_label) cfg.inputs.pseudo_label = *f.pseudo_label;
  if (f.backend) {
    const auto d = ssdiff::parse_config({{"denoiser", {{"backend", *f.backend}}}}).denoiser;
    cfg.denoiser.backend = d.backend;
  }
  if (f.endpoint) cfg.denoiser.endpoint = *f.endpoint;
  if (f.timeout_ms) cfg.denoiser.timeout = std::chrono::milliseconds(*f.timeout_ms);
  if (f.mean) cfg.denoiser.gaussian.mean = field_from_flag(*f.mean);
  if (f.var) cfg.denoiser.gaussian.var = field_from_flag(*f.var);
  if (f.workers) cfg.workers = *f.workers;
  return cfg;
}

std::optional<std::filesystem::path> batch_dir(const RunFlags& f) {
  if (f.batch) return std::filesystem::path(*f.batch);
  return std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Staged selective guided diffusion for old-photo face restoration"};
  app.require_subcommand(1);

  RunFlags pl_flags, rs_flags, sw_flags;
  auto* pseudo = app.add_subcommand("pseudo-label", "Sample a pseudo-label under weak guidance");
  add_run_flags(*pseudo, pl_flags, false);
  auto* rest = app.add_subcommand("restore", "Run the staged guided restoration");
  add_run_flags(*rest, rs_flags, true);

  auto* sweep = app.add_subcommand("sweep", "Ablation sweep over s_w, s_s and T1");
  add_run_flags(*sweep, sw_flags, true);
  ssdiff::SweepGrid grid;
  sweep->add_option("--grid-s-w", grid.s_w, "Weak scales to sweep")->delimiter(',');
  sweep->add_option("--grid-s-s", grid.s_s, "Strong scales to sweep")->delimiter(',');
  sweep->add_option("--grid-t1", grid.t1, "Stage boundaries to sweep")->delimiter(',');

  auto* metrics = app.add_subcommand("metrics", "Diagnostic metrics for images and parsing maps");
  std::vector<std::string> entries;
  std::string ref_hist, metrics_out;
  metrics->add_option("entries", entries, "image,parsing[,ref_image,ref_parsing]");
  metrics->add_option("--ref-hist", ref_hist, "Reference saturation histogram (SSH1)");
  metrics->add_option("-o,--output", metrics_out, "Write the table here instead of stdout");

  auto* selftest = app.add_subcommand("selftest", "Run the analytic-backend property suite");
  std::string fault;
  selftest->add_option("--inject-fault", fault)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*pseudo) {
      ssdiff::cmd_pseudo_label(resolve(pl_flags), std::cout);
    } else if (*rest) {
      ssdiff::cmd_restore(resolve(rs_flags), std::cout, batch_dir(rs_flags));
    } else if (*sweep) {
      ssdiff::cmd_sweep(resolve(sw_flags), grid, std::cout, batch_dir(sw_flags));
    } else if (*metrics) {
      std::optional<std::filesystem::path> hist;
      if (!ref_hist.empty()) hist = ref_hist;
      const auto tab = ssdiff::cmd_metrics(entries, hist);
      if (metrics_out.empty()) {
        tab.write(std::cout);
      } else {
        tab.save(metrics_out);
      }
    } else if (*selftest) {
      ssdiff::checks::Options opt;
      if (!fault.empty()) {
        if (fault != "l1-sign") throw ssdiff::ConfigError("--inject-fault: unknown fault '" + fault + "'");
        opt.flip_fidelity_gradient = true;
      }
      if (!ssdiff::cmd_selftest(std::cout, opt)) return 5;
    }
  } catch (const ssdiff::Error& e) {
    std::cerr << "ssdiff: " << e.what() << "\n";
    return e.exit_code();
  } catch (const ssdiff::ShapeError& e) {
    std::cerr << "ssdiff: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "ssdiff: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "ssdiff: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
