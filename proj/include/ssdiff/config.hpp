#pragma once

// Run configuration: a JSON document plus command-line overrides. Parsing
// rejects unknown keys; validate() is total and runs before any sampling.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ssdiff/denoiser.hpp"
#include "ssdiff/io.hpp"
#include "ssdiff/remote.hpp"
#include "ssdiff/sampler.hpp"
#include "ssdiff/schedule.hpp"

namespace ssdiff {

using Json = nlohmann::json;

struct ScheduleConfig {
  std::size_t steps = 1000;
  std::optional<double> beta_start;  // both unset: defaults scaled to T
  std::optional<double> beta_end;

  NoiseSchedule build() const {
    if (!beta_start && !beta_end) return make_default_schedule(steps);
    return make_linear_schedule(steps, beta_start.value_or(kDefaultBetaStart), beta_end.value_or(kDefaultBetaEnd));
  }
};

struct InputPaths {
  std::filesystem::path lq;
  std::optional<std::filesystem::path> restored;
  std::filesystem::path mask;
  std::filesystem::path parsing;
  std::optional<std::filesystem::path> pseudo_label;
};

/// A scalar broadcast to the image shape or a tensor/PNG file.
using FieldSpec = std::variant<double, std::filesystem::path>;

struct GaussianSpec {
  FieldSpec mean = 0.0;
  FieldSpec var = 1.0;
};

struct DenoiserConfig {
  enum class Backend { gaussian, gmm, remote } backend = Backend::gaussian;
  GaussianSpec gaussian;
  std::vector<std::pair<double, GaussianSpec>> components;  // gmm
  std::string endpoint;                                     // remote
  std::chrono::milliseconds timeout{30000};
};

inline std::string_view to_string(DenoiserConfig::Backend b) {
  switch (b) {
    case DenoiserConfig::Backend::gaussian: return "gaussian";
    case DenoiserConfig::Backend::gmm: return "gmm";
    case DenoiserConfig::Backend::remote: return "remote";
  }
  return "?";
}

struct RunConfig {
  ScheduleConfig schedule;
  GuidanceConfig guidance;
  std::size_t snapshot_every = 0;
  InputPaths inputs;
  DenoiserConfig denoiser;
  std::filesystem::path output_dir = "out";
  std::size_t workers = 1;
};

namespace config_detail {

inline void allow_keys(const Json& obj, const std::string& where, std::initializer_list<std::string_view> keys) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : obj.items()) {
    bool known = false;
    for (auto allowed : keys) known = known || k == allowed;
    if (!known) throw ConfigError((where.empty() ? k : where + "." + k) + ": unknown key");
  }
}

template <class T>
T get(const Json& obj, const std::string& key, const std::string& field) {
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(field + ": wrong type");
  }
}

inline std::size_t get_count(const Json& obj, const std::string& key, const std::string& field) {
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(field + ": expected a non-negative integer");
  return v.get<std::size_t>();
}

inline double get_real(const Json& obj, const std::string& key, const std::string& field) {
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(field + ": expected a number");
  return v.get<double>();
}

inline std::filesystem::path get_path(const Json& obj, const std::string& key, const std::string& field,
                                      const std::filesystem::path& base) {
  const auto& v = obj.at(key);
  if (!v.is_string() || v.get<std::string>().empty()) throw ConfigError(field + ": expected a path string");
  std::filesystem::path p = v.get<std::string>();
  return p.is_absolute() ? p : base / p;
}

inline int parse_label(const std::string& text, const std::string& field) {
  for (std::size_t k = 0; k < kLabelNames.size(); ++k) {
    if (kLabelNames[k] == text) return static_cast<int>(k);
  }
  try {
    std::size_t used = 0;
    const int v = std::stoi(text, &used);
    if (used == text.size() && v >= 0 && v <= kMaxLabel) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(field + ": unknown label '" + text + "'");
}

inline LabelSet parse_label_set(const Json& v, const std::string& field) {
  if (!v.is_array()) throw ConfigError(field + ": expected an array of labels");
  LabelSet out;
  for (const auto& e : v) {
    if (e.is_number_integer()) {
      const auto n = e.get<long long>();
      if (n < 0 || n > kMaxLabel) throw ConfigError(field + ": label " + std::to_string(n) + " outside [0,18]");
      out.insert(static_cast<int>(n));
    } else if (e.is_string()) {
      out.insert(parse_label(e.get<std::string>(), field));
    } else {
      throw ConfigError(field + ": labels are integers or names");
    }
  }
  return out;
}

inline FieldSpec parse_field(const Json& obj, const std::string& key, const std::string& field,
                             const std::filesystem::path& base) {
  const auto& v = obj.at(key);
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) return get_path(obj, key, field, base);
  throw ConfigError(field + ": expected a number or a tensor path");
}

inline GaussianSpec parse_gaussian(const Json& obj, const std::string& where, const std::filesystem::path& base,
                                   bool with_weight) {
  if (with_weight) {
    allow_keys(obj, where, {"weight", "mean", "var"});
  } else {
    allow_keys(obj, where, {"backend", "mean", "var", "components", "endpoint", "timeout_ms"});
  }
  GaussianSpec g;
  if (obj.contains("mean")) g.mean = parse_field(obj, "mean", where + ".mean", base);
  if (obj.contains("var")) g.var = parse_field(obj, "var", where + ".var", base);
  return g;
}

}  // namespace config_detail

/// Parses a configuration document. Relative paths resolve against `base`
/// (the directory holding the config file).
inline RunConfig parse_config(const Json& doc, const std::filesystem::path& base = {}) {
  using namespace config_detail;
  RunConfig cfg;
  allow_keys(doc, "", {"schedule", "guidance", "inputs", "denoiser", "output_dir", "seed", "workers"});

  if (doc.contains("schedule")) {
    const auto& s = doc.at("schedule");
    allow_keys(s, "schedule", {"T", "beta_start", "beta_end"});
    if (s.contains("T")) cfg.schedule.steps = get_count(s, "T", "schedule.T");
    if (s.contains("beta_start")) cfg.schedule.beta_start = get_real(s, "beta_start", "schedule.beta_start");
    if (s.contains("beta_end")) cfg.schedule.beta_end = get_real(s, "beta_end", "schedule.beta_end");
  }

  if (doc.contains("guidance")) {
    const auto& g = doc.at("guidance");
    allow_keys(g, "guidance",
               {"s_w", "s_s", "T1", "N", "dilation_radius", "color_refresh", "yc_source", "color_space",
                "label_strength", "labels", "snapshot_every"});
    auto& gc = cfg.guidance;
    if (g.contains("s_w")) gc.s_w = get_real(g, "s_w", "guidance.s_w");
    if (g.contains("s_s")) gc.s_s = get_real(g, "s_s", "guidance.s_s");
    if (g.contains("T1")) gc.t1 = get_count(g, "T1", "guidance.T1");
    if (g.contains("N")) gc.repeats = get_count(g, "N", "guidance.N");
    if (g.contains("dilation_radius")) gc.dilation_radius = get_count(g, "dilation_radius", "guidance.dilation_radius");
    if (g.contains("color_refresh")) gc.color_refresh = get_count(g, "color_refresh", "guidance.color_refresh");
    if (g.contains("snapshot_every")) cfg.snapshot_every = get_count(g, "snapshot_every", "guidance.snapshot_every");
    if (g.contains("yc_source")) {
      const auto v = get<std::string>(g, "yc_source", "guidance.yc_source");
      if (v == "auto") gc.fidelity_source = FidelitySource::automatic;
      else if (v == "restored") gc.fidelity_source = FidelitySource::restored;
      else if (v == "pseudo") gc.fidelity_source = FidelitySource::pseudo_label;
      else throw ConfigError("guidance.yc_source: expected auto, restored or pseudo");
    }
    if (g.contains("color_space")) {
      const auto v = get<std::string>(g, "color_space", "guidance.color_space");
      if (v == "rgb") gc.color_space = ColorSpace::rgb;
      else if (v == "lab") gc.color_space = ColorSpace::lab;
      else throw ConfigError("guidance.color_space: expected rgb or lab");
    }
    if (g.contains("label_strength")) {
      const auto& ls = g.at("label_strength");
      if (!ls.is_object()) throw ConfigError("guidance.label_strength: expected an object of label -> weight");
      for (const auto& [k, v] : ls.items()) {
        const std::string field = "guidance.label_strength." + k;
        if (!v.is_number()) throw ConfigError(field + ": expected a number");
        gc.label_strength[parse_label(k, field)] = v.get<double>();
      }
    }
    if (g.contains("labels")) {
      const auto& l = g.at("labels");
      allow_keys(l, "guidance.labels", {"guide", "skin", "exclude"});
      if (l.contains("guide")) gc.labels.guide = parse_label_set(l.at("guide"), "guidance.labels.guide");
      if (l.contains("skin")) gc.labels.skin = parse_label_set(l.at("skin"), "guidance.labels.skin");
      if (l.contains("exclude")) gc.labels.exclude = parse_label_set(l.at("exclude"), "guidance.labels.exclude");
    }
  }

  if (doc.contains("inputs")) {
    const auto& in = doc.at("inputs");
    allow_keys(in, "inputs", {"lq", "restored", "mask", "parsing", "pseudo_label"});
    if (in.contains("lq")) cfg.inputs.lq = get_path(in, "lq", "inputs.lq", base);
    if (in.contains("restored")) cfg.inputs.restored = get_path(in, "restored", "inputs.restored", base);
    if (in.contains("mask")) cfg.inputs.mask = get_path(in, "mask", "inputs.mask", base);
    if (in.contains("parsing")) cfg.inputs.parsing = get_path(in, "parsing", "inputs.parsing", base);
    if (in.contains("pseudo_label")) cfg.inputs.pseudo_label = get_path(in, "pseudo_label", "inputs.pseudo_label", base);
  }

  if (doc.contains("denoiser")) {
    const auto& d = doc.at("denoiser");
    auto& dc = cfg.denoiser;
    dc.gaussian = parse_gaussian(d, "denoiser", base, false);
    if (d.contains("backend")) {
      const auto v = get<std::string>(d, "backend", "denoiser.backend");
      if (v == "gaussian") dc.backend = DenoiserConfig::Backend::gaussian;
      else if (v == "gmm") dc.backend = DenoiserConfig::Backend::gmm;
      else if (v == "remote") dc.backend = DenoiserConfig::Backend::remote;
      else throw ConfigError("denoiser.backend: expected gaussian, gmm or remote");
    }
    if (d.contains("components")) {
      const auto& cs = d.at("components");
      if (!cs.is_array()) throw ConfigError("denoiser.components: expected an array");
      for (std::size_t k = 0; k < cs.size(); ++k) {
        const std::string where = "denoiser.components[" + std::to_string(k) + "]";
        auto spec = parse_gaussian(cs[k], where, base, true);
        const double w = cs[k].contains("weight") ? get_real(cs[k], "weight", where + ".weight") : 1.0;
        dc.components.emplace_back(w, std::move(spec));
      }
    }
    if (d.contains("endpoint")) dc.endpoint = get<std::string>(d, "endpoint", "denoiser.endpoint");
    if (d.contains("timeout_ms")) dc.timeout = std::chrono::milliseconds(get_count(d, "timeout_ms", "denoiser.timeout_ms"));
  }

  if (doc.contains("output_dir")) cfg.output_dir = get_path(doc, "output_dir", "output_dir", base);
  if (doc.contains("seed")) cfg.guidance.seed = get_count(doc, "seed", "seed");
  if (doc.contains("workers")) cfg.workers = get_count(doc, "workers", "workers");
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_config(doc, path.parent_path());
}

/// Which inputs a command needs.
struct Requirements {
  bool scratch_inputs = true;  // mask and parsing map
};

/// Total validation: every field, every referenced path, the backend
/// parameters. Throws ConfigError naming the first offending field.
inline void validate(const RunConfig& cfg, const Requirements& req = {}) {
  namespace fs = std::filesystem;
  if (cfg.schedule.steps < 1) throw ConfigError("schedule.T must be at least 1");
  try {
    (void)cfg.schedule.build();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("schedule: ") + e.what());
  }
  cfg.guidance.validate(cfg.schedule.steps);
  if (cfg.workers < 1) throw ConfigError("workers must be at least 1");

  const auto need_file = [](const fs::path& p, const std::string& field) {
    if (p.empty()) throw ConfigError(field + " is required");
    if (!fs::is_regular_file(p)) throw ConfigError(field + ": file not found: " + p.string());
  };
  need_file(cfg.inputs.lq, "inputs.lq");
  if (req.scratch_inputs) {
    need_file(cfg.inputs.mask, "inputs.mask");
    need_file(cfg.inputs.parsing, "inputs.parsing");
  }
  if (cfg.inputs.restored) need_file(*cfg.inputs.restored, "inputs.restored");
  if (cfg.inputs.pseudo_label) need_file(*cfg.inputs.pseudo_label, "inputs.pseudo_label");
  if (cfg.guidance.fidelity_source == FidelitySource::restored && !cfg.inputs.restored) {
    throw ConfigError("guidance.yc_source: 'restored' needs inputs.restored");
  }

  const auto check_field = [&](const FieldSpec& f, const std::string& field, bool variance) {
    if (const auto* p = std::get_if<fs::path>(&f)) {
      need_file(*p, field);
    } else {
      const double v = std::get<double>(f);
      if (!std::isfinite(v) || (variance && v < 0.0)) throw ConfigError(field + ": must be finite" + (variance ? " and >= 0" : ""));
    }
  };
  const auto& d = cfg.denoiser;
  switch (d.backend) {
    case DenoiserConfig::Backend::gaussian:
      check_field(d.gaussian.mean, "denoiser.mean", false);
      check_field(d.gaussian.var, "denoiser.var", true);
      break;
    case DenoiserConfig::Backend::gmm: {
      if (d.components.empty()) throw ConfigError("denoiser.components: the gmm backend needs at least one component");
      double total = 0.0;
      for (std::size_t k = 0; k < d.components.size(); ++k) {
        const std::string where = "denoiser.components[" + std::to_string(k) + "]";
        if (!(d.components[k].first > 0.0)) throw ConfigError(where + ".weight: must be positive");
        total += d.components[k].first;
        check_field(d.components[k].second.mean, where + ".mean", false);
        check_field(d.components[k].second.var, where + ".var", true);
      }
      if (std::abs(total - 1.0) > 1e-9) throw ConfigError("denoiser.components: weights must sum to 1");
      break;
    }
    case DenoiserConfig::Backend::remote:
      if (d.endpoint.empty()) throw ConfigError("denoiser.endpoint is required for the remote backend");
      (void)Endpoint::parse(d.endpoint);
      if (d.timeout.count() <= 0) throw ConfigError("denoiser.timeout_ms must be positive");
      break;
  }
  if (cfg.output_dir.empty()) throw ConfigError("output_dir is required");
}

namespace config_detail {

inline ImageTensor materialize(const FieldSpec& f, const Shape& shape, const std::string& field) {
  if (const auto* v = std::get_if<double>(&f)) return ImageTensor(shape, *v);
  auto t = load_any_image(std::get<std::filesystem::path>(f));
  if (t.shape() != shape) {
    throw ConfigError(field + ": tensor shape " + to_string(t.shape()) + " does not match the input " + to_string(shape));
  }
  return t;
}

}  // namespace config_detail

/// Builds a factory producing one independent denoiser per call (remote
/// backends open a fresh connection each time).
inline DenoiserFactory make_denoiser_factory(const RunConfig& cfg, const Shape& shape) {
  const auto sched = cfg.schedule.build();
  const auto& d = cfg.denoiser;
  switch (d.backend) {
    case DenoiserConfig::Backend::gaussian: {
      DiagonalGaussianModel m{config_detail::materialize(d.gaussian.mean, shape, "denoiser.mean"),
                              config_detail::materialize(d.gaussian.var, shape, "denoiser.var")};
      m.validate();
      return [m, sched]() -> std::unique_ptr<Denoiser> { return std::make_unique<GaussianDenoiser>(m, sched); };
    }
    case DenoiserConfig::Backend::gmm: {
      GaussianMixtureModel gmm;
      for (std::size_t k = 0; k < d.components.size(); ++k) {
        const std::string where = "denoiser.components[" + std::to_string(k) + "]";
        const auto& [w, spec] = d.components[k];
        gmm.components.push_back({w, {config_detail::materialize(spec.mean, shape, where + ".mean"),
                                      config_detail::materialize(spec.var, shape, where + ".var")}});
      }
      gmm.validate();
      return [gmm, sched]() -> std::unique_ptr<Denoiser> { return std::make_unique<GmmDenoiser>(gmm, sched); };
    }
    case DenoiserConfig::Backend::remote: {
      const auto ep = Endpoint::parse(d.endpoint);
      const auto timeout = d.timeout;
      return [ep, timeout]() -> std::unique_ptr<Denoiser> { return RemoteDenoiser::connect(ep, timeout); };
    }
  }
  throw ConfigError("denoiser.backend: unsupported");
}

/// Echo of the effective configuration, written into trace headers.
inline std::vector<std::pair<std::string, std::string>> config_echo(const RunConfig& cfg) {
  const auto& g = cfg.guidance;
  const auto sched = cfg.schedule.build();
  std::vector<std::pair<std::string, std::string>> meta = {
      {"T", std::to_string(cfg.schedule.steps)},
      {"beta_start", Table::num(sched.beta(1))},
      {"beta_end", Table::num(sched.beta(sched.steps()))},
      {"s_w", Table::num(g.s_w)},
      {"s_s", Table::num(g.s_s)},
      {"T1", std::to_string(g.resolved_t1(cfg.schedule.steps))},
      {"N", std::to_string(g.repeats)},
      {"color_refresh", std::to_string(g.color_refresh)},
      {"yc_source", std::string(to_string(g.fidelity_source))},
      {"color_space", std::string(to_string(g.color_space))},
      {"backend", std::string(to_string(cfg.denoiser.backend))},
      {"seed", std::to_string(g.seed)},
  };
  std::string ls;
  for (const auto& [label, w] : g.label_strength) {
    if (!ls.empty()) ls += ',';
    ls += std::string(kLabelNames[static_cast<std::size_t>(label)]) + ':' + Table::num(w);
  }
  meta.emplace_back("label_strength", ls.empty() ? "none" : ls);
  return meta;
}

}  // namespace ssdiff
