#include <gtest/gtest.h>
#include <sys/wait.h>

#include <fstream>
#include <sstream>

#include "ssdiff/checks.hpp"
#include "ssdiff/commands.hpp"
#include "test_util.hpp"

using namespace ssdiff;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

struct Run {
  int code = -1;
  std::string out, err;
};

Run cli(const testutil::TempDir& dir, const std::string& args) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string("'") + SSDIFF_CLI_PATH + "' " + args + " >'" + out.string() + "' 2>'" +
                          err.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

/// A 16x16 color input with mask and parsing map, written as PNGs.
void write_inputs(const fs::path& dir, std::uint64_t seed = 1) {
  fs::create_directories(dir);
  const auto g = checks::gating_scene(seed);
  save_png(g.inputs.y0, dir / "lq.png");
  save_mask(g.inputs.scratch, dir / "mask.png");
  save_parsing(g.inputs.parsing, dir / "parsing.png");
}

std::string input_flags(const fs::path& dir) {
  return "--lq '" + (dir / "lq.png").string() + "' --mask '" + (dir / "mask.png").string() + "' --parsing '" +
         (dir / "parsing.png").string() + "'";
}

}  // namespace

TEST(Config, Defaults) {
  const auto cfg = parse_config(Json::object());
  EXPECT_EQ(cfg.schedule.steps, 1000u);
  EXPECT_EQ(cfg.guidance.resolved_t1(cfg.schedule.steps), 400u);
  EXPECT_EQ(cfg.guidance.s_w, 1e-3);
  EXPECT_EQ(cfg.guidance.s_s, 3.5e-3);
  EXPECT_EQ(cfg.guidance.repeats, 1u);
  EXPECT_EQ(cfg.guidance.color_refresh, 0u);
  EXPECT_EQ(cfg.denoiser.backend, DenoiserConfig::Backend::gaussian);
  EXPECT_EQ(cfg.workers, 1u);
}

TEST(Config, UnknownKeysNameTheField) {
  const auto message = [](const Json& doc) {
    try {
      parse_config(doc);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message({{"guidance", {{"s_x", 1.0}}}}).find("guidance.s_x"), std::string::npos);
  EXPECT_NE(message({{"bogus", 1}}).find("bogus"), std::string::npos);
  EXPECT_NE(message({{"guidance", {{"labels", {{"hat", {"skin"}}}}}}}).find("guidance.labels.hat"), std::string::npos);
  EXPECT_NE(message({{"guidance", {{"s_w", "big"}}}}).find("guidance.s_w"), std::string::npos);
  EXPECT_NE(message({{"guidance", {{"yc_source", "best"}}}}).find("guidance.yc_source"), std::string::npos);
  EXPECT_NE(message({{"guidance", {{"label_strength", {{"ears", 2.0}}}}}}).find("ears"), std::string::npos);
}

TEST(Config, FullDocument) {
  const Json doc = Json::parse(R"({
    "schedule": {"T": 200, "beta_start": 0.001, "beta_end": 0.05},
    "guidance": {"s_w": 0.002, "s_s": 0.01, "T1": 80, "N": 2, "dilation_radius": 1, "color_refresh": 10,
                 "yc_source": "pseudo", "color_space": "lab", "snapshot_every": 50,
                 "label_strength": {"skin": 2.0, "12": 0.5},
                 "labels": {"guide": ["skin", "nose"], "skin": [1], "exclude": ["hair"]}},
    "inputs": {"lq": "a/lq.png", "mask": "/abs/mask.png", "parsing": "p.png"},
    "denoiser": {"backend": "gmm", "components": [{"weight": 0.25, "mean": 0.1, "var": 0.5},
                                                   {"weight": 0.75, "mean": "m.ssdt", "var": 0.2}]},
    "output_dir": "out", "seed": 17, "workers": 3
  })");
  const auto cfg = parse_config(doc, "/base");
  EXPECT_EQ(cfg.schedule.steps, 200u);
  EXPECT_EQ(*cfg.schedule.beta_end, 0.05);
  EXPECT_EQ(cfg.guidance.resolved_t1(200), 80u);
  EXPECT_EQ(cfg.guidance.repeats, 2u);
  EXPECT_EQ(cfg.guidance.fidelity_source, FidelitySource::pseudo_label);
  EXPECT_EQ(cfg.guidance.color_space, ColorSpace::lab);
  EXPECT_EQ(cfg.snapshot_every, 50u);
  EXPECT_EQ(cfg.guidance.label_strength.at(1), 2.0);
  EXPECT_EQ(cfg.guidance.label_strength.at(12), 0.5);
  EXPECT_EQ(cfg.guidance.labels.guide, (LabelSet{1, 10}));
  EXPECT_EQ(cfg.guidance.labels.exclude, (LabelSet{17}));
  EXPECT_EQ(cfg.inputs.lq, fs::path("/base/a/lq.png"));
  EXPECT_EQ(cfg.inputs.mask, fs::path("/abs/mask.png"));
  EXPECT_EQ(cfg.output_dir, fs::path("/base/out"));
  ASSERT_EQ(cfg.denoiser.components.size(), 2u);
  EXPECT_EQ(cfg.denoiser.components[1].first, 0.75);
  EXPECT_EQ(std::get<fs::path>(cfg.denoiser.components[1].second.mean), fs::path("/base/m.ssdt"));
  EXPECT_EQ(cfg.guidance.seed, 17u);
  EXPECT_EQ(cfg.workers, 3u);

  const auto echo = config_echo(cfg);
  const auto find = [&](const std::string& k) {
    for (const auto& [key, v] : echo) {
      if (key == k) return v;
    }
    return std::string("missing");
  };
  EXPECT_EQ(find("T"), "200");
  EXPECT_EQ(find("label_strength"), "skin:2,u_lip:0.5");
  EXPECT_EQ(find("backend"), "gmm");
}

TEST(Config, ValidationIsTotal) {
  testutil::TempDir dir;
  write_inputs(dir.path());
  auto cfg = parse_config(Json::object());
  cfg.inputs = {dir / "lq.png", std::nullopt, dir / "mask.png", dir / "parsing.png", std::nullopt};
  EXPECT_NO_THROW(validate(cfg));

  const auto fails = [&](RunConfig c, const std::string& needle) {
    try {
      validate(c);
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
      return;
    }
    ADD_FAILURE() << "no error for " << needle;
  };
  auto c = cfg;
  c.inputs.mask = dir / "absent.png";
  fails(c, "inputs.mask");
  EXPECT_NO_THROW(validate(c, {false}));
  c = cfg;
  c.guidance.t1 = 1001;
  fails(c, "T1");
  c = cfg;
  c.schedule.beta_end = 1.5;
  fails(c, "schedule");
  c = cfg;
  c.guidance.fidelity_source = FidelitySource::restored;
  fails(c, "inputs.restored");
  c = cfg;
  c.denoiser.backend = DenoiserConfig::Backend::gmm;
  fails(c, "denoiser.components");
  c.denoiser.components = {{0.5, {}}, {0.4, {}}};
  fails(c, "sum to 1");
  c = cfg;
  c.denoiser.backend = DenoiserConfig::Backend::remote;
  fails(c, "denoiser.endpoint");
  c.denoiser.endpoint = "udp://x";
  fails(c, "denoiser.endpoint");
  c = cfg;
  c.denoiser.gaussian.var = -1.0;
  fails(c, "denoiser.var");
  c = cfg;
  c.workers = 0;
  fails(c, "workers");
}

TEST(Config, FactoryBuildsConfiguredBackend) {
  auto cfg = parse_config({{"schedule", {{"T", 10}}}, {"denoiser", {{"mean", 0.2}, {"var", 0.4}}}});
  const Shape shape{1, 2, 2};
  auto den = make_denoiser_factory(cfg, shape)();
  const auto sched = cfg.schedule.build();
  const ImageTensor x(shape, 0.3);
  const DiagonalGaussianModel m{ImageTensor(shape, 0.2), ImageTensor(shape, 0.4)};
  EXPECT_EQ(testutil::values(den->predict_eps(x, 5)), testutil::values(gaussian_predict_eps(m, x, 5, sched)));
}

TEST(Cli, ExitCodes) {
  testutil::TempDir dir;
  write_inputs(dir.path());
  EXPECT_EQ(cli(dir, "--help").code, 0);
  EXPECT_EQ(cli(dir, "").code, 1);
  EXPECT_EQ(cli(dir, "restore --s-s notanumber").code, 1);

  // Missing mask is caught by validation before any sampling.
  const auto missing = cli(dir, "restore --lq '" + (dir / "lq.png").string() + "' --parsing '" +
                                    (dir / "parsing.png").string() + "' -o '" + (dir / "o").string() + "'");
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("inputs.mask"), std::string::npos) << missing.err;
  EXPECT_FALSE(fs::exists(dir / "o"));

  spit(dir / "bad.json", "{\"guidance\": {\"s_x\": 1}}");
  const auto unknown = cli(dir, "restore -c '" + (dir / "bad.json").string() + "'");
  EXPECT_EQ(unknown.code, 1);
  EXPECT_NE(unknown.err.find("guidance.s_x"), std::string::npos) << unknown.err;

  EXPECT_EQ(cli(dir, "restore -c '" + (dir / "absent.json").string() + "'").code, 2);
  spit(dir / "junk.png", "this is not a png");
  const auto junk = cli(dir, "restore --steps 5 --lq '" + (dir / "junk.png").string() + "' --mask '" +
                                 (dir / "mask.png").string() + "' --parsing '" + (dir / "parsing.png").string() +
                                 "' -o '" + (dir / "j").string() + "'");
  EXPECT_EQ(junk.code, 2) << junk.err;

  const auto remote = cli(dir, "restore --steps 5 " + input_flags(dir.path()) +
                                   " --backend remote --endpoint 'exec:exec " + SSDIFF_FAKE_SERVER_PATH +
                                   " error' -o '" + (dir / "r").string() + "'");
  EXPECT_EQ(remote.code, 3) << remote.err;
  EXPECT_NE(remote.err.find("model exploded"), std::string::npos) << remote.err;
}

TEST(Cli, SelftestCatchesInjectedFault) {
  testutil::TempDir dir;
  const auto r = cli(dir, "selftest --inject-fault l1-sign");
  EXPECT_EQ(r.code, 5) << r.out << r.err;
  EXPECT_NE(r.out.find("FAIL  gradient correctness"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("selftest FAILED"), std::string::npos) << r.out;
}

TEST(Cli, RestoreWritesArtifacts) {
  testutil::TempDir dir;
  write_inputs(dir.path());
  const auto out = dir / "run";
  const auto r = cli(dir, "restore --steps 20 --seed 3 --snapshot-every 10 --label-strength skin=2 " +
                              input_flags(dir.path()) + " -o '" + out.string() + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"restored.png", "restored.ssdt", "pseudo_label.png", "pseudo_label.ssdt", "trace.txt",
                        "pseudo_trace.txt", "metrics.txt", "snapshots/x0_t0010.ssdt", "snapshots/x0_t0020.ssdt"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  std::ifstream in(out / "trace.txt");
  const auto trace = Table::parse(in);
  EXPECT_EQ(trace.title, "ssdiff trace v1");
  EXPECT_EQ(trace.columns, trace_columns());
  EXPECT_EQ(trace.rows.size(), 20u);
  EXPECT_EQ(trace.meta_value("label_strength"), "skin:2");
  EXPECT_EQ(trace.meta_value("T1"), "8");
  EXPECT_EQ(trace.meta_value("seed"), "3");
  EXPECT_EQ(load_tensor(out / "restored.ssdt").shape(), (Shape{3, 16, 16}));
}

TEST(Cli, PseudoLabelWithoutGuidanceIsAncestral) {
  testutil::TempDir dir;
  write_inputs(dir.path());
  const auto r = cli(dir, "pseudo-label --steps 15 --s-w 0 --seed 8 --mean 0.1 --var 0.3 " + input_flags(dir.path()) +
                              " -o '" + (dir / "pl").string() + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto y = load_tensor(dir / "pl" / "pseudo_label.ssdt");
  const auto sched = make_default_schedule(15);
  GaussianDenoiser den({ImageTensor(y.shape(), 0.1), ImageTensor(y.shape(), 0.3)}, sched);
  NoiseStream ns(8, stream_id::pseudo_label);
  const auto ref = ancestral_sample(den, sched, y.shape(), ns);
  for (std::size_t k = 0; k < y.size(); ++k) EXPECT_EQ(y[k], static_cast<float>(ref[k]));
  EXPECT_TRUE(fs::exists(dir / "pl" / "pseudo_trace.txt"));
  EXPECT_TRUE(fs::exists(dir / "pl" / "metrics.txt"));
}

TEST(Cli, BatchAndSweep) {
  testutil::TempDir dir;
  write_inputs(dir / "batch" / "b", 2);
  write_inputs(dir / "batch" / "a", 3);
  const auto r = cli(dir, "restore --steps 10 --workers 2 --batch '" + (dir / "batch").string() + "' -o '" +
                              (dir / "out").string() + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "out" / "a" / "restored.ssdt"));
  EXPECT_TRUE(fs::exists(dir / "out" / "b" / "restored.ssdt"));
  std::ifstream agg(dir / "out" / "metrics.txt");
  const auto tab = Table::parse(agg);
  ASSERT_EQ(tab.rows.size(), 2u);
  EXPECT_EQ(tab.rows[0][0], "a");

  const auto s = cli(dir, "sweep --steps 10 --grid-s-s 0,0.1 --grid-t1 2,5 --batch '" + (dir / "batch").string() +
                              "' -o '" + (dir / "sw").string() + "'");
  ASSERT_EQ(s.code, 0) << s.err;
  std::ifstream sw(dir / "sw" / "sweep.txt");
  const auto sweep = Table::parse(sw);
  EXPECT_EQ(sweep.title, "ssdiff sweep v1");
  EXPECT_EQ(sweep.rows.size(), 8u);
  EXPECT_EQ(sweep.meta_value("T"), "10");
}

TEST(Cli, Metrics) {
  testutil::TempDir dir;
  write_inputs(dir.path());
  const auto empty = cli(dir, "metrics");
  ASSERT_EQ(empty.code, 0) << empty.err;
  std::istringstream es(empty.out);
  const auto e = Table::parse(es);
  EXPECT_EQ(e.title, "ssdiff metrics v1");
  EXPECT_EQ(e.columns, (std::vector<std::string>{"input", "contour_iou", "feature_iou", "saturation_distance",
                                                 "edge_variation", "mse", "psnr"}));
  EXPECT_TRUE(e.rows.empty());

  const auto img = (dir / "lq.png").string(), par = (dir / "parsing.png").string();
  const auto same = cli(dir, "metrics " + img + "," + par + "," + img + "," + par + " " + img + "," + par);
  ASSERT_EQ(same.code, 0) << same.err;
  std::istringstream ss(same.out);
  const auto t = Table::parse(ss);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0][1], "1");
  EXPECT_EQ(t.rows[0][2], "1");
  EXPECT_EQ(t.rows[0][3], "0");
  EXPECT_EQ(t.rows[0][5], "0");
  EXPECT_EQ(t.rows[0][6], "inf");
  EXPECT_EQ(t.rows[1][1], "nan");

  EXPECT_EQ(cli(dir, "metrics " + img).code, 1);
}
