// Runs every acceptance criterion once and prints one PASS/FAIL line each.
// Exit status is the number of failing criteria (0 when all pass).
//
//   acceptance [--only SUBSTRING]

#include <sys/wait.h>

#include <cstdlib>
#include <cstring>
#include <functional>
#include <iostream>

#include "ssdiff/checks.hpp"
#include "ssdiff/io.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using ssdiff::checks::CheckResult;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string("'") + SSDIFF_CLI_PATH + "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

/// Two full-length CLI restores with the same config and seed must write
/// byte-identical tensors and traces.
CheckResult check_determinism() {
  ssdiff::checks::detail::Stopwatch sw;
  testutil::TempDir dir;
  const auto g = ssdiff::checks::gating_scene(41);
  ssdiff::save_tensor(g.inputs.y0, dir / "lq.ssdt");
  ssdiff::save_mask(g.inputs.scratch, dir / "mask.png");
  ssdiff::save_parsing(g.inputs.parsing, dir / "parsing.png");
  const std::string common = "restore --seed 12 --mean 0.05 --var 0.2 --lq '" + (dir / "lq.ssdt").string() +
                             "' --mask '" + (dir / "mask.png").string() + "' --parsing '" +
                             (dir / "parsing.png").string() + "' -o ";
  const int a = run_cli(common + "'" + (dir / "a").string() + "'");
  const int b = run_cli(common + "'" + (dir / "b").string() + "'");
  bool same = a == 0 && b == 0;
  std::string detail = "exit codes " + std::to_string(a) + "/" + std::to_string(b);
  for (const char* f : {"restored.ssdt", "pseudo_label.ssdt", "trace.txt", "pseudo_trace.txt"}) {
    if (!same) break;
    if (ssdiff::detail::read_all(dir / "a" / f) != ssdiff::detail::read_all(dir / "b" / f)) {
      same = false;
      detail += ", " + std::string(f) + " differs";
    }
  }
  if (same) detail += ", restored.ssdt/pseudo_label.ssdt/trace.txt/pseudo_trace.txt identical";
  return ssdiff::checks::detail::finish("determinism (two CLI restores, same seed)", same, detail, sw, 0.0);
}

}  // namespace

int main(int argc, char** argv) {
  std::string only;
  if (argc == 3 && std::strcmp(argv[1], "--only") == 0) {
    only = argv[2];
  } else if (argc != 1) {
    std::cerr << "usage: acceptance [--only SUBSTRING]\n";
    return 64;
  }

  namespace ck = ssdiff::checks;
  const std::vector<std::pair<std::string, std::function<CheckResult()>>> criteria = {
      {"gradients", [] { return ck::check_gradients(); }},
      {"oracles", [] { return ck::check_operator_oracles(); }},
      {"soundness", [] { return ck::check_sampler_soundness(); }},
      {"convergence", [] { return ck::check_strong_guidance_convergence(); }},
      {"ordering", [] { return ck::check_fidelity_ordering(); }},
      {"gating", [] { return ck::check_stage_gating(); }},
      {"masks", [] { return ck::check_mask_safety(); }},
      {"smoothing", [] { return ck::check_breakage_smoothing(); }},
      {"color", [] { return ck::check_color_transfer(); }},
      {"determinism", check_determinism},
  };

  int failed = 0, ran = 0;
  for (const auto& [key, run] : criteria) {
    if (!only.empty() && key.find(only) == std::string::npos) continue;
    CheckResult r;
    try {
      r = run();
    } catch (const std::exception& e) {
      r = {key, false, std::string("threw: ") + e.what(), 0.0};
    }
    ++ran;
    if (!r.passed) ++failed;
    std::printf("%s  %-12s %s  (%s; %.1f s)\n", r.passed ? "PASS" : "FAIL", key.c_str(), r.name.c_str(),
                r.detail.c_str(), r.seconds);
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed;
}
