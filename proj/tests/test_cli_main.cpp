// Exercises the installed command-line surface end to end: determinism of
// generated files, CSV outputs, exit codes.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
  if (ok) {
    std::printf("[ok]   %s\n", what.c_str());
  } else {
    std::printf("[FAIL] %s\n", what.c_str());
    ++failures;
  }
}

int run(const std::string& cmd) {
  const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream f(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) ++n;
  return n;
}

}  // namespace

int main() {
  const std::string cli = SUBVOX_CLI_PATH;
  const fs::path work = fs::temp_directory_path() / "subvox_cli_work";
  fs::remove_all(work);
  fs::create_directories(work);

  check(run(cli) == 2, "no arguments exits 2 with usage");
  check(run(cli + " --help") == 0, "--help exits 0");
  check(run(cli + " gen --kind frog --n-models 1 --out " + (work / "x").string()) == 2,
        "bad flag value exits 2");
  check(run(cli + " predict --model missing.bin --in nowhere --out x.csv") == 1,
        "runtime failure exits 1");

  const std::string gen_base = " gen --kind vessel --n-models 10 --replicas 25 --seed 7 --out ";
  check(run(cli + gen_base + (work / "d1").string()) == 0, "gen runs");
  check(run(cli + gen_base + (work / "d2").string() + " --threads 1") == 0, "gen runs again");
  check(fs::exists(work / "d1" / "patches.f32"), "patch blob written");
  check(fs::exists(work / "d1" / "dataset.json"), "sidecar written");
  check(fs::exists(work / "d1" / "resolved_config.ini"), "resolved config echoed");
  check(fs::file_size(work / "d1" / "patches.f32") == 10 * 25 * 32 * 32 * 4,
        "250 patches in the blob");
  check(slurp(work / "d1" / "patches.f32") == slurp(work / "d2" / "patches.f32"),
        "same seed, different worker count: byte-identical patches");
  check(slurp(work / "d1" / "dataset.json") == slurp(work / "d2" / "dataset.json"),
        "byte-identical sidecar");

  check(run(cli + " measure --method fwhm --in " + (work / "d1").string() + " --out " +
            (work / "fwhm.csv").string()) == 0,
        "measure runs");
  check(count_lines(work / "fwhm.csv") == 251, "measure CSV: header + one row per patch");

  // a tiny airway set and a slim training run through the CLI
  check(run(cli + " gen --kind airway --n-models 8 --replicas 4 --seed 3 --out " +
            (work / "a1").string()) == 0,
        "airway gen runs");
  check(run(cli + " train --data " + (work / "a1").string() + " --epochs 1 --groups-per-batch 2" +
            " --seed 5 --out " + (work / "model.bin").string()) == 0,
        "train runs one epoch");
  check(fs::exists(work / "model.bin"), "checkpoint written");
  check(fs::exists(work / "model.log.csv"), "training log written");
  check(run(cli + " predict --model " + (work / "model.bin").string() + " --in " +
            (work / "a1").string() + " --out " + (work / "preds.csv").string()) == 0,
        "predict runs");
  check(count_lines(work / "preds.csv") == 33, "predict CSV: header + 32 rows");
  check(run(cli + " eval --model " + (work / "model.bin").string() + " --data " +
            (work / "a1").string() + " --out " + (work / "table.csv").string()) == 0,
        "eval runs");
  check(count_lines(work / "table.csv") == 10, "eval CSV: header + 3 methods x 3 bins");

  check(run(cli + " sweep --variable psf --kind vessel --measurer fwhm --reps 5 --out " +
            (work / "sweep.csv").string()) == 0,
        "sweep runs");
  check(count_lines(work / "sweep.csv") == 7, "sweep CSV: header + 6 levels");
  check(run(cli + " sweep --variable noise --kind vessel --measurer cnr --out x.csv") == 2,
        "cnr sweep without model is a usage error");

  {
    std::ofstream cfg(work / "gen.ini");
    cfg << "[gen]\nkind=vessel\nn-models=4\nreplicas=3\nseed=11\nout=" << (work / "cfg_out").string()
        << "\n";
  }
  check(run(cli + " --config " + (work / "gen.ini").string() + " gen") == 0,
        "config file supplies subcommand options");
  check(fs::file_size(work / "cfg_out" / "patches.f32") == 4 * 3 * 32 * 32 * 4,
        "config values applied");
  check(run(cli + " --config " + (work / "gen.ini").string() + " gen --replicas 2 --out " +
            (work / "cfg_out2").string()) == 0,
        "flags override config");
  check(fs::file_size(work / "cfg_out2" / "patches.f32") == 4 * 2 * 32 * 32 * 4,
        "flag value wins over config value");
  {
    std::ofstream cfg(work / "bad.ini");
    cfg << "[gen]\nkind=vessel\nn-models=4\nout=x\nfrobnicate=1\n";
  }
  check(run(cli + " --config " + (work / "bad.ini").string() + " gen") == 2,
        "unknown config keys are rejected");

  check(run(cli + " repro --scale smoke --out " + (work / "repro").string()) == 0,
        "smoke-scale repro pipeline runs end to end");
  check(fs::exists(work / "repro" / "vessel_comparison.csv"), "repro comparison table");
  check(fs::exists(work / "repro" / "airway_comparison.csv"), "repro airway table");
  check(fs::exists(work / "repro" / "sweep_noise_vessel.csv"), "repro noise sweep");

  fs::remove_all(work);
  if (failures == 0) std::printf("cli: all checks passed\n");
  return failures == 0 ? 0 : 1;
}
