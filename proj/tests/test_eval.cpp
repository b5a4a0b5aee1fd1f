#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "subvox/eval.hpp"

#include "support/oracles.hpp"

using namespace subvox;

TEST_SUITE("eval") {

TEST_CASE("relative error basics") {
  CHECK(relative_error_pct(2.0, 2.0) == 0.0);
  CHECK(relative_error_pct(2.0, 1.0) == doctest::Approx(-50.0));
  CHECK(relative_error_pct(0.5, 0.565) == doctest::Approx(13.0).epsilon(1e-9));
  CHECK_THROWS_AS(relative_error_pct(0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(relative_error_pct(-1.0, 1.0), std::invalid_argument);
}

TEST_CASE("every positive size falls in exactly one bin") {
  const SizeBins bins;
  CHECK(bins.n_bins() == 3);
  CHECK(bins.bin_of(0.7) == 0);
  CHECK(bins.bin_of(std::nextafter(0.7, 1.0)) == 1);
  CHECK(bins.bin_of(1.5) == 1);
  CHECK(bins.bin_of(std::nextafter(1.5, 2.0)) == 2);
  CHECK(bins.bin_of(1e9) == 2);
  Rng rng(2);
  for (int i = 0; i < 10000; ++i) {
    const double v = std::exp(rng.uniform(-4.0, 4.0));
    const int b = bins.bin_of(v);
    CHECK(b >= 0);
    CHECK(b < bins.n_bins());
    // membership in the chosen interval and no other
    const double lo = b == 0 ? 0.0 : bins.edges[static_cast<std::size_t>(b - 1)];
    const double hi = b == bins.n_bins() - 1 ? std::numeric_limits<double>::infinity()
                                             : bins.edges[static_cast<std::size_t>(b)];
    CHECK(v > lo);
    CHECK(v <= hi);
  }
  CHECK_THROWS_AS(bins.bin_of(0.0), std::invalid_argument);
}

TEST_CASE("grouped table statistics") {
  // all-exact estimates: zero means and spreads
  std::vector<double> truths{0.5, 1.0, 2.0, 3.0};
  std::vector<std::optional<double>> exact{0.5, 1.0, 2.0, 3.0};
  const GroupedErrorTable t0 = grouped_table(truths, exact);
  for (const BinStats& b : t0.bins) {
    CHECK(b.mean_re_pct == 0.0);
    CHECK(b.std_re_pct == 0.0);
    CHECK(b.n_failed == 0);
  }
  CHECK(t0.total_n == 4);

  // single bin, errors {+10%, -10%}: mean 0, population std 10
  std::vector<double> tr{2.0, 2.0};
  std::vector<std::optional<double>> est{2.2, 1.8};
  const GroupedErrorTable t1 = grouped_table(tr, est);
  const BinStats& big = t1.bins[2];
  CHECK(big.n == 2);
  CHECK(big.mean_re_pct == doctest::Approx(0.0));
  CHECK(big.std_re_pct == doctest::Approx(10.0));
  CHECK(big.mean_abs_re_pct == doctest::Approx(10.0));

  // failures are counted per bin and excluded from the moments
  std::vector<double> tr2{0.5, 0.6, 2.0};
  std::vector<std::optional<double>> est2{std::nullopt, 0.6, 2.2};
  const GroupedErrorTable t2 = grouped_table(tr2, est2);
  CHECK(t2.bins[0].n == 1);
  CHECK(t2.bins[0].n_failed == 1);
  CHECK(t2.total_failed == 1);
  CHECK(t2.bins[0].mean_re_pct == doctest::Approx(0.0));
}

TEST_CASE("welford moments agree with a two-pass reference") {
  Rng rng(6);
  std::vector<double> truths;
  std::vector<std::optional<double>> est;
  std::vector<double> re;
  for (int i = 0; i < 500; ++i) {
    const double t = rng.uniform(1.6, 6.0);  // single bin
    const double e = t * (1.0 + rng.normal(0.0, 0.1));
    truths.push_back(t);
    est.push_back(e);
    re.push_back(100.0 * (e - t) / t);
  }
  const GroupedErrorTable table = grouped_table(truths, est);
  const BinStats& b = table.bins[2];
  CHECK(std::abs(b.mean_re_pct - oracles::two_pass_mean(re)) < 1e-10);
  CHECK(std::abs(b.std_re_pct - std::sqrt(oracles::two_pass_population_variance(re))) < 1e-10);
}

TEST_CASE("sweep: level counts, repetitions, determinism") {
  SweepConfig cfg;
  cfg.variable = SweepVariable::psf;
  cfg.kind = StructureKind::vessel;
  cfg.lumen_mm = 2.0;
  cfg.reps = 12;
  cfg.seed = 4;
  const SweepResult res = sweep(cfg, "fwhm", make_fwhm_measurer());
  CHECK(res.levels.size() == 6);  // 0.4 .. 0.9 in steps of 0.1
  for (const SweepLevelStats& s : res.levels) {
    CHECK(s.n == 12);
    CHECK(s.n_valid <= s.n);
  }
  const SweepResult res2 = sweep(cfg, "fwhm", make_fwhm_measurer());
  for (std::size_t i = 0; i < res.levels.size(); ++i) {
    CHECK(res.levels[i].mean_re_pct == res2.levels[i].mean_re_pct);
    CHECK(res.levels[i].std_re_pct == res2.levels[i].std_re_pct);
  }
  SweepConfig single;
  single.levels = {1.0};
  CHECK_THROWS_AS(sweep(single, "x", make_fwhm_measurer()), std::invalid_argument);
}

TEST_CASE("sweep paths agree where their cells coincide") {
  // a zero-noise level of the noise sweep and the matching level of the psf
  // sweep describe the same degradation; their means agree within the spread
  SweepConfig noise_cfg;
  noise_cfg.variable = SweepVariable::noise;
  noise_cfg.kind = StructureKind::vessel;
  noise_cfg.lumen_mm = 2.0;
  noise_cfg.levels = {0.0, 25.0};
  noise_cfg.psf_sigma_mm = 0.7;
  noise_cfg.reps = 40;
  noise_cfg.seed = 21;
  const SweepResult by_noise = sweep(noise_cfg, "fwhm", make_fwhm_measurer());

  SweepConfig psf_cfg = noise_cfg;
  psf_cfg.variable = SweepVariable::psf;
  psf_cfg.levels = {0.7, 0.8};
  psf_cfg.noise_sigma_hu = 0.0;
  const SweepResult by_psf = sweep(psf_cfg, "fwhm", make_fwhm_measurer());

  const SweepLevelStats& a = by_noise.levels[0];
  const SweepLevelStats& b = by_psf.levels[0];
  const double spread = std::max({a.std_re_pct, b.std_re_pct, 1.0});
  CHECK(std::abs(a.mean_re_pct - b.mean_re_pct) < spread);
}

TEST_CASE("blur degrades the smallest vessel monotonically for fwhm") {
  SweepConfig cfg;
  cfg.variable = SweepVariable::psf;
  cfg.kind = StructureKind::vessel;
  cfg.lumen_mm = 0.5;
  cfg.levels = {0.4, 0.9};
  cfg.reps = 40;
  cfg.seed = 10;
  const SweepResult res = sweep(cfg, "fwhm", make_fwhm_measurer());
  REQUIRE(res.levels.size() == 2);
  CHECK(res.levels[1].mean_abs_re_pct >= res.levels[0].mean_abs_re_pct);
}

TEST_CASE("identical estimators produce identical comparison rows") {
  const Dataset ds = generate_dataset(StructureKind::airway, 6, 2, 3);
  const auto tables = compare_methods(ds, {{"a", make_fwhm_measurer()}, {"b", make_fwhm_measurer()}});
  REQUIRE(tables.size() == 2);
  for (std::size_t b = 0; b < tables[0].table.bins.size(); ++b) {
    CHECK(tables[0].table.bins[b].mean_re_pct == tables[1].table.bins[b].mean_re_pct);
    CHECK(tables[0].table.bins[b].n == tables[1].table.bins[b].n);
  }

  const auto dir = std::filesystem::temp_directory_path() / "subvox_eval_csv";
  std::filesystem::create_directories(dir);
  write_method_tables_csv(dir / "cmp.csv", tables);
  std::ifstream f(dir / "cmp.csv");
  std::string header;
  std::getline(f, header);
  CHECK(header == "method,bin,mean_re_pct,std_re_pct,mean_abs_re_pct,n,n_failed");
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
