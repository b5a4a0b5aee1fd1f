#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "subvox/classical.hpp"
#include "subvox/pipeline.hpp"
#include "subvox/threads.hpp"

namespace subvox {

// Signed relative error in percent; the absolute variant is its magnitude.
inline double relative_error_pct(double y_true_mm, double y_est_mm) {
  if (!(y_true_mm > 0.0)) throw std::invalid_argument("relative_error: true size must be positive");
  return 100.0 * (y_est_mm - y_true_mm) / y_true_mm;
}

// Half-open size bins (0, e0], (e0, e1], ..., (e_last, inf) partitioning the
// positive axis. Defaults to the wall-thickness comparison bins.
struct SizeBins {
  std::vector<double> edges{0.7, 1.5};

  int n_bins() const { return static_cast<int>(edges.size()) + 1; }

  int bin_of(double v) const {
    if (!(v > 0.0)) throw std::invalid_argument("SizeBins: size must be positive");
    for (std::size_t i = 0; i < edges.size(); ++i)
      if (v <= edges[i]) return static_cast<int>(i);
    return static_cast<int>(edges.size());
  }

  std::string label(int bin, const std::string& var = "size") const {
    char buf[64];
    if (bin == 0)
      std::snprintf(buf, sizeof buf, "%s<=%.3g", var.c_str(), edges.front());
    else if (bin == n_bins() - 1)
      std::snprintf(buf, sizeof buf, "%s>%.3g", var.c_str(), edges.back());
    else
      std::snprintf(buf, sizeof buf, "%.3g<%s<=%.3g", edges[static_cast<std::size_t>(bin - 1)],
                    var.c_str(), edges[static_cast<std::size_t>(bin)]);
    return buf;
  }
};

struct BinStats {
  std::string label;
  int n = 0;         // measurements contributing to the moments
  int n_failed = 0;  // no-measurement cases, excluded from the moments
  double mean_re_pct = 0.0;
  double std_re_pct = 0.0;  // population standard deviation
  double mean_abs_re_pct = 0.0;
};

struct GroupedErrorTable {
  std::vector<BinStats> bins;
  int total_n = 0;
  int total_failed = 0;
};

// Bucketed signed/absolute relative-error statistics. Estimates without a
// value count as failures in their truth's bin.
inline GroupedErrorTable grouped_table(const std::vector<double>& truths,
                                       const std::vector<std::optional<double>>& estimates,
                                       const SizeBins& bins = {},
                                       const std::string& var = "size") {
  if (truths.size() != estimates.size())
    throw std::invalid_argument("grouped_table: size mismatch");
  const int nb = bins.n_bins();
  std::vector<std::vector<double>> re(static_cast<std::size_t>(nb));
  GroupedErrorTable table;
  table.bins.resize(static_cast<std::size_t>(nb));
  for (int b = 0; b < nb; ++b) table.bins[static_cast<std::size_t>(b)].label = bins.label(b, var);

  for (std::size_t i = 0; i < truths.size(); ++i) {
    const int b = bins.bin_of(truths[i]);
    if (estimates[i])
      re[static_cast<std::size_t>(b)].push_back(relative_error_pct(truths[i], *estimates[i]));
    else {
      ++table.bins[static_cast<std::size_t>(b)].n_failed;
      ++table.total_failed;
    }
  }
  for (int b = 0; b < nb; ++b) {
    BinStats& s = table.bins[static_cast<std::size_t>(b)];
    // Welford one-pass moments.
    double mean = 0.0, m2 = 0.0, abs_sum = 0.0;
    int n = 0;
    for (double v : re[static_cast<std::size_t>(b)]) {
      ++n;
      const double d = v - mean;
      mean += d / n;
      m2 += d * (v - mean);
      abs_sum += std::abs(v);
    }
    s.n = n;
    table.total_n += n;
    if (n > 0) {
      s.mean_re_pct = mean;
      s.std_re_pct = std::sqrt(m2 / n);
      s.mean_abs_re_pct = abs_sum / n;
    }
  }
  return table;
}

// One measured size pair; empty optionals mean no measurement.
struct Estimate {
  std::optional<double> lumen_mm;
  std::optional<double> wall_mm;
};

// Measures a whole dataset; implementations are free to parallelize but must
// stay deterministic.
using DatasetMeasurer = std::function<std::vector<Estimate>(const Dataset&)>;

inline std::vector<Estimate> measure_dataset_classical(const Dataset& ds, bool use_zcsd,
                                                       int threads = 0) {
  std::vector<Estimate> out(ds.patches.size());
  parallel_for(static_cast<std::int64_t>(ds.patches.size()), threads, [&](std::int64_t i) {
    const LabeledPatch& p = ds.patches[static_cast<std::size_t>(i)];
    MeasurementResult r;
    if (p.kind == StructureKind::airway)
      r = use_zcsd ? zcsd_airway(p.pixels) : fwhm_airway(p.pixels);
    else
      r = use_zcsd ? zcsd_vessel(p.pixels) : fwhm_vessel(p.pixels);
    out[static_cast<std::size_t>(i)].lumen_mm = r.lumen_radius_mm;
    out[static_cast<std::size_t>(i)].wall_mm = r.wall_thickness_mm;
  });
  return out;
}

inline DatasetMeasurer make_fwhm_measurer(int threads = 0) {
  return [threads](const Dataset& ds) { return measure_dataset_classical(ds, false, threads); };
}

inline DatasetMeasurer make_zcsd_measurer(int threads = 0) {
  return [threads](const Dataset& ds) { return measure_dataset_classical(ds, true, threads); };
}

struct MethodTable {
  std::string method;
  GroupedErrorTable table;
};

// Table rows comparing measurement methods on one dataset. Airways are
// compared on wall thickness (the classical methods' weak spot); vessels on
// radius.
inline std::vector<MethodTable> compare_methods(
    const Dataset& ds, const std::vector<std::pair<std::string, DatasetMeasurer>>& methods,
    const SizeBins& bins = {}) {
  std::vector<MethodTable> out;
  const bool airway = ds.kind == StructureKind::airway;
  std::vector<double> truths;
  truths.reserve(ds.patches.size());
  for (const LabeledPatch& p : ds.patches)
    truths.push_back(airway ? p.label_wall_mm.value_or(0.0) : p.label_lumen_mm);
  for (const auto& [name, measure] : methods) {
    const std::vector<Estimate> est = measure(ds);
    std::vector<std::optional<double>> values(est.size());
    for (std::size_t i = 0; i < est.size(); ++i)
      values[i] = airway ? est[i].wall_mm : est[i].lumen_mm;
    out.push_back({name, grouped_table(truths, values, bins, airway ? "wt" : "radius")});
  }
  return out;
}

enum class SweepVariable { noise, psf, size };

inline const char* to_string(SweepVariable v) {
  switch (v) {
    case SweepVariable::noise: return "noise";
    case SweepVariable::psf: return "psf";
    default: return "size";
  }
}

struct SweepConfig {
  SweepVariable variable = SweepVariable::noise;
  StructureKind kind = StructureKind::vessel;
  std::vector<double> levels;  // defaulted by make_default_levels when empty
  int reps = 100;
  std::uint64_t seed = 99;
  double lumen_mm = 2.0;  // vessel radius or airway lumen
  double wall_mm = 1.5;   // airways only
  enum class Target { lumen, wall } target = Target::lumen;
  double psf_sigma_mm = 1.3;     // fixed smoothing for noise sweeps
  double noise_sigma_hu = 25.0;  // fixed noise for psf/size sweeps
  GenOptions gen;
  int threads = 0;
};

inline std::vector<double> make_default_levels(SweepVariable v) {
  switch (v) {
    case SweepVariable::noise: return {0, 5, 10, 15, 20, 25, 30, 35, 40};
    case SweepVariable::psf: return {0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    default: return {0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5};
  }
}

struct SweepLevelStats {
  double level = 0.0;
  int n = 0;        // configured repetitions
  int n_valid = 0;  // measurements that produced a value
  double mean_re_pct = 0.0;
  double std_re_pct = 0.0;
  double mean_abs_re_pct = 0.0;
};

struct SweepResult {
  std::string variable;
  std::string kind;
  std::string target;
  std::string measurer;
  double fixed_lumen_mm = 0.0;
  double fixed_wall_mm = 0.0;
  std::vector<SweepLevelStats> levels;
};

// Builds the degraded test patches for one sweep cell. The central structure
// is pinned; confounders, orientations and noise realizations are fresh per
// repetition.
inline Dataset make_sweep_dataset(const SweepConfig& cfg, std::size_t level_idx, double level) {
  GenOptions gen = cfg.gen;
  double lumen = cfg.lumen_mm;
  double wall = cfg.wall_mm;
  if (cfg.variable == SweepVariable::size) {
    if (cfg.target == SweepConfig::Target::wall)
      wall = level;
    else
      lumen = level;
  } else if (cfg.variable == SweepVariable::noise) {
    gen.psf_sigma_lo = gen.psf_sigma_hi = cfg.psf_sigma_mm;
    gen.noise_sigma_hu = level;
  } else {
    gen.psf_sigma_lo = gen.psf_sigma_hi = level;
    gen.noise_sigma_hu = cfg.noise_sigma_hu;
  }

  Dataset ds;
  ds.kind = cfg.kind;
  ds.n_models = cfg.reps;
  ds.m_replicas = 1;
  ds.spacing_mm = gen.render.spacing_mm * gen.downsample_factor;
  ds.patches.resize(static_cast<std::size_t>(cfg.reps));
  parallel_for(cfg.reps, cfg.threads, [&](std::int64_t rep) {
    const std::uint64_t cell_seed =
        stream_key(cfg.seed, {static_cast<std::uint64_t>(Stage::sweep_cell), level_idx});
    StructureModel base = sample_model_for_id(cfg.kind, cell_seed, rep, gen);
    base.lumen_radius_mm = lumen;
    if (cfg.kind == StructureKind::airway) base.wall_thickness_mm = wall;
    ds.patches[static_cast<std::size_t>(rep)] = render_replica(base, cell_seed, rep, 0, gen);
  });
  return ds;
}

inline SweepResult sweep(const SweepConfig& cfg_in, const std::string& measurer_name,
                         const DatasetMeasurer& measure) {
  SweepConfig cfg = cfg_in;
  if (cfg.levels.empty()) cfg.levels = make_default_levels(cfg.variable);
  if (cfg.levels.size() < 2) throw std::invalid_argument("sweep: needs at least two levels");
  if (cfg.kind == StructureKind::vessel && cfg.target == SweepConfig::Target::wall)
    throw std::invalid_argument("sweep: vessels have no wall target");

  SweepResult res;
  res.variable = to_string(cfg.variable);
  res.kind = to_string(cfg.kind);
  res.target = cfg.target == SweepConfig::Target::wall ? "wall" : "lumen";
  res.measurer = measurer_name;
  res.fixed_lumen_mm = cfg.lumen_mm;
  res.fixed_wall_mm = cfg.kind == StructureKind::airway ? cfg.wall_mm : 0.0;

  for (std::size_t li = 0; li < cfg.levels.size(); ++li) {
    const Dataset ds = make_sweep_dataset(cfg, li, cfg.levels[li]);
    const std::vector<Estimate> est = measure(ds);
    SweepLevelStats stats;
    stats.level = cfg.levels[li];
    stats.n = cfg.reps;
    double mean = 0.0, m2 = 0.0, abs_sum = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) {
      const std::optional<double> v =
          cfg.target == SweepConfig::Target::wall ? est[i].wall_mm : est[i].lumen_mm;
      if (!v) continue;
      const double truth = cfg.target == SweepConfig::Target::wall
                               ? *ds.patches[i].label_wall_mm
                               : ds.patches[i].label_lumen_mm;
      const double re = relative_error_pct(truth, *v);
      ++stats.n_valid;
      const double d = re - mean;
      mean += d / stats.n_valid;
      m2 += d * (re - mean);
      abs_sum += std::abs(re);
    }
    if (stats.n_valid > 0) {
      stats.mean_re_pct = mean;
      stats.std_re_pct = std::sqrt(m2 / stats.n_valid);
      stats.mean_abs_re_pct = abs_sum / stats.n_valid;
    }
    res.levels.push_back(stats);
  }
  return res;
}

// --- CSV output -----------------------------------------------------------

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("write_csv: cannot write " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) f << (i ? "," : "") << header[i];
  f << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << row[i];
    f << "\n";
  }
  if (!f) throw std::runtime_error("write_csv: write failed for " + path.string());
}

inline void write_method_tables_csv(const std::filesystem::path& path,
                                    const std::vector<MethodTable>& tables) {
  std::vector<std::vector<std::string>> rows;
  for (const MethodTable& mt : tables)
    for (const BinStats& b : mt.table.bins)
      rows.push_back({mt.method, b.label, format_number(b.mean_re_pct), format_number(b.std_re_pct),
                      format_number(b.mean_abs_re_pct), std::to_string(b.n),
                      std::to_string(b.n_failed)});
  write_csv(path, {"method", "bin", "mean_re_pct", "std_re_pct", "mean_abs_re_pct", "n", "n_failed"},
            rows);
}

inline void write_sweep_csv(const std::filesystem::path& path, const SweepResult& res) {
  std::vector<std::vector<std::string>> rows;
  for (const SweepLevelStats& s : res.levels)
    rows.push_back({res.variable, res.kind, res.target, res.measurer,
                    format_number(res.fixed_lumen_mm), format_number(res.fixed_wall_mm),
                    format_number(s.level), format_number(s.mean_re_pct),
                    format_number(s.std_re_pct), format_number(s.mean_abs_re_pct),
                    std::to_string(s.n), std::to_string(s.n_valid)});
  write_csv(path,
            {"variable", "kind", "target", "measurer", "fixed_lumen_mm", "fixed_wall_mm", "level",
             "mean_re_pct", "std_re_pct", "mean_abs_re_pct", "n", "n_valid"},
            rows);
}

}  // namespace subvox
