// subvox: synthetic CT cross-section patches with exact ground truth,
// classical edge-based measurement, a convolutional regressor, and the
// evaluation harness tying them together.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "subvox/subvox.hpp"

namespace fs = std::filesystem;
using namespace subvox;

namespace {

StructureKind parse_kind(const std::string& s) {
  if (s == "airway") return StructureKind::airway;
  if (s == "vessel") return StructureKind::vessel;
  throw CLI::ValidationError("--kind must be airway or vessel");
}

void write_resolved_config(CLI::App& app, const fs::path& out_target) {
  fs::path dir = out_target;
  if (dir.has_extension()) dir = dir.parent_path();
  if (dir.empty()) dir = ".";
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream f(dir / "resolved_config.ini", std::ios::trunc);
  f << app.config_to_str(true, false);
}

struct GenArgs {
  std::string kind = "vessel";
  std::int64_t n_models = 100;
  int replicas = 25;
  std::uint64_t seed = 1;
  std::string out;
  double psf_min = ranges::psf_sigma_lo;
  double psf_max = ranges::psf_sigma_hi;
  double noise = ranges::noise_level_hu;
  bool no_texture = false;
  bool no_neighbors = false;
  bool no_chest_wall = false;
  int threads = 0;
};

GenOptions to_gen_options(const GenArgs& a) {
  GenOptions opt;
  opt.psf_sigma_lo = a.psf_min;
  opt.psf_sigma_hi = a.psf_max;
  opt.noise_sigma_hu = a.noise;
  opt.render.texture = !a.no_texture;
  opt.confounders.neighbors = !a.no_neighbors;
  opt.confounders.chest_wall = !a.no_chest_wall;
  return opt;
}

int run_gen(const GenArgs& a) {
  const Dataset ds = generate_dataset(parse_kind(a.kind), a.n_models, a.replicas, a.seed,
                                      to_gen_options(a), a.threads);
  save_dataset(ds, a.out);
  std::printf("wrote %zu patches (%lld models x %d replicas) to %s\n", ds.patches.size(),
              static_cast<long long>(a.n_models), a.replicas, a.out.c_str());
  return 0;
}

void write_predictions_csv(const fs::path& path, const Dataset& ds,
                           const std::vector<Estimate>& est,
                           const std::vector<int>* valid_rays) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < ds.patches.size(); ++i) {
    const LabeledPatch& p = ds.patches[i];
    std::vector<std::string> row;
    row.push_back(std::to_string(p.model_id));
    row.push_back(std::to_string(p.replica_id));
    row.push_back(format_number(p.label_lumen_mm));
    row.push_back(p.label_wall_mm ? format_number(*p.label_wall_mm) : "");
    row.push_back(est[i].lumen_mm ? format_number(*est[i].lumen_mm) : "");
    row.push_back(est[i].wall_mm ? format_number(*est[i].wall_mm) : "");
    row.push_back(valid_rays ? std::to_string((*valid_rays)[i]) : "");
    rows.push_back(std::move(row));
  }
  write_csv(path, {"model_id", "replica_id", "true_lumen", "true_wall", "est_lumen", "est_wall",
                   "n_valid_rays"},
            rows);
}

int run_measure(const std::string& method, const std::string& in, const std::string& out,
                int threads) {
  const Dataset ds = load_dataset(in);
  std::vector<Estimate> est(ds.patches.size());
  std::vector<int> valid(ds.patches.size(), 0);
  const bool zcsd = method == "zcsd";
  parallel_for(static_cast<std::int64_t>(ds.patches.size()), threads, [&](std::int64_t i) {
    const LabeledPatch& p = ds.patches[static_cast<std::size_t>(i)];
    MeasurementResult r;
    if (p.kind == StructureKind::airway)
      r = zcsd ? zcsd_airway(p.pixels) : fwhm_airway(p.pixels);
    else
      r = zcsd ? zcsd_vessel(p.pixels) : fwhm_vessel(p.pixels);
    est[static_cast<std::size_t>(i)] = {r.lumen_radius_mm, r.wall_thickness_mm};
    valid[static_cast<std::size_t>(i)] = r.n_valid_rays;
  });
  write_predictions_csv(out, ds, est, &valid);
  std::printf("measured %zu patches with %s -> %s\n", ds.patches.size(), method.c_str(),
              out.c_str());
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string out = "model.bin";
  int epochs = 40;
  double lr = 0.001;
  int groups_per_batch = 40;
  std::uint64_t seed = 1234;
  double val_fraction = 0.1;
  bool no_augment = false;
  int threads = 0;
};

int run_train(const TrainArgs& a) {
  const Dataset ds = load_dataset(a.data);
  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.lr = a.lr;
  tc.groups_per_batch = a.groups_per_batch;
  tc.seed = a.seed;
  tc.val_fraction = a.val_fraction;
  tc.augment_enabled = !a.no_augment;
  tc.threads = a.threads;
  const NetworkConfig cfg = NetworkConfig::standard(ds.kind);
  TrainResult res = train(ds, cfg, tc);
  save_checkpoint(a.out, res.net, res.meta);

  // per-epoch log next to the checkpoint
  std::vector<std::vector<std::string>> rows;
  for (const EpochLog& l : res.log)
    rows.push_back({std::to_string(l.epoch), format_number(l.loss_mu),
                    format_number(l.loss_sigma_weighted), format_number(l.loss_total),
                    format_number(l.val_abs_re_pct)});
  fs::path log_path = fs::path(a.out);
  log_path.replace_extension(".log.csv");
  write_csv(log_path, {"epoch", "loss_mu", "loss_sigma_weighted", "loss_total", "val_abs_re_pct"},
            rows);
  std::printf("best validation mean |RE| %.2f%% (epoch %d); model -> %s\n",
              res.meta.best_validation_abs_re_pct, res.best_epoch, a.out.c_str());
  return 0;
}

int run_predict(const std::string& model, const std::string& in, const std::string& out,
                int threads) {
  auto ckpt = std::make_shared<LoadedCheckpoint>(load_checkpoint(model));
  const Dataset ds = load_dataset(in);
  const std::vector<Estimate> est = make_cnr_measurer(ckpt, threads)(ds);
  write_predictions_csv(out, ds, est, nullptr);
  std::printf("predicted %zu patches -> %s\n", ds.patches.size(), out.c_str());
  return 0;
}

int run_eval(const std::string& model, const std::string& data, const std::string& out,
             int threads) {
  const Dataset ds = load_dataset(data);
  std::vector<std::pair<std::string, DatasetMeasurer>> methods;
  if (!model.empty()) {
    auto ckpt = std::make_shared<LoadedCheckpoint>(load_checkpoint(model));
    methods.emplace_back("cnr", make_cnr_measurer(ckpt, threads));
  }
  methods.emplace_back("fwhm", make_fwhm_measurer(threads));
  methods.emplace_back("zcsd", make_zcsd_measurer(threads));
  const auto tables = compare_methods(ds, methods);
  write_method_tables_csv(out, tables);
  for (const MethodTable& t : tables)
    for (const BinStats& b : t.table.bins)
      std::printf("%-6s %-16s mean RE %9.2f%%  std %9.2f  |RE| %8.2f%%  n %5d  failed %d\n",
                  t.method.c_str(), b.label.c_str(), b.mean_re_pct, b.std_re_pct,
                  b.mean_abs_re_pct, b.n, b.n_failed);
  return 0;
}

struct SweepArgs {
  std::string variable = "noise";
  std::string kind = "vessel";
  std::string measurer = "cnr";
  std::string model;
  std::string out = "sweep.csv";
  std::vector<double> levels;
  int reps = 100;
  std::uint64_t seed = 99;
  double lumen = 2.0;
  double wall = 1.5;
  std::string target = "lumen";
  double psf = 1.3;
  double noise = 25.0;
  int threads = 0;
};

int run_sweep(const SweepArgs& a) {
  SweepConfig cfg;
  if (a.variable == "noise")
    cfg.variable = SweepVariable::noise;
  else if (a.variable == "psf")
    cfg.variable = SweepVariable::psf;
  else if (a.variable == "size")
    cfg.variable = SweepVariable::size;
  else
    throw CLI::ValidationError("--variable must be noise, psf or size");
  cfg.kind = parse_kind(a.kind);
  cfg.levels = a.levels;
  cfg.reps = a.reps;
  cfg.seed = a.seed;
  cfg.lumen_mm = a.lumen;
  cfg.wall_mm = a.wall;
  cfg.target = a.target == "wall" ? SweepConfig::Target::wall : SweepConfig::Target::lumen;
  cfg.psf_sigma_mm = a.psf;
  cfg.noise_sigma_hu = a.noise;
  cfg.threads = a.threads;

  DatasetMeasurer measure;
  if (a.measurer == "fwhm")
    measure = make_fwhm_measurer(a.threads);
  else if (a.measurer == "zcsd")
    measure = make_zcsd_measurer(a.threads);
  else if (a.measurer == "cnr") {
    if (a.model.empty()) throw CLI::ValidationError("--measurer cnr requires --model");
    auto ckpt = std::make_shared<LoadedCheckpoint>(load_checkpoint(a.model));
    if ((ckpt->meta.kind == StructureKind::airway) != (cfg.kind == StructureKind::airway))
      throw std::invalid_argument("sweep: model kind does not match --kind");
    measure = make_cnr_measurer(ckpt, a.threads);
  } else {
    throw CLI::ValidationError("--measurer must be fwhm, zcsd or cnr");
  }

  const SweepResult res = sweep(cfg, a.measurer, measure);
  write_sweep_csv(a.out, res);
  for (const SweepLevelStats& s : res.levels)
    std::printf("%s=%-7g mean RE %8.2f%%  std %8.2f  n_valid %d/%d\n", res.variable.c_str(),
                s.level, s.mean_re_pct, s.std_re_pct, s.n_valid, s.n);
  return 0;
}

struct ReproArgs {
  std::string scale = "desk";
  std::string out = "repro";
  std::uint64_t seed = 2024;
  int threads = 0;
};

// End-to-end reproduction recipe: generate -> train -> measure -> compare,
// plus the noise/smoothness/size sweeps, at a scale that runs on a desktop
// CPU.
int run_repro(const ReproArgs& a) {
  const bool desk = a.scale == "desk";
  if (!desk && a.scale != "smoke") throw CLI::ValidationError("--scale must be desk or smoke");
  const std::int64_t n_train = desk ? 800 : 12;
  const std::int64_t n_test = desk ? 200 : 6;
  const int m = desk ? 25 : 4;
  const int epochs = desk ? 16 : 2;
  const int gpb = desk ? 8 : 2;
  const int reps = desk ? 100 : 8;

  const fs::path out(a.out);
  fs::create_directories(out);
  GenArgs gen;
  gen.threads = a.threads;

  struct Step {
    const char* name;
    StructureKind kind;
  };
  std::map<std::string, std::shared_ptr<LoadedCheckpoint>> models;

  for (const Step& step : {Step{"vessel", StructureKind::vessel}, Step{"airway", StructureKind::airway}}) {
    const fs::path train_dir = out / (std::string(step.name) + "_train");
    const fs::path test_dir = out / (std::string(step.name) + "_test");
    std::printf("[repro] generating %s datasets\n", step.name);
    save_dataset(generate_dataset(step.kind, n_train, m, a.seed + (step.kind == StructureKind::airway ? 2 : 0),
                                  to_gen_options(gen), a.threads),
                 train_dir);
    save_dataset(generate_dataset(step.kind, n_test, m, a.seed + 1 + (step.kind == StructureKind::airway ? 2 : 0),
                                  to_gen_options(gen), a.threads),
                 test_dir);

    std::printf("[repro] training %s regressor\n", step.name);
    TrainArgs ta;
    ta.data = train_dir.string();
    ta.out = (out / (std::string(step.name) + "_model.bin")).string();
    ta.epochs = epochs;
    ta.groups_per_batch = gpb;
    ta.seed = a.seed;
    ta.threads = a.threads;
    run_train(ta);
    models[step.name] = std::make_shared<LoadedCheckpoint>(load_checkpoint(ta.out));

    std::printf("[repro] measuring %s test set\n", step.name);
    run_measure("fwhm", test_dir.string(), (out / (std::string(step.name) + "_fwhm.csv")).string(),
                a.threads);
    run_measure("zcsd", test_dir.string(), (out / (std::string(step.name) + "_zcsd.csv")).string(),
                a.threads);
    run_predict(ta.out, test_dir.string(), (out / (std::string(step.name) + "_cnr.csv")).string(),
                a.threads);

    const Dataset test = load_dataset(test_dir);
    const auto tables = compare_methods(
        test, {{"cnr", make_cnr_measurer(models[step.name], a.threads)},
               {"fwhm", make_fwhm_measurer(a.threads)},
               {"zcsd", make_zcsd_measurer(a.threads)}});
    write_method_tables_csv(out / (std::string(step.name) + "_comparison.csv"), tables);
  }

  std::printf("[repro] sweeps\n");
  auto run_one_sweep = [&](const char* tag, SweepVariable var, StructureKind kind, double lumen,
                           double wall, SweepConfig::Target target) {
    SweepConfig cfg;
    cfg.variable = var;
    cfg.kind = kind;
    cfg.reps = reps;
    cfg.seed = a.seed + 7;
    cfg.lumen_mm = lumen;
    cfg.wall_mm = wall;
    cfg.target = target;
    cfg.threads = a.threads;
    const char* model_name = kind == StructureKind::airway ? "airway" : "vessel";
    const SweepResult res = sweep(cfg, "cnr", make_cnr_measurer(models[model_name], a.threads));
    write_sweep_csv(out / (std::string("sweep_") + tag + ".csv"), res);
  };
  // noise sweeps (smoothing pinned at 1.3 mm) for the mid-size structures
  run_one_sweep("noise_vessel", SweepVariable::noise, StructureKind::vessel, 2.0, 0.0,
                SweepConfig::Target::lumen);
  run_one_sweep("noise_airway_lumen", SweepVariable::noise, StructureKind::airway, 2.5, 1.5,
                SweepConfig::Target::lumen);
  run_one_sweep("noise_airway_wall", SweepVariable::noise, StructureKind::airway, 1.5, 1.2,
                SweepConfig::Target::wall);
  // smoothness sweeps at fixed 25 HU noise
  run_one_sweep("psf_vessel", SweepVariable::psf, StructureKind::vessel, 2.0, 0.0,
                SweepConfig::Target::lumen);
  run_one_sweep("psf_airway_wall", SweepVariable::psf, StructureKind::airway, 1.5, 1.2,
                SweepConfig::Target::wall);
  // size sweeps
  run_one_sweep("size_vessel", SweepVariable::size, StructureKind::vessel, 2.0, 0.0,
                SweepConfig::Target::lumen);
  run_one_sweep("size_airway_lumen", SweepVariable::size, StructureKind::airway, 2.0, 1.2,
                SweepConfig::Target::lumen);

  std::printf("[repro] done; outputs under %s\n", out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic sub-voxel structure generation, measurement and evaluation"};
  app.require_subcommand(1);
  app.set_config("--config");
  app.allow_config_extras(false);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (0: SUBVOX_THREADS or hardware)");

  const auto kind_values = CLI::IsMember({"airway", "vessel"});

  GenArgs gen;
  CLI::App* cgen = app.add_subcommand("gen", "generate a labeled synthetic dataset");
  cgen->fallthrough();
  cgen->add_option("--kind", gen.kind, "airway | vessel")->required()->check(kind_values);
  cgen->add_option("--n-models", gen.n_models, "number of geometric models")->required();
  cgen->add_option("--replicas", gen.replicas, "replicas per model");
  cgen->add_option("--seed", gen.seed, "global seed");
  cgen->add_option("--out", gen.out, "output directory")->required();
  cgen->add_option("--psf-min", gen.psf_min, "minimum PSF sigma (mm)");
  cgen->add_option("--psf-max", gen.psf_max, "maximum PSF sigma (mm)");
  cgen->add_option("--noise", gen.noise, "noise sigma (HU)");
  cgen->add_flag("--no-texture", gen.no_texture, "flat parenchyma background");
  cgen->add_flag("--no-neighbors", gen.no_neighbors, "suppress neighbor structures");
  cgen->add_flag("--no-chest-wall", gen.no_chest_wall, "suppress chest-wall caps");

  std::string m_method = "fwhm", m_in, m_out = "results.csv";
  CLI::App* cmeasure = app.add_subcommand("measure", "run a classical measurer over a dataset");
  cmeasure->fallthrough();
  cmeasure->add_option("--method", m_method, "fwhm | zcsd")->check(CLI::IsMember({"fwhm", "zcsd"}));
  cmeasure->add_option("--in", m_in, "dataset directory")->required();
  cmeasure->add_option("--out", m_out, "output CSV");

  TrainArgs tr;
  CLI::App* ctrain = app.add_subcommand("train", "train the convolutional regressor");
  ctrain->fallthrough();
  ctrain->add_option("--data", tr.data, "training dataset directory")->required();
  ctrain->add_option("--epochs", tr.epochs, "training epochs");
  ctrain->add_option("--lr", tr.lr, "learning rate");
  ctrain->add_option("--groups-per-batch", tr.groups_per_batch, "replica groups per mini-batch");
  ctrain->add_option("--seed", tr.seed, "training seed");
  ctrain->add_option("--val-fraction", tr.val_fraction, "validation split at model granularity");
  ctrain->add_option("--out", tr.out, "checkpoint path");
  ctrain->add_flag("--no-augment", tr.no_augment, "disable data augmentation");

  std::string p_model, p_in, p_out = "preds.csv";
  CLI::App* cpredict = app.add_subcommand("predict", "regress sizes with a trained model");
  cpredict->fallthrough();
  cpredict->add_option("--model", p_model, "checkpoint path")->required();
  cpredict->add_option("--in", p_in, "dataset directory")->required();
  cpredict->add_option("--out", p_out, "output CSV");

  std::string e_model, e_data, e_out = "table.csv";
  CLI::App* ceval = app.add_subcommand("eval", "size-grouped error tables for cnr/fwhm/zcsd");
  ceval->fallthrough();
  ceval->add_option("--model", e_model, "checkpoint path (omit for classical only)");
  ceval->add_option("--data", e_data, "dataset directory")->required();
  ceval->add_option("--out", e_out, "output CSV");

  SweepArgs sw;
  CLI::App* csweep = app.add_subcommand("sweep", "relative error vs noise, smoothing or size");
  csweep->fallthrough();
  csweep->add_option("--variable", sw.variable, "noise | psf | size")->check(CLI::IsMember({"noise", "psf", "size"}));
  csweep->add_option("--kind", sw.kind, "airway | vessel")->check(kind_values);
  csweep->add_option("--measurer", sw.measurer, "fwhm | zcsd | cnr")->check(CLI::IsMember({"fwhm", "zcsd", "cnr"}));
  csweep->add_option("--model", sw.model, "checkpoint (for cnr)");
  csweep->add_option("--out", sw.out, "output CSV");
  csweep->add_option("--levels", sw.levels, "explicit sweep levels");
  csweep->add_option("--reps", sw.reps, "patches per level");
  csweep->add_option("--seed", sw.seed, "sweep seed");
  csweep->add_option("--lumen", sw.lumen, "fixed lumen radius / vessel radius (mm)");
  csweep->add_option("--wall", sw.wall, "fixed wall thickness (mm, airways)");
  csweep->add_option("--target", sw.target, "lumen | wall")->check(CLI::IsMember({"lumen", "wall"}));
  csweep->add_option("--psf", sw.psf, "fixed PSF sigma for noise sweeps (mm)");
  csweep->add_option("--noise", sw.noise, "fixed noise sigma for psf/size sweeps (HU)");

  ReproArgs rp;
  CLI::App* crepro = app.add_subcommand("repro", "end-to-end desk-scale reproduction recipe");
  crepro->fallthrough();
  crepro->add_option("--scale", rp.scale, "desk | smoke")->check(CLI::IsMember({"desk", "smoke"}));
  crepro->add_option("--out", rp.out, "output directory");
  crepro->add_option("--seed", rp.seed, "global seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 2;
  }

  try {
    if (cgen->parsed()) {
      gen.threads = threads;
      write_resolved_config(app, gen.out);
      return run_gen(gen);
    }
    if (cmeasure->parsed()) {
      if (m_method != "fwhm" && m_method != "zcsd")
        throw std::invalid_argument("--method must be fwhm or zcsd");
      write_resolved_config(app, m_out);
      return run_measure(m_method, m_in, m_out, threads);
    }
    if (ctrain->parsed()) {
      tr.threads = threads;
      write_resolved_config(app, tr.out);
      return run_train(tr);
    }
    if (cpredict->parsed()) {
      write_resolved_config(app, p_out);
      return run_predict(p_model, p_in, p_out, threads);
    }
    if (ceval->parsed()) {
      write_resolved_config(app, e_out);
      return run_eval(e_model, e_data, e_out, threads);
    }
    if (csweep->parsed()) {
      sw.threads = threads;
      write_resolved_config(app, sw.out);
      return run_sweep(sw);
    }
    if (crepro->parsed()) {
      rp.threads = threads;
      write_resolved_config(app, rp.out);
      return run_repro(rp);
    }
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
