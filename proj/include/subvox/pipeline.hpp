#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "subvox/image.hpp"
#include "subvox/render.hpp"
#include "subvox/rng.hpp"
#include "subvox/sampling.hpp"
#include "subvox/threads.hpp"

namespace subvox {

// Scanner degradation applied to one rendered replica.
struct DegradationParams {
  double psf_sigma_mm = 0.7;
  double noise_sigma_hu = 25.0;
  double noise_smooth_sigma_px = 2.0;
  double parenchyma_mean_hu = -900.0;
  double parenchyma_sigma_hu = 150.0;
  double parenchyma_smooth_sigma_px = 5.0;
  std::uint64_t rng_seed = 0;
};

// Final 32x32 patch and its exact ground truth.
struct LabeledPatch {
  ImageGrid pixels;  // 32x32 @ 0.5 mm/px
  double label_lumen_mm = 0.0;
  std::optional<double> label_wall_mm;
  StructureKind kind = StructureKind::vessel;
  std::int64_t model_id = 0;
  int replica_id = 0;
};

struct GenOptions {
  double psf_sigma_lo = ranges::psf_sigma_lo;
  double psf_sigma_hi = ranges::psf_sigma_hi;
  double noise_sigma_hu = ranges::noise_level_hu;
  ConfounderOptions confounders;
  RenderOptions render;
  int downsample_factor = 10;
  int patch_px = 32;
};

// down-sample -> blur -> noise -> crop.
inline ImageGrid degrade(const ImageGrid& high_res, const DegradationParams& params, Rng& noise_rng,
                         const GenOptions& opt = {}) {
  ImageGrid ct = downsample(high_res, opt.downsample_factor);
  ct = apply_psf(ct, params.psf_sigma_mm);
  ct = add_smoothed_noise(ct, params.noise_sigma_hu, params.noise_smooth_sigma_px, noise_rng);
  return crop_center(ct, opt.patch_px);
}

// Renders one replica of a model: confounders, PSF width and noise come from
// streams keyed by (seed, model_id, replica_id, stage), so any generation
// order produces identical patches.
inline LabeledPatch render_replica(const StructureModel& base, std::uint64_t seed,
                                   std::int64_t model_id, int replica_id,
                                   const GenOptions& opt = {}) {
  Rng geometry_rng(seed, {static_cast<std::uint64_t>(model_id), static_cast<std::uint64_t>(replica_id),
                          static_cast<std::uint64_t>(Stage::replica_geometry)});
  const StructureModel replica = resample_replica(base, geometry_rng, opt.confounders);

  Rng texture_rng(seed, {static_cast<std::uint64_t>(model_id), static_cast<std::uint64_t>(replica_id),
                         static_cast<std::uint64_t>(Stage::texture)});
  const ImageGrid high_res = render_high_res(replica, texture_rng, opt.render);

  Rng psf_rng(seed, {static_cast<std::uint64_t>(model_id), static_cast<std::uint64_t>(replica_id),
                     static_cast<std::uint64_t>(Stage::psf_draw)});
  DegradationParams params;
  params.psf_sigma_mm = psf_rng.uniform(opt.psf_sigma_lo, opt.psf_sigma_hi);
  params.noise_sigma_hu = opt.noise_sigma_hu;
  params.parenchyma_mean_hu = opt.render.parenchyma_mean_hu;
  params.parenchyma_sigma_hu = opt.render.parenchyma_sigma_hu;
  params.parenchyma_smooth_sigma_px = opt.render.parenchyma_smooth_sigma_px;
  params.rng_seed = seed;

  Rng noise_rng(seed, {static_cast<std::uint64_t>(model_id), static_cast<std::uint64_t>(replica_id),
                       static_cast<std::uint64_t>(Stage::noise)});

  LabeledPatch patch;
  patch.pixels = degrade(high_res, params, noise_rng, opt);
  patch.label_lumen_mm = base.lumen_radius_mm;
  if (base.kind == StructureKind::airway) patch.label_wall_mm = base.wall_thickness_mm;
  patch.kind = base.kind;
  patch.model_id = model_id;
  patch.replica_id = replica_id;
  return patch;
}

// M degraded renderings of the same geometric model. All replicas carry the
// exact same labels; everything label-neutral is re-sampled per replica.
inline std::vector<LabeledPatch> generate_replicas(const StructureModel& base, int m_replicas,
                                                   std::uint64_t seed, std::int64_t model_id,
                                                   const GenOptions& opt = {}) {
  if (m_replicas < 1) throw std::invalid_argument("generate_replicas: M must be >= 1");
  std::vector<LabeledPatch> out;
  out.reserve(static_cast<std::size_t>(m_replicas));
  for (int j = 0; j < m_replicas; ++j) out.push_back(render_replica(base, seed, model_id, j, opt));
  return out;
}

inline StructureModel sample_model_for_id(StructureKind kind, std::uint64_t seed,
                                          std::int64_t model_id, const GenOptions& opt = {}) {
  Rng rng(seed, {static_cast<std::uint64_t>(model_id), static_cast<std::uint64_t>(Stage::model_sample)});
  return sample_model(kind, rng, opt.confounders);
}

struct Dataset {
  StructureKind kind = StructureKind::vessel;
  std::int64_t n_models = 0;
  int m_replicas = 0;
  double spacing_mm = 0.5;
  std::vector<LabeledPatch> patches;  // model-major, replica-minor
};

// Generates the full dataset, parallel over models. Deterministic in
// (config, seed) for any worker count.
inline Dataset generate_dataset(StructureKind kind, std::int64_t n_models, int m_replicas,
                                std::uint64_t seed, const GenOptions& opt = {}, int threads = 0) {
  Dataset ds;
  ds.kind = kind;
  ds.n_models = n_models;
  ds.m_replicas = m_replicas;
  ds.spacing_mm = opt.render.spacing_mm * opt.downsample_factor;
  ds.patches.resize(static_cast<std::size_t>(n_models) * m_replicas);
  parallel_for(n_models, threads, [&](std::int64_t i) {
    const StructureModel base = sample_model_for_id(kind, seed, i, opt);
    for (int j = 0; j < m_replicas; ++j)
      ds.patches[static_cast<std::size_t>(i) * m_replicas + j] =
          render_replica(base, seed, i, j, opt);
  });
  return ds;
}

}  // namespace subvox
