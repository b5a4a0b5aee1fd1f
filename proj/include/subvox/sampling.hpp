#pragma once

#include <algorithm>
#include <cmath>

#include "subvox/geometry.hpp"
#include "subvox/rng.hpp"

namespace subvox {

// Physiological parameter ranges used by the generator. All draws are
// uniform within their interval.
namespace ranges {
inline constexpr double airway_lumen_radius_lo = 0.5;   // mm
inline constexpr double airway_lumen_radius_hi = 6.0;   // mm
inline constexpr double vessel_radius_lo = 0.5;         // mm
inline constexpr double vessel_radius_hi = 4.5;         // mm
inline constexpr double neighbor_radius_margin = 0.8;   // mm above the central size
inline constexpr double skew_lo = -25.0;                // degrees
inline constexpr double skew_hi = 25.0;                 // degrees
inline constexpr double airway_lumen_intensity_lo = -1150.0;  // HU
inline constexpr double airway_lumen_intensity_hi = -1050.0;  // HU
inline constexpr double airway_wall_intensity_lo = -500.0;    // HU
inline constexpr double airway_wall_intensity_hi = 50.0;      // HU
inline constexpr double vessel_intensity_lo = -50.0;          // HU
inline constexpr double vessel_intensity_hi = 50.0;           // HU
inline constexpr double noise_level_hu = 25.0;                // HU
inline constexpr double psf_sigma_lo = 0.5;                   // mm
inline constexpr double psf_sigma_hi = 0.875;                 // mm
inline constexpr double axis_ratio_lo = 0.7;
inline constexpr double axis_ratio_hi = 1.0;
inline constexpr double neighbor_gap_lo = 0.5;  // mm, non-tangent neighbors
inline constexpr double neighbor_gap_hi = 4.0;  // mm
inline constexpr double chest_wall_intensity_lo = -100.0;  // HU
inline constexpr double chest_wall_intensity_hi = 200.0;   // HU
inline constexpr double chest_wall_disk_radius_lo = 8.0;   // mm
inline constexpr double chest_wall_disk_radius_hi = 16.0;  // mm
inline constexpr double chest_wall_cap_depth_lo = 2.0;     // mm
inline constexpr double chest_wall_cap_depth_hi = 6.0;     // mm
inline constexpr double chest_wall_max_vessel_radius = 1.5;  // mm
inline constexpr double patch_half_extent_mm = 8.0;  // final 32x32 patch at 0.5 mm/px

inline double wall_thickness_lo(double lumen_radius) { return 0.1 * lumen_radius + 0.2; }
inline double wall_thickness_hi(double lumen_radius) { return 0.3 * lumen_radius + 1.5; }
}  // namespace ranges

// Which label-neutral confounders to include.
struct ConfounderOptions {
  bool neighbors = true;
  bool chest_wall = true;
};

namespace detail {

// Places a neighbor along `contact_deg` either touching the central outer
// boundary or separated from it by `gap_mm`.
inline void place_neighbor(const StructureModel& model, NeighborSpec& n,
                           double contact_deg, double gap_mm) {
  const double d = model.central_outer().radial_extent(contact_deg) +
                   n.outer().radial_extent(contact_deg) + gap_mm;
  n.inner.center_x_mm = d * std::cos(deg_to_rad(contact_deg));
  n.inner.center_y_mm = d * std::sin(deg_to_rad(contact_deg));
}

inline NeighborSpec sample_vessel_neighbor(const StructureModel& model, double radius_lo,
                                           double radius_hi, bool tangent, Rng& rng) {
  NeighborSpec n;
  n.kind = StructureKind::vessel;
  n.tangent = tangent;
  const double radius = rng.uniform(radius_lo, radius_hi);
  const double q = rng.uniform(ranges::axis_ratio_lo, ranges::axis_ratio_hi);
  n.inner.semi_major_mm = radius / std::sqrt(q);
  n.inner.semi_minor_mm = radius * std::sqrt(q);
  n.inner.rotation_deg = rng.uniform(-180.0, 180.0);
  n.inner.intensity_hu = rng.uniform(ranges::vessel_intensity_lo, ranges::vessel_intensity_hi);
  const double contact = rng.uniform(0.0, 360.0);
  const double gap = tangent ? 0.0 : rng.uniform(ranges::neighbor_gap_lo, ranges::neighbor_gap_hi);
  place_neighbor(model, n, contact, gap);
  return n;
}

inline NeighborSpec sample_airway_neighbor(const StructureModel& model, Rng& rng) {
  NeighborSpec n;
  n.kind = StructureKind::airway;
  const double lr = rng.uniform(model.lumen_radius_mm,
                                model.lumen_radius_mm + ranges::neighbor_radius_margin);
  n.wall_thickness_mm = rng.uniform(ranges::wall_thickness_lo(lr), ranges::wall_thickness_hi(lr));
  const double q = rng.uniform(ranges::axis_ratio_lo, ranges::axis_ratio_hi);
  n.inner.semi_major_mm = lr / std::sqrt(q);
  n.inner.semi_minor_mm = lr * std::sqrt(q);
  n.inner.rotation_deg = rng.uniform(-180.0, 180.0);
  n.inner.intensity_hu =
      rng.uniform(ranges::airway_lumen_intensity_lo, ranges::airway_lumen_intensity_hi);
  n.wall_intensity_hu =
      rng.uniform(ranges::airway_wall_intensity_lo, ranges::airway_wall_intensity_hi);
  // Only arteries run tangent to bronchi, so a neighboring airway may also
  // be separated from the central vessel.
  n.tangent = rng.bernoulli(0.5);
  const double contact = rng.uniform(0.0, 360.0);
  const double gap = n.tangent ? 0.0 : rng.uniform(ranges::neighbor_gap_lo, ranges::neighbor_gap_hi);
  place_neighbor(model, n, contact, gap);
  return n;
}

// Resamples the label-neutral fields in place: skew, orientation, neighbors
// and chest-wall caps. The central dimensions and intensities are untouched.
inline void sample_confounders(StructureModel& model, Rng& rng, const ConfounderOptions& opt) {
  model.skew_deg = rng.uniform(ranges::skew_lo, ranges::skew_hi);
  model.central_rotation_deg = rng.uniform(-180.0, 180.0);

  model.neighbors.clear();
  if (opt.neighbors) {
    if (model.kind == StructureKind::airway) {
      // 0-2 tangent vessels rotated around the airway.
      const int n_vessels = rng.uniform_int(0, 2);
      for (int i = 0; i < n_vessels; ++i)
        model.neighbors.push_back(sample_vessel_neighbor(
            model, model.lumen_radius_mm, model.lumen_radius_mm + ranges::neighbor_radius_margin,
            /*tangent=*/true, rng));
    } else {
      // 1-3 vessels in total (the central one included) and 0-2 airways.
      const int n_extra_vessels = rng.uniform_int(1, 3) - 1;
      for (int i = 0; i < n_extra_vessels; ++i)
        model.neighbors.push_back(sample_vessel_neighbor(model, ranges::vessel_radius_lo,
                                                         ranges::vessel_radius_hi,
                                                         /*tangent=*/false, rng));
      const int n_airways = rng.uniform_int(0, 2);
      for (int i = 0; i < n_airways; ++i)
        model.neighbors.push_back(sample_airway_neighbor(model, rng));
    }
  }

  model.chest_wall.clear();
  const bool eligible = opt.chest_wall && model.kind == StructureKind::vessel &&
                        model.lumen_radius_mm < ranges::chest_wall_max_vessel_radius;
  if (eligible) {
    const int n_regions = rng.uniform_int(0, 2);
    const double anchor_deg = 45.0 * rng.uniform_int(0, 7);
    for (int i = 0; i < n_regions; ++i) {
      const double dir = deg_to_rad(anchor_deg + 180.0 * i);  // opposite corners/borders
      // Distance from the patch center to its boundary along the anchor.
      const double to_boundary = ranges::patch_half_extent_mm /
                                 std::max(std::abs(std::cos(dir)), std::abs(std::sin(dir)));
      ChestWallRegion region;
      region.radius_mm =
          rng.uniform(ranges::chest_wall_disk_radius_lo, ranges::chest_wall_disk_radius_hi);
      const double depth =
          rng.uniform(ranges::chest_wall_cap_depth_lo, ranges::chest_wall_cap_depth_hi);
      const double d = to_boundary + region.radius_mm - depth;
      region.center_x_mm = d * std::cos(dir);
      region.center_y_mm = d * std::sin(dir);
      region.intensity_hu =
          rng.uniform(ranges::chest_wall_intensity_lo, ranges::chest_wall_intensity_hi);
      model.chest_wall.push_back(region);
    }
  }
}

}  // namespace detail

// Draws a fresh geometric model with every parameter uniform in its range.
inline StructureModel sample_model(StructureKind kind, Rng& rng,
                                   const ConfounderOptions& opt = {}) {
  StructureModel m;
  m.kind = kind;
  if (kind == StructureKind::airway) {
    m.lumen_radius_mm = rng.uniform(ranges::airway_lumen_radius_lo, ranges::airway_lumen_radius_hi);
    m.wall_thickness_mm = rng.uniform(ranges::wall_thickness_lo(m.lumen_radius_mm),
                                      ranges::wall_thickness_hi(m.lumen_radius_mm));
  } else {
    m.lumen_radius_mm = rng.uniform(ranges::vessel_radius_lo, ranges::vessel_radius_hi);
    m.wall_thickness_mm = 0.0;
  }
  m.axis_ratio = rng.uniform(ranges::axis_ratio_lo, ranges::axis_ratio_hi);
  m.lumen_intensity_hu =
      rng.uniform(ranges::airway_lumen_intensity_lo, ranges::airway_lumen_intensity_hi);
  m.wall_intensity_hu =
      rng.uniform(ranges::airway_wall_intensity_lo, ranges::airway_wall_intensity_hi);
  m.vessel_intensity_hu = rng.uniform(ranges::vessel_intensity_lo, ranges::vessel_intensity_hi);
  detail::sample_confounders(m, rng, opt);
  return m;
}

// Derives a replica of the same structure: dimensions and intensities fixed,
// skew, orientation, neighbors and chest-wall caps re-sampled.
inline StructureModel resample_replica(const StructureModel& base, Rng& rng,
                                       const ConfounderOptions& opt = {}) {
  StructureModel m = base;
  detail::sample_confounders(m, rng, opt);
  return m;
}

}  // namespace subvox
