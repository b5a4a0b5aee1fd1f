#pragma once

#include <cmath>
#include <vector>

#include "subvox/geometry.hpp"
#include "subvox/image.hpp"
#include "subvox/rng.hpp"

namespace subvox {

struct RenderOptions {
  int grid_px = 640;
  double spacing_mm = 0.05;
  bool texture = true;
  double parenchyma_mean_hu = -900.0;
  double parenchyma_sigma_hu = 150.0;
  double parenchyma_smooth_sigma_px = 5.0;
};

// Correlated parenchyma texture: white Gaussian noise, smoothed, then
// remapped to the target mean and standard deviation.
inline ImageGrid parenchyma_texture(int grid_px, double spacing_mm, const RenderOptions& opt,
                                    Rng& rng) {
  ImageGrid field(grid_px, grid_px, spacing_mm);
  for (double& v : field.values) v = rng.normal();
  field = gaussian_blur(field, opt.parenchyma_smooth_sigma_px);
  double mean = 0.0;
  for (double v : field.values) mean += v;
  mean /= static_cast<double>(field.values.size());
  double var = 0.0;
  for (double v : field.values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(field.values.size());
  const double scale = opt.parenchyma_sigma_hu / std::sqrt(var);
  for (double& v : field.values) v = opt.parenchyma_mean_hu + (v - mean) * scale;
  return field;
}

namespace renderdetail {

// Ellipse with its frame transform hoisted out of the pixel loop.
struct PreparedEllipse {
  double cx, cy, cos_r, sin_r, inv_a, inv_b, intensity;
  double bound_sq;  // quick-reject radius

  explicit PreparedEllipse(const EllipseSpec& e)
      : cx(e.center_x_mm), cy(e.center_y_mm), cos_r(std::cos(deg_to_rad(e.rotation_deg))),
        sin_r(std::sin(deg_to_rad(e.rotation_deg))), inv_a(1.0 / e.semi_major_mm),
        inv_b(1.0 / e.semi_minor_mm), intensity(e.intensity_hu),
        bound_sq(e.semi_major_mm * e.semi_major_mm) {}

  bool contains(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    if (dx * dx + dy * dy > bound_sq) return false;
    const double u = (dx * cos_r + dy * sin_r) * inv_a;
    const double v = (-dx * sin_r + dy * cos_r) * inv_b;
    return u * u + v * v <= 1.0;
  }
};

}  // namespace renderdetail

// Rasterizes the geometric model at high resolution. The central structure
// sits at the grid center and paints over neighbors, which paint over
// chest-wall caps and the background. Skew is rendered as an anisotropic
// stretch of the whole scene along x; labels describe the unstretched
// cross-section.
inline ImageGrid render_high_res(const StructureModel& model, Rng& texture_rng,
                                 const RenderOptions& opt = {}) {
  using renderdetail::PreparedEllipse;
  const int n = opt.grid_px;
  const double s = opt.spacing_mm;
  const double half_extent = 0.5 * n * s;

  ImageGrid img = opt.texture ? parenchyma_texture(n, s, opt, texture_rng)
                              : ImageGrid(n, n, s, opt.parenchyma_mean_hu);

  // Sampling a stretched scene at (x, y) is sampling the model at (x/f, y).
  const double inv_stretch = std::cos(deg_to_rad(model.skew_deg));

  const bool is_airway = model.kind == StructureKind::airway;
  const PreparedEllipse inner(model.central_inner());
  const PreparedEllipse outer(model.central_outer());
  struct PreparedNeighbor {
    PreparedEllipse inner;
    PreparedEllipse outer;
    bool is_airway;
    double wall_intensity;
  };
  std::vector<PreparedNeighbor> neighbors;
  neighbors.reserve(model.neighbors.size());
  for (const NeighborSpec& nb : model.neighbors)
    neighbors.push_back({PreparedEllipse(nb.inner), PreparedEllipse(nb.outer()),
                         nb.kind == StructureKind::airway, nb.wall_intensity_hu});

  for (int r = 0; r < n; ++r) {
    const double y = (r + 0.5) * s - half_extent;
    for (int c = 0; c < n; ++c) {
      const double x = ((c + 0.5) * s - half_extent) * inv_stretch;
      if (inner.contains(x, y)) {
        img.at(r, c) = inner.intensity;
        continue;
      }
      if (is_airway && outer.contains(x, y)) {
        img.at(r, c) = outer.intensity;
        continue;
      }
      bool painted = false;
      for (const PreparedNeighbor& nb : neighbors) {
        if (nb.inner.contains(x, y)) {
          img.at(r, c) = nb.inner.intensity;
          painted = true;
          break;
        }
        if (nb.is_airway && nb.outer.contains(x, y)) {
          img.at(r, c) = nb.wall_intensity;
          painted = true;
          break;
        }
      }
      if (painted) continue;
      for (const ChestWallRegion& cw : model.chest_wall) {
        if (cw.contains(x, y)) {
          img.at(r, c) = cw.intensity_hu;
          break;
        }
      }
    }
  }
  return img;
}

}  // namespace subvox
