#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace subvox {

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }

enum class StructureKind { airway, vessel };

inline const char* to_string(StructureKind k) {
  return k == StructureKind::airway ? "airway" : "vessel";
}

// Nominal radius of an ellipse from its maximum and minimum diameters:
// the geometric mean of the two semi-axes.
inline double nominal_radius(double d_max_mm, double d_min_mm) {
  if (d_min_mm <= 0.0 || d_max_mm <= 0.0)
    throw std::invalid_argument("nominal_radius: diameters must be positive");
  if (d_max_mm < d_min_mm)
    throw std::invalid_argument("nominal_radius: d_max < d_min");
  return std::sqrt((d_max_mm / 2.0) * (d_min_mm / 2.0));
}

struct EllipseSpec {
  double center_x_mm = 0.0;
  double center_y_mm = 0.0;
  double semi_major_mm = 1.0;
  double semi_minor_mm = 1.0;
  double rotation_deg = 0.0;  // in [-180, 180)
  double intensity_hu = 0.0;

  bool contains(double x_mm, double y_mm) const {
    const double c = std::cos(deg_to_rad(rotation_deg));
    const double s = std::sin(deg_to_rad(rotation_deg));
    const double dx = x_mm - center_x_mm;
    const double dy = y_mm - center_y_mm;
    const double u = (dx * c + dy * s) / semi_major_mm;
    const double v = (-dx * s + dy * c) / semi_minor_mm;
    return u * u + v * v <= 1.0;
  }

  // Distance from the center to the boundary along a world-frame direction.
  double radial_extent(double direction_deg) const {
    const double phi = deg_to_rad(direction_deg - rotation_deg);
    const double a = semi_major_mm;
    const double b = semi_minor_mm;
    const double bc = b * std::cos(phi);
    const double as = a * std::sin(phi);
    return a * b / std::sqrt(bc * bc + as * as);
  }

  EllipseSpec grown(double margin_mm) const {
    EllipseSpec e = *this;
    e.semi_major_mm += margin_mm;
    e.semi_minor_mm += margin_mm;
    return e;
  }
};

// One curved bright cap intruding at a patch corner or border, produced by a
// large disk whose center lies outside the patch.
struct ChestWallRegion {
  double center_x_mm = 0.0;
  double center_y_mm = 0.0;
  double radius_mm = 0.0;
  double intensity_hu = 0.0;

  bool contains(double x_mm, double y_mm) const {
    const double dx = x_mm - center_x_mm;
    const double dy = y_mm - center_y_mm;
    return dx * dx + dy * dy <= radius_mm * radius_mm;
  }
};

struct NeighborSpec {
  StructureKind kind = StructureKind::vessel;
  // Lumen/vessel ellipse; its intensity is the interior HU value.
  EllipseSpec inner;
  // Airway neighbors only.
  double wall_thickness_mm = 0.0;
  double wall_intensity_hu = 0.0;
  bool tangent = false;

  EllipseSpec outer() const {
    return kind == StructureKind::airway ? inner.grown(wall_thickness_mm) : inner;
  }
};

// Ground-truth description of one centered structure plus its confounders.
// lumen_radius_mm is the nominal radius and, with wall_thickness_mm, the
// label source; everything else is label-neutral.
struct StructureModel {
  StructureKind kind = StructureKind::vessel;
  double lumen_radius_mm = 1.0;
  double wall_thickness_mm = 0.0;  // airways only
  double axis_ratio = 1.0;         // semi_minor / semi_major
  double skew_deg = 0.0;
  double central_rotation_deg = 0.0;
  double lumen_intensity_hu = -1100.0;
  double wall_intensity_hu = -200.0;
  double vessel_intensity_hu = 0.0;
  std::vector<NeighborSpec> neighbors;
  std::vector<ChestWallRegion> chest_wall;

  // Central lumen/vessel ellipse. Semi-axes are chosen so the nominal radius
  // equals lumen_radius_mm for any axis ratio.
  EllipseSpec central_inner() const {
    EllipseSpec e;
    e.semi_major_mm = lumen_radius_mm / std::sqrt(axis_ratio);
    e.semi_minor_mm = lumen_radius_mm * std::sqrt(axis_ratio);
    e.rotation_deg = central_rotation_deg;
    e.intensity_hu = kind == StructureKind::airway ? lumen_intensity_hu : vessel_intensity_hu;
    return e;
  }

  // Outer wall boundary: the inner ellipse with both semi-axes grown by the
  // wall thickness.
  EllipseSpec central_outer() const {
    EllipseSpec e = central_inner().grown(kind == StructureKind::airway ? wall_thickness_mm : 0.0);
    e.intensity_hu = wall_intensity_hu;
    return e;
  }
};

}  // namespace subvox
