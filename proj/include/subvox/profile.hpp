#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "subvox/geometry.hpp"
#include "subvox/image.hpp"

namespace subvox {

// Bilinear sample at continuous pixel coordinates (pixel centers at integer
// positions). Empty outside [0, w-1] x [0, h-1].
inline std::optional<double> bilinear_at(const ImageGrid& img, double x_px, double y_px) {
  if (x_px < 0.0 || y_px < 0.0 || x_px > img.width - 1 || y_px > img.height - 1)
    return std::nullopt;
  int x0 = static_cast<int>(std::floor(x_px));
  int y0 = static_cast<int>(std::floor(y_px));
  if (x0 == img.width - 1) --x0;
  if (y0 == img.height - 1) --y0;
  const double fx = x_px - x0;
  const double fy = y_px - y0;
  const double v00 = img.at(y0, x0);
  const double v01 = img.at(y0, x0 + 1);
  const double v10 = img.at(y0 + 1, x0);
  const double v11 = img.at(y0 + 1, x0 + 1);
  return (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11);
}

// Intensity samples from the patch center outward along one direction.
struct RadialProfile {
  double angle_deg = 0.0;
  double step_mm = 0.1;
  std::vector<double> samples;  // samples[k] at distance k * step_mm

  double distance_mm(std::size_t k) const { return static_cast<double>(k) * step_mm; }
};

// Casts a ray from the patch center; sampling stops at the first
// out-of-bounds position.
inline RadialProfile radial_profile(const ImageGrid& patch, double angle_deg,
                                    double step_mm = 0.1) {
  RadialProfile prof;
  prof.angle_deg = angle_deg;
  prof.step_mm = step_mm;
  const double cx = (patch.width - 1) / 2.0;
  const double cy = (patch.height - 1) / 2.0;
  // angle and angle + 360 must cast bit-identical rays
  double wrapped = std::fmod(angle_deg, 360.0);
  if (wrapped < 0.0) wrapped += 360.0;
  const double a = wrapped * kPi / 180.0;
  const double dx = std::cos(a) * step_mm / patch.spacing_mm;
  const double dy = std::sin(a) * step_mm / patch.spacing_mm;
  for (std::size_t k = 0;; ++k) {
    const auto v = bilinear_at(patch, cx + k * dx, cy + k * dy);
    if (!v) break;
    prof.samples.push_back(*v);
  }
  return prof;
}

}  // namespace subvox
