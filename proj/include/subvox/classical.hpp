#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "subvox/geometry.hpp"
#include "subvox/profile.hpp"

namespace subvox {

// Measurement tuning shared by FWHM and ZCSD. Rays are dense enough for the
// 2% rotation tolerance; the quorum keeps aggregates meaningful when tangent
// vessels corrupt a minority of rays.
namespace measure_params {
inline constexpr int n_rays = 64;
inline constexpr double step_mm = 0.1;
inline constexpr int quorum = 32;
inline constexpr double trim_fraction = 0.2;       // trimmed from each end
inline constexpr double zcsd_sigma_mm = 0.3;       // derivative scale
inline constexpr double background_window_mm = 1.0;
inline constexpr double plateau_fraction = 0.4;    // of the first-peak distance
inline constexpr double peak_prominence = 0.25;    // of the center-to-max contrast
}  // namespace measure_params

struct RayDiagnostic {
  double angle_deg = 0.0;
  bool valid = false;
  double inner_mm = 0.0;  // lumen edge (airway) or vessel edge
  double outer_mm = 0.0;  // outer wall edge, airways only
};

struct MeasurementResult {
  std::optional<double> lumen_radius_mm;
  std::optional<double> wall_thickness_mm;
  int n_valid_rays = 0;
  int n_rays = 0;
  std::vector<RayDiagnostic> per_ray;

  bool has_measurement() const { return lumen_radius_mm.has_value(); }
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double trimmed_mean(std::vector<double> v, double trim_each_end) {
  std::sort(v.begin(), v.end());
  const std::size_t k = static_cast<std::size_t>(trim_each_end * static_cast<double>(v.size()));
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = k; i + k < v.size(); ++i, ++n) s += v[i];
  return n > 0 ? s / static_cast<double>(n) : 0.0;
}

inline double median_range(const std::vector<double>& s, std::size_t lo, std::size_t hi_excl) {
  hi_excl = std::min(hi_excl, s.size());
  if (lo >= hi_excl) return s.empty() ? 0.0 : s[std::min(lo, s.size() - 1)];
  return median(std::vector<double>(s.begin() + static_cast<std::ptrdiff_t>(lo),
                                    s.begin() + static_cast<std::ptrdiff_t>(hi_excl)));
}

// Median of the last `window_mm` of the profile.
inline double tail_level(const RadialProfile& p, double window_mm) {
  const std::size_t n = p.samples.size();
  const std::size_t w = std::max<std::size_t>(1, static_cast<std::size_t>(window_mm / p.step_mm));
  return median_range(p.samples, n > w ? n - w : 0, n);
}

// First index k >= from where the profile rises through `level`; returns the
// sub-sample crossing position, in samples.
inline std::optional<double> first_upward_crossing(const std::vector<double>& s, double level,
                                                   std::size_t from, std::size_t to_excl) {
  to_excl = std::min(to_excl, s.size());
  for (std::size_t k = from; k + 1 < to_excl; ++k) {
    if (s[k] <= level && s[k + 1] > level) {
      const double denom = s[k + 1] - s[k];
      return static_cast<double>(k) + (level - s[k]) / denom;
    }
  }
  return std::nullopt;
}

inline std::optional<double> first_downward_crossing(const std::vector<double>& s, double level,
                                                     std::size_t from, std::size_t to_excl) {
  to_excl = std::min(to_excl, s.size());
  for (std::size_t k = from; k + 1 < to_excl; ++k) {
    if (s[k] >= level && s[k + 1] < level) {
      const double denom = s[k + 1] - s[k];
      return static_cast<double>(k) + (level - s[k]) / denom;
    }
  }
  return std::nullopt;
}

// First local maximum at or above `min_value`, scanning outward.
inline std::optional<std::size_t> first_peak(const std::vector<double>& s, std::size_t from,
                                             double min_value) {
  for (std::size_t k = std::max<std::size_t>(from, 1); k + 1 < s.size(); ++k) {
    if (s[k] >= s[k - 1] && s[k] > s[k + 1] && s[k] >= min_value) return k;
  }
  return std::nullopt;
}

// Gaussian-derivative responses of a profile, replicated boundaries. The
// zeroth/first/second order kernels share the 4-sigma truncation.
struct DerivativeProfiles {
  std::vector<double> smooth;
  std::vector<double> d1;
  std::vector<double> d2;
};

inline DerivativeProfiles gaussian_derivatives(const std::vector<double>& s, double sigma_samples) {
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma_samples)));
  const int w = 2 * radius + 1;
  std::vector<double> g0(static_cast<std::size_t>(w)), g1(static_cast<std::size_t>(w)),
      g2(static_cast<std::size_t>(w));
  const double s2 = sigma_samples * sigma_samples;
  double sum0 = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double g = std::exp(-0.5 * i * i / s2);
    g0[static_cast<std::size_t>(i + radius)] = g;
    g1[static_cast<std::size_t>(i + radius)] = i * g;
    g2[static_cast<std::size_t>(i + radius)] = (i * i - s2) * g;
    sum0 += g;
  }
  for (double& v : g0) v /= sum0;
  // Antisymmetry makes g1 kill constants; recentre g2 so it does too.
  double mean2 = 0.0;
  for (double v : g2) mean2 += v;
  mean2 /= w;
  for (double& v : g2) v -= mean2;

  const int n = static_cast<int>(s.size());
  auto sample = [&](int k) { return s[static_cast<std::size_t>(std::clamp(k, 0, n - 1))]; };
  DerivativeProfiles out;
  out.smooth.resize(s.size());
  out.d1.resize(s.size());
  out.d2.resize(s.size());
  for (int k = 0; k < n; ++k) {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0;
    for (int i = -radius; i <= radius; ++i) {
      const double v = sample(k + i);
      a0 += g0[static_cast<std::size_t>(i + radius)] * v;
      a1 += g1[static_cast<std::size_t>(i + radius)] * v;
      a2 += g2[static_cast<std::size_t>(i + radius)] * v;
    }
    out.smooth[static_cast<std::size_t>(k)] = a0;
    out.d1[static_cast<std::size_t>(k)] = a1;
    out.d2[static_cast<std::size_t>(k)] = a2;
  }
  return out;
}

// Zero crossing of d2 nearest to `near`, searched within [lo, hi); linear
// root interpolation between the bracketing samples.
inline std::optional<double> zero_crossing_near(const std::vector<double>& d2, std::size_t near,
                                                std::size_t lo, std::size_t hi_excl) {
  hi_excl = std::min(hi_excl, d2.size());
  std::optional<double> best;
  double best_dist = 0.0;
  for (std::size_t k = lo; k + 1 < hi_excl; ++k) {
    const double a = d2[k];
    const double b = d2[k + 1];
    if ((a > 0.0 && b <= 0.0) || (a < 0.0 && b >= 0.0)) {
      const double root = static_cast<double>(k) + a / (a - b);
      const double dist = std::abs(root - static_cast<double>(near));
      if (!best || dist < best_dist) {
        best = root;
        best_dist = dist;
      }
    }
  }
  return best;
}

template <typename RayFn>
MeasurementResult measure_over_rays(const ImageGrid& patch, bool wants_wall, RayFn&& per_ray) {
  using namespace measure_params;
  MeasurementResult res;
  res.n_rays = n_rays;
  std::vector<double> inner, wall;
  for (int i = 0; i < n_rays; ++i) {
    const double angle = 360.0 * i / n_rays;
    RadialProfile prof = radial_profile(patch, angle, step_mm);
    RayDiagnostic diag;
    diag.angle_deg = angle;
    per_ray(prof, diag);
    if (diag.valid) {
      inner.push_back(diag.inner_mm);
      if (wants_wall) wall.push_back(diag.outer_mm - diag.inner_mm);
      ++res.n_valid_rays;
    }
    res.per_ray.push_back(diag);
  }
  if (res.n_valid_rays >= quorum) {
    res.lumen_radius_mm = trimmed_mean(inner, trim_fraction);
    if (wants_wall) res.wall_thickness_mm = trimmed_mean(wall, trim_fraction);
  }
  return res;
}

}  // namespace detail

// FWHM for a bright centered structure: per ray, the edge is the first
// outward position where intensity falls to (plateau + background) / 2.
inline MeasurementResult fwhm_vessel(const ImageGrid& patch) {
  using namespace measure_params;
  return detail::measure_over_rays(patch, /*wants_wall=*/false,
                                   [](const RadialProfile& prof, RayDiagnostic& diag) {
    const std::vector<double>& s = prof.samples;
    if (s.size() < 8) return;
    const double bg = detail::tail_level(prof, background_window_mm);
    if (!(s[0] > bg)) return;  // needs a bright center
    const auto d0 = detail::first_downward_crossing(s, 0.5 * (s[0] + bg), 0, s.size());
    if (!d0) return;
    const std::size_t plateau_end =
        std::max<std::size_t>(1, static_cast<std::size_t>(plateau_fraction * *d0));
    const double plateau = detail::median_range(s, 0, plateau_end + 1);
    if (!(plateau > bg)) return;
    const auto edge = detail::first_downward_crossing(s, 0.5 * (plateau + bg), 0, s.size());
    if (!edge) return;
    diag.valid = true;
    diag.inner_mm = *edge * prof.step_mm;
  });
}

// FWHM for an airway: inner edge at the half-rise from the lumen level to the
// first prominent wall peak, outer edge at the half-fall from that peak to
// the parenchyma level. Rays without an outer fall (e.g. through a tangent
// vessel) are dropped.
inline MeasurementResult fwhm_airway(const ImageGrid& patch) {
  using namespace measure_params;
  return detail::measure_over_rays(patch, /*wants_wall=*/true,
                                   [](const RadialProfile& prof, RayDiagnostic& diag) {
    const std::vector<double>& s = prof.samples;
    if (s.size() < 8) return;
    const double bg = detail::tail_level(prof, background_window_mm);
    if (!(s[0] < bg)) return;  // needs a dark lumen
    const double gmax = *std::max_element(s.begin(), s.end());
    if (!(gmax > bg)) return;
    const double min_peak = s[0] + peak_prominence * (gmax - s[0]);
    const auto peak = detail::first_peak(s, 1, min_peak);
    if (!peak) return;
    const double peak_value = s[*peak];
    const std::size_t plateau_end = std::max<std::size_t>(
        1, static_cast<std::size_t>(plateau_fraction * static_cast<double>(*peak)));
    const double lumen_level = detail::median_range(s, 0, plateau_end + 1);
    if (!(peak_value > lumen_level)) return;
    const auto inner = detail::first_upward_crossing(s, 0.5 * (lumen_level + peak_value), 0, *peak + 1);
    if (!inner) return;
    const auto outer = detail::first_downward_crossing(s, 0.5 * (peak_value + bg), *peak, s.size());
    if (!outer || !(*outer > *inner)) return;
    diag.valid = true;
    diag.inner_mm = *inner * prof.step_mm;
    diag.outer_mm = *outer * prof.step_mm;
  });
}

// ZCSD for an airway: edges sit at the zero crossings of the second
// Gaussian-derivative response nearest the maximum-|gradient| locations of
// the rise and the fall around the first prominent wall peak.
inline MeasurementResult zcsd_airway(const ImageGrid& patch) {
  using namespace measure_params;
  return detail::measure_over_rays(patch, /*wants_wall=*/true,
                                   [](const RadialProfile& prof, RayDiagnostic& diag) {
    const std::vector<double>& s = prof.samples;
    if (s.size() < 8) return;
    const auto d = detail::gaussian_derivatives(s, zcsd_sigma_mm / prof.step_mm);
    const std::vector<double>& f = d.smooth;
    const double bg = detail::tail_level(prof, background_window_mm);
    if (!(f[0] < bg)) return;
    const double gmax = *std::max_element(f.begin(), f.end());
    if (!(gmax > bg)) return;
    const auto peak = detail::first_peak(f, 1, f[0] + peak_prominence * (gmax - f[0]));
    if (!peak) return;

    std::size_t k_rise = 1;
    for (std::size_t k = 1; k <= *peak; ++k)
      if (d.d1[k] > d.d1[k_rise]) k_rise = k;
    if (!(d.d1[k_rise] > 0.0)) return;
    std::size_t k_fall = *peak;
    for (std::size_t k = *peak; k < s.size(); ++k)
      if (d.d1[k] < d.d1[k_fall]) k_fall = k;
    if (!(d.d1[k_fall] < 0.0)) return;

    const auto inner = detail::zero_crossing_near(d.d2, k_rise, 0, *peak + 1);
    const auto outer = detail::zero_crossing_near(d.d2, k_fall, *peak, s.size());
    if (!inner || !outer || !(*outer > *inner)) return;
    diag.valid = true;
    diag.inner_mm = *inner * prof.step_mm;
    diag.outer_mm = *outer * prof.step_mm;
  });
}

// ZCSD for a bright vessel: single falling edge.
inline MeasurementResult zcsd_vessel(const ImageGrid& patch) {
  using namespace measure_params;
  return detail::measure_over_rays(patch, /*wants_wall=*/false,
                                   [](const RadialProfile& prof, RayDiagnostic& diag) {
    const std::vector<double>& s = prof.samples;
    if (s.size() < 8) return;
    const auto d = detail::gaussian_derivatives(s, zcsd_sigma_mm / prof.step_mm);
    const double bg = detail::tail_level(prof, background_window_mm);
    if (!(d.smooth[0] > bg)) return;
    std::size_t k_fall = 1;
    for (std::size_t k = 1; k < s.size(); ++k)
      if (d.d1[k] < d.d1[k_fall]) k_fall = k;
    if (!(d.d1[k_fall] < 0.0)) return;
    const auto edge = detail::zero_crossing_near(d.d2, k_fall, 0, s.size());
    if (!edge) return;
    diag.valid = true;
    diag.inner_mm = *edge * prof.step_mm;
  });
}

}  // namespace subvox
