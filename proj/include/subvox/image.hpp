#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "subvox/rng.hpp"

namespace subvox {

// 2-D scalar field in HU with a physical pixel spacing (mm/px), row-major.
struct ImageGrid {
  int width = 0;
  int height = 0;
  double spacing_mm = 0.0;
  std::vector<double> values;

  ImageGrid() = default;
  ImageGrid(int w, int h, double spacing, double fill = 0.0)
      : width(w), height(h), spacing_mm(spacing),
        values(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int row, int col) { return values[static_cast<std::size_t>(row) * width + col]; }
  double at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }

  double mean() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
  }
};

// Mirror index into [0, n) about the half-sample edges (-1 -> 0, n -> n-1).
inline int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

// Normalized 1-D Gaussian kernel sampled at integer offsets, truncated at 4
// sigma. Empty result means identity.
inline std::vector<double> gaussian_kernel(double sigma_px) {
  if (sigma_px <= 0.0) return {};
  const int radius = static_cast<int>(std::ceil(4.0 * sigma_px));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * (i / sigma_px) * (i / sigma_px));
    k[static_cast<std::size_t>(i + radius)] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;
  return k;
}

// Separable Gaussian blur, reflective boundaries. One line at a time: pad
// the line into a scratch buffer so the accumulation loop runs without
// boundary branches.
inline ImageGrid gaussian_blur(const ImageGrid& img, double sigma_px) {
  const std::vector<double> kernel = gaussian_kernel(sigma_px);
  if (kernel.empty()) return img;
  const int radius = (static_cast<int>(kernel.size()) - 1) / 2;

  auto blur_line = [&](const double* src, int n, int stride, std::vector<double>& padded,
                       double* dst, int dst_stride) {
    padded.resize(static_cast<std::size_t>(n + 2 * radius));
    for (int i = -radius; i < n + radius; ++i)
      padded[static_cast<std::size_t>(i + radius)] =
          src[static_cast<std::size_t>(reflect_index(i, n)) * stride];
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      const double* p = padded.data() + i;
      for (std::size_t t = 0; t < kernel.size(); ++t) acc += kernel[t] * p[t];
      dst[static_cast<std::size_t>(i) * dst_stride] = acc;
    }
  };

  ImageGrid tmp = img;
  std::vector<double> padded;
  for (int r = 0; r < img.height; ++r)
    blur_line(&img.values[static_cast<std::size_t>(r) * img.width], img.width, 1, padded,
              &tmp.values[static_cast<std::size_t>(r) * img.width], 1);
  ImageGrid out = tmp;
  for (int c = 0; c < img.width; ++c)
    blur_line(&tmp.values[static_cast<std::size_t>(c)], img.height, img.width, padded,
              &out.values[static_cast<std::size_t>(c)], img.width);
  return out;
}

// Block-mean down-sampling by an integer factor (0.05 mm/px -> 0.5 mm/px at
// factor 10). Each output pixel is the arithmetic mean of its source block.
inline ImageGrid downsample(const ImageGrid& img, int factor = 10) {
  if (factor <= 0 || img.width % factor != 0 || img.height % factor != 0)
    throw std::invalid_argument("downsample: dimensions not divisible by factor " +
                                std::to_string(factor));
  ImageGrid out(img.width / factor, img.height / factor, img.spacing_mm * factor);
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int r = 0; r < out.height; ++r)
    for (int c = 0; c < out.width; ++c) {
      double acc = 0.0;
      for (int dr = 0; dr < factor; ++dr)
        for (int dc = 0; dc < factor; ++dc)
          acc += img.at(r * factor + dr, c * factor + dc);
      out.at(r, c) = acc * inv;
    }
  return out;
}

// Scanner blur: spatially invariant Gaussian with sigma given in mm.
inline ImageGrid apply_psf(const ImageGrid& img, double psf_sigma_mm) {
  if (psf_sigma_mm < 0.0) throw std::invalid_argument("apply_psf: negative sigma");
  if (psf_sigma_mm == 0.0) return img;
  return gaussian_blur(img, psf_sigma_mm / img.spacing_mm);
}

// Adds a zero-mean correlated noise field: white Gaussian noise smoothed with
// smooth_sigma_px, then recentred and rescaled so the delivered field has
// exactly the requested standard deviation.
inline ImageGrid add_smoothed_noise(const ImageGrid& img, double noise_sigma_hu,
                                    double smooth_sigma_px, Rng& rng) {
  if (noise_sigma_hu < 0.0) throw std::invalid_argument("add_smoothed_noise: negative sigma");
  if (noise_sigma_hu == 0.0) return img;
  ImageGrid field(img.width, img.height, img.spacing_mm);
  for (double& v : field.values) v = rng.normal();
  field = gaussian_blur(field, smooth_sigma_px);
  double mean = 0.0;
  for (double v : field.values) mean += v;
  mean /= static_cast<double>(field.values.size());
  double var = 0.0;
  for (double v : field.values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(field.values.size());
  const double scale = noise_sigma_hu / std::sqrt(var);
  ImageGrid out = img;
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] += (field.values[i] - mean) * scale;
  return out;
}

// Central crop. For a 64x64 input the window starts at offset (16, 16).
inline ImageGrid crop_center(const ImageGrid& img, int out_size = 32) {
  if (img.width < out_size || img.height < out_size)
    throw std::invalid_argument("crop_center: input smaller than crop window");
  const int r0 = (img.height - out_size) / 2;
  const int c0 = (img.width - out_size) / 2;
  ImageGrid out(out_size, out_size, img.spacing_mm);
  for (int r = 0; r < out_size; ++r)
    for (int c = 0; c < out_size; ++c) out.at(r, c) = img.at(r0 + r, c0 + c);
  return out;
}

}  // namespace subvox
