#pragma once

#include <algorithm>

#include "subvox/image.hpp"
#include "subvox/rng.hpp"

namespace subvox {

// Label-preserving patch augmentations.
struct AugmentConfig {
  double p_noise = 0.5;
  double noise_sigma_lo_hu = 1.0;
  double noise_sigma_hi_hu = 20.0;
  double p_invert = 0.2;
  double p_shift = 0.5;
  double p_flip = 0.5;  // applied independently to each axis
};

inline void add_gaussian_noise(ImageGrid& patch, double sigma_hu, Rng& rng) {
  for (double& v : patch.values) v += rng.normal(0.0, sigma_hu);
}

// Reflects intensities about the patch mean, which keeps the mean itself.
inline void invert_about_mean(ImageGrid& patch) {
  const double m = patch.mean();
  for (double& v : patch.values) v = 2.0 * m - v;
}

// Integer shift with replicated borders; |dx|, |dy| <= 1.
inline void shift_patch(ImageGrid& patch, int dx, int dy) {
  if (dx == 0 && dy == 0) return;
  ImageGrid src = patch;
  for (int r = 0; r < patch.height; ++r)
    for (int c = 0; c < patch.width; ++c) {
      const int sr = std::clamp(r - dy, 0, patch.height - 1);
      const int sc = std::clamp(c - dx, 0, patch.width - 1);
      patch.at(r, c) = src.at(sr, sc);
    }
}

inline void flip_horizontal(ImageGrid& patch) {
  for (int r = 0; r < patch.height; ++r)
    for (int c = 0; c < patch.width / 2; ++c)
      std::swap(patch.at(r, c), patch.at(r, patch.width - 1 - c));
}

inline void flip_vertical(ImageGrid& patch) {
  for (int r = 0; r < patch.height / 2; ++r)
    for (int c = 0; c < patch.width; ++c)
      std::swap(patch.at(r, c), patch.at(patch.height - 1 - r, c));
}

inline ImageGrid augment(const ImageGrid& patch, const AugmentConfig& cfg, Rng& rng) {
  ImageGrid out = patch;
  if (rng.bernoulli(cfg.p_noise))
    add_gaussian_noise(out, rng.uniform(cfg.noise_sigma_lo_hu, cfg.noise_sigma_hi_hu), rng);
  if (rng.bernoulli(cfg.p_invert)) invert_about_mean(out);
  if (rng.bernoulli(cfg.p_shift)) shift_patch(out, rng.uniform_int(-1, 1), rng.uniform_int(-1, 1));
  if (rng.bernoulli(cfg.p_flip)) flip_horizontal(out);
  if (rng.bernoulli(cfg.p_flip)) flip_vertical(out);
  return out;
}

}  // namespace subvox
