#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "subvox/geometry.hpp"

namespace subvox {

// Accuracy + precision loss. Arrays are patch-major with one value per
// output head: element (p, h) lives at p * n_heads + h. Replica groups are
// contiguous blocks of m patches sharing identical labels.
struct LossWeights {
  double lambda = 2.0;
};

// Small structures get a heavier precision penalty; thresholds compare the
// ground-truth size.
inline double omega_vessel(double true_radius_mm) { return true_radius_mm < 1.0 ? 3.0 : 1.0; }
inline double omega_lumen(double true_lumen_mm) { return true_lumen_mm < 1.0 ? 1.5 : 1.0; }
inline double omega_wall(double true_wall_mm) { return true_wall_mm < 1.0 ? 3.0 : 1.0; }

namespace lossdetail {

inline void check_sizes(std::span<const double> y, std::span<const double> y_hat, int n_heads) {
  if (y.size() != y_hat.size() || n_heads <= 0 || y.size() % static_cast<std::size_t>(n_heads) != 0)
    throw std::invalid_argument("loss: size mismatch");
}

}  // namespace lossdetail

// Mean relative absolute error over all patches; for airways the lumen and
// wall terms are summed.
inline double loss_mu(std::span<const double> y, std::span<const double> y_hat, int n_heads = 1) {
  lossdetail::check_sizes(y, y_hat, n_heads);
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(y[i] > 0.0)) throw std::invalid_argument("loss_mu: labels must be positive");
    acc += std::abs(y[i] - y_hat[i]) / y[i];
  }
  const double n_patches = static_cast<double>(y.size() / static_cast<std::size_t>(n_heads));
  return acc / n_patches;
}

// Precision term for one head: the population variance of the error within
// each replica group, averaged over groups.
inline double loss_sigma(std::span<const double> y, std::span<const double> y_hat, int m_replicas,
                         int n_heads = 1, int head = 0) {
  lossdetail::check_sizes(y, y_hat, n_heads);
  const std::size_t n_patches = y.size() / static_cast<std::size_t>(n_heads);
  if (m_replicas < 1 || n_patches % static_cast<std::size_t>(m_replicas) != 0)
    throw std::invalid_argument("loss_sigma: incomplete replica group");
  const std::size_t n_groups = n_patches / static_cast<std::size_t>(m_replicas);
  double acc = 0.0;
  for (std::size_t g = 0; g < n_groups; ++g) {
    double sum_e = 0.0, sum_e2 = 0.0;
    for (int j = 0; j < m_replicas; ++j) {
      const std::size_t idx = (g * m_replicas + j) * n_heads + head;
      const double e = y[idx] - y_hat[idx];
      sum_e += e;
      sum_e2 += e * e;
    }
    const double mean_e = sum_e / m_replicas;
    acc += sum_e2 / m_replicas - mean_e * mean_e;
  }
  return acc / static_cast<double>(n_groups);
}

struct LossReport {
  double total = 0.0;
  double mu = 0.0;
  double lambda = 0.0;
  std::vector<double> sigma;           // per head, unweighted
  std::vector<double> sigma_weighted;  // per head, (1/N) sum_g omega_g * var_g
};

// Combined loss: vessels L_mu + lambda * omega_v * L_sigma; airways
// L_mu + lambda * (omega_l * L_sigma_lumen + omega_wt * L_sigma_wall), with
// the omega factor of each replica group chosen by its true size.
inline LossReport total_loss(std::span<const double> y, std::span<const double> y_hat,
                             int m_replicas, StructureKind kind, const LossWeights& lw = {}) {
  const int n_heads = kind == StructureKind::airway ? 2 : 1;
  lossdetail::check_sizes(y, y_hat, n_heads);
  const std::size_t n_patches = y.size() / static_cast<std::size_t>(n_heads);
  if (m_replicas < 1 || n_patches % static_cast<std::size_t>(m_replicas) != 0)
    throw std::invalid_argument("total_loss: incomplete replica group");
  const std::size_t n_groups = n_patches / static_cast<std::size_t>(m_replicas);

  LossReport rep;
  rep.lambda = lw.lambda;
  rep.mu = loss_mu(y, y_hat, n_heads);
  rep.sigma.assign(static_cast<std::size_t>(n_heads), 0.0);
  rep.sigma_weighted.assign(static_cast<std::size_t>(n_heads), 0.0);

  for (int h = 0; h < n_heads; ++h) {
    double acc = 0.0, acc_w = 0.0;
    for (std::size_t g = 0; g < n_groups; ++g) {
      double sum_e = 0.0, sum_e2 = 0.0;
      for (int j = 0; j < m_replicas; ++j) {
        const std::size_t idx = (g * m_replicas + j) * n_heads + h;
        const double e = y[idx] - y_hat[idx];
        sum_e += e;
        sum_e2 += e * e;
      }
      const double mean_e = sum_e / m_replicas;
      const double var = sum_e2 / m_replicas - mean_e * mean_e;
      const double true_size = y[g * m_replicas * n_heads + h];
      const double omega = kind == StructureKind::vessel
                               ? omega_vessel(true_size)
                               : (h == 0 ? omega_lumen(true_size) : omega_wall(true_size));
      acc += var;
      acc_w += omega * var;
    }
    rep.sigma[static_cast<std::size_t>(h)] = acc / static_cast<double>(n_groups);
    rep.sigma_weighted[static_cast<std::size_t>(h)] = acc_w / static_cast<double>(n_groups);
  }

  double sigma_sum = 0.0;
  for (double sw : rep.sigma_weighted) sigma_sum += sw;
  rep.total = rep.mu + rep.lambda * sigma_sum;
  return rep;
}

// Analytic dLoss/dy_hat. The |.| subgradient at the kink is zero.
inline std::vector<double> loss_gradient(std::span<const double> y, std::span<const double> y_hat,
                                         int m_replicas, StructureKind kind,
                                         const LossWeights& lw = {}) {
  const int n_heads = kind == StructureKind::airway ? 2 : 1;
  lossdetail::check_sizes(y, y_hat, n_heads);
  const std::size_t n_patches = y.size() / static_cast<std::size_t>(n_heads);
  if (m_replicas < 1 || n_patches % static_cast<std::size_t>(m_replicas) != 0)
    throw std::invalid_argument("loss_gradient: incomplete replica group");
  const std::size_t n_groups = n_patches / static_cast<std::size_t>(m_replicas);

  std::vector<double> grad(y.size(), 0.0);
  const double inv_nm = 1.0 / static_cast<double>(n_patches);
  const double inv_n = 1.0 / static_cast<double>(n_groups);

  for (int h = 0; h < n_heads; ++h) {
    for (std::size_t g = 0; g < n_groups; ++g) {
      double sum_e = 0.0;
      for (int j = 0; j < m_replicas; ++j) {
        const std::size_t idx = (g * m_replicas + j) * n_heads + h;
        sum_e += y[idx] - y_hat[idx];
      }
      const double mean_e = sum_e / m_replicas;
      const double true_size = y[g * m_replicas * n_heads + h];
      const double omega = kind == StructureKind::vessel
                               ? omega_vessel(true_size)
                               : (h == 0 ? omega_lumen(true_size) : omega_wall(true_size));
      for (int j = 0; j < m_replicas; ++j) {
        const std::size_t idx = (g * m_replicas + j) * n_heads + h;
        if (!(y[idx] > 0.0)) throw std::invalid_argument("loss_gradient: labels must be positive");
        const double e = y[idx] - y_hat[idx];
        const double sign = e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0);
        // d/dy_hat of |e|/y is -sign(e)/y; of the group variance it is
        // -(2/M) (e - mean_e).
        grad[idx] = -sign / y[idx] * inv_nm +
                    lw.lambda * omega * inv_n * (-2.0 / m_replicas) * (e - mean_e);
      }
    }
  }
  return grad;
}

}  // namespace subvox
