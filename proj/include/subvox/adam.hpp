#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "subvox/net.hpp"

namespace subvox {

struct AdamParams {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m, v;  // first/second moments, network layout
  std::int64_t step_count = 0;

  AdamState() = default;
  explicit AdamState(Network<T>& net) {
    net.for_each_buffer([&](std::vector<T>& buf) {
      m.emplace_back(buf.size(), T(0));
      v.emplace_back(buf.size(), T(0));
    });
  }
};

// Standard bias-corrected Adam update.
template <typename T>
void adam_step(Network<T>& net, NetGradients<T>& grads, AdamState<T>& state,
               const AdamParams& p = {}) {
  ++state.step_count;
  const double bc1 = 1.0 - std::pow(p.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(p.beta2, static_cast<double>(state.step_count));

  std::vector<std::vector<T>*> params, gbufs;
  net.for_each_buffer([&](std::vector<T>& b) { params.push_back(&b); });
  grads.for_each_buffer([&](std::vector<T>& b) { gbufs.push_back(&b); });

  for (std::size_t l = 0; l < params.size(); ++l) {
    std::vector<T>& w = *params[l];
    const std::vector<T>& g = *gbufs[l];
    std::vector<T>& m = state.m[l];
    std::vector<T>& v = state.v[l];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = p.beta1 * static_cast<double>(m[i]) + (1.0 - p.beta1) * gi;
      const double vi = p.beta2 * static_cast<double>(v[i]) + (1.0 - p.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / bc1;
      const double v_hat = vi / bc2;
      w[i] = static_cast<T>(static_cast<double>(w[i]) - p.lr * m_hat / (std::sqrt(v_hat) + p.epsilon));
    }
  }
}

}  // namespace subvox
