#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "subvox/geometry.hpp"
#include "subvox/rng.hpp"

namespace subvox {

// All convolutions are 3x3 with zero padding 1; output size is ceil(in/stride).
struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int stride = 1;
};

struct FcSpec {
  int in_features = 1;
  int out_features = 1;
};

struct NetworkConfig {
  int input_hw = 32;
  int input_channels = 1;
  std::vector<ConvSpec> conv;
  std::vector<FcSpec> fc;  // hidden layers rectified, last layer linear

  int outputs() const { return fc.back().out_features; }

  std::vector<int> conv_out_hw() const {
    std::vector<int> hw;
    int cur = input_hw;
    for (const ConvSpec& c : conv) {
      cur = (cur + 2 - 3) / c.stride + 1;
      hw.push_back(cur);
    }
    return hw;
  }

  int flatten_size() const {
    if (conv.empty()) return input_hw * input_hw * input_channels;
    const std::vector<int> hw = conv_out_hw();
    return hw.back() * hw.back() * conv.back().out_channels;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const ConvSpec& c : conv)
      n += static_cast<std::size_t>(9) * c.in_channels * c.out_channels + c.out_channels;
    for (const FcSpec& f : fc)
      n += static_cast<std::size_t>(f.in_features) * f.out_features + f.out_features;
    return n;
  }

  void validate() const {
    int expected = input_channels;
    for (const ConvSpec& c : conv) {
      if (c.in_channels != expected) throw std::invalid_argument("NetworkConfig: channel mismatch");
      if (c.stride != 1 && c.stride != 2) throw std::invalid_argument("NetworkConfig: bad stride");
      expected = c.out_channels;
    }
    if (fc.empty()) throw std::invalid_argument("NetworkConfig: needs fully-connected layers");
    int features = flatten_size();
    for (const FcSpec& f : fc) {
      if (f.in_features != features) throw std::invalid_argument("NetworkConfig: feature mismatch");
      features = f.out_features;
    }
  }

  // The measurement regressor: 7 convolutional layers, 5 with stride one and
  // 2 with stride two, then 2 fully-connected layers. One output head for
  // vessels (radius), two for airways (lumen radius, wall thickness).
  static NetworkConfig standard(StructureKind kind) {
    NetworkConfig cfg;
    cfg.input_hw = 32;
    cfg.input_channels = 1;
    const int widths[7] = {32, 32, 64, 64, 64, 128, 128};
    const int strides[7] = {1, 1, 2, 1, 1, 2, 1};
    int in_c = 1;
    for (int i = 0; i < 7; ++i) {
      cfg.conv.push_back({in_c, widths[i], strides[i]});
      in_c = widths[i];
    }
    const int outputs = kind == StructureKind::airway ? 2 : 1;
    cfg.fc.push_back({cfg.flatten_size(), 256});
    cfg.fc.push_back({256, outputs});
    cfg.validate();
    return cfg;
  }
};

// Input normalization baked into every checkpoint.
struct InputNormalization {
  double offset_hu = 1000.0;
  double scale_hu = 1500.0;
  double clamp_lo = -0.2;
  double clamp_hi = 1.2;

  double apply(double hu) const {
    const double v = (hu + offset_hu) / scale_hu;
    return v < clamp_lo ? clamp_lo : (v > clamp_hi ? clamp_hi : v);
  }
};

// Weights and biases. Conv weights are stored k-major as [K=9*in_c][out_c]
// so the hot loops run over contiguous output channels; FC weights as
// [in][out].
template <typename T>
struct Network {
  NetworkConfig cfg;
  std::vector<std::vector<T>> conv_w, conv_b;
  std::vector<std::vector<T>> fc_w, fc_b;

  Network() = default;
  explicit Network(const NetworkConfig& c) : cfg(c) {
    cfg.validate();
    for (const ConvSpec& cs : cfg.conv) {
      conv_w.emplace_back(static_cast<std::size_t>(9) * cs.in_channels * cs.out_channels, T(0));
      conv_b.emplace_back(static_cast<std::size_t>(cs.out_channels), T(0));
    }
    for (const FcSpec& fs : cfg.fc) {
      fc_w.emplace_back(static_cast<std::size_t>(fs.in_features) * fs.out_features, T(0));
      fc_b.emplace_back(static_cast<std::size_t>(fs.out_features), T(0));
    }
  }

  // Fan-in-scaled uniform init for the rectifier layers, zero biases.
  void init_weights(std::uint64_t seed) {
    for (std::size_t l = 0; l < conv_w.size(); ++l) {
      Rng rng(seed, {static_cast<std::uint64_t>(Stage::weight_init), l});
      const double limit = std::sqrt(6.0 / (9.0 * cfg.conv[l].in_channels));
      for (T& w : conv_w[l]) w = static_cast<T>(rng.uniform(-limit, limit));
    }
    for (std::size_t l = 0; l < fc_w.size(); ++l) {
      Rng rng(seed, {static_cast<std::uint64_t>(Stage::weight_init), 100 + l});
      const double limit = std::sqrt(6.0 / cfg.fc[l].in_features);
      for (T& w : fc_w[l]) w = static_cast<T>(rng.uniform(-limit, limit));
    }
  }

  // Fixed traversal order shared by the optimizer and the checkpoint format.
  template <typename Fn>
  void for_each_buffer(Fn&& fn) {
    for (std::size_t l = 0; l < conv_w.size(); ++l) {
      fn(conv_w[l]);
      fn(conv_b[l]);
    }
    for (std::size_t l = 0; l < fc_w.size(); ++l) {
      fn(fc_w[l]);
      fn(fc_b[l]);
    }
  }

  std::size_t param_count() const { return cfg.param_count(); }
};

// Gradient accumulator with the same buffer layout as Network.
template <typename T>
struct NetGradients {
  std::vector<std::vector<T>> conv_w, conv_b, fc_w, fc_b;

  NetGradients() = default;
  explicit NetGradients(const NetworkConfig& cfg) {
    for (const ConvSpec& cs : cfg.conv) {
      conv_w.emplace_back(static_cast<std::size_t>(9) * cs.in_channels * cs.out_channels, T(0));
      conv_b.emplace_back(static_cast<std::size_t>(cs.out_channels), T(0));
    }
    for (const FcSpec& fs : cfg.fc) {
      fc_w.emplace_back(static_cast<std::size_t>(fs.in_features) * fs.out_features, T(0));
      fc_b.emplace_back(static_cast<std::size_t>(fs.out_features), T(0));
    }
  }

  void zero() {
    for (auto* group : {&conv_w, &conv_b, &fc_w, &fc_b})
      for (auto& buf : *group) std::fill(buf.begin(), buf.end(), T(0));
  }

  void add(const NetGradients& other) {
    auto add_group = [](auto& dst, const auto& src) {
      for (std::size_t l = 0; l < dst.size(); ++l)
        for (std::size_t i = 0; i < dst[l].size(); ++i) dst[l][i] += src[l][i];
    };
    add_group(conv_w, other.conv_w);
    add_group(conv_b, other.conv_b);
    add_group(fc_w, other.fc_w);
    add_group(fc_b, other.fc_b);
  }

  template <typename Fn>
  void for_each_buffer(Fn&& fn) {
    for (std::size_t l = 0; l < conv_w.size(); ++l) {
      fn(conv_w[l]);
      fn(conv_b[l]);
    }
    for (std::size_t l = 0; l < fc_w.size(); ++l) {
      fn(fc_w[l]);
      fn(fc_b[l]);
    }
  }
};

// Cached per-sample activations, kept until that sample's backward pass.
template <typename T>
struct NetActivations {
  std::vector<std::vector<T>> acts;  // acts[0] = input (NHWC), then one per layer

  void prepare(const NetworkConfig& cfg) {
    const std::vector<int> hw = cfg.conv_out_hw();
    acts.assign(cfg.conv.size() + cfg.fc.size() + 1, {});
    acts[0].resize(static_cast<std::size_t>(cfg.input_hw) * cfg.input_hw * cfg.input_channels);
    for (std::size_t l = 0; l < cfg.conv.size(); ++l)
      acts[l + 1].resize(static_cast<std::size_t>(hw[l]) * hw[l] * cfg.conv[l].out_channels);
    for (std::size_t l = 0; l < cfg.fc.size(); ++l)
      acts[cfg.conv.size() + 1 + l].resize(static_cast<std::size_t>(cfg.fc[l].out_features));
  }

  std::span<const T> output() const { return std::span<const T>(acts.back()); }
};

// Shared working memory (im2col rows and layer deltas); one per worker.
template <typename T>
struct NetScratch {
  std::vector<T> cols, dcols;
  std::vector<std::vector<T>> deltas;

  void prepare(const NetworkConfig& cfg) {
    const std::vector<int> hw = cfg.conv_out_hw();
    std::size_t max_cols = 1;
    deltas.assign(cfg.conv.size() + cfg.fc.size() + 1, {});
    deltas[0].resize(static_cast<std::size_t>(cfg.input_hw) * cfg.input_hw * cfg.input_channels);
    for (std::size_t l = 0; l < cfg.conv.size(); ++l) {
      deltas[l + 1].resize(static_cast<std::size_t>(hw[l]) * hw[l] * cfg.conv[l].out_channels);
      max_cols = std::max(max_cols, static_cast<std::size_t>(hw[l]) * hw[l] * 9 *
                                        static_cast<std::size_t>(cfg.conv[l].in_channels));
    }
    for (std::size_t l = 0; l < cfg.fc.size(); ++l)
      deltas[cfg.conv.size() + 1 + l].resize(static_cast<std::size_t>(cfg.fc[l].out_features));
    cols.resize(max_cols);
    dcols.resize(max_cols);
  }
};

namespace netdetail {

template <typename T>
void check_finite(const std::vector<T>& v, const char* what, std::size_t layer) {
  double s = 0.0;
  for (T x : v) s += static_cast<double>(x);
  if (!std::isfinite(s))
    throw std::runtime_error(std::string("non-finite ") + what + " in layer " +
                             std::to_string(layer));
}

// Gathers 3x3 receptive fields into rows: cols[ohw][9 * in_c], zero padded.
template <typename T>
void im2col(const T* x, int in_hw, int in_c, int stride, int out_hw, T* cols) {
  for (int oy = 0; oy < out_hw; ++oy) {
    for (int ox = 0; ox < out_hw; ++ox) {
      T* row = cols + (static_cast<std::size_t>(oy) * out_hw + ox) * 9 * in_c;
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy * stride + ky - 1;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox * stride + kx - 1;
          T* dst = row + (static_cast<std::size_t>(ky) * 3 + kx) * in_c;
          if (iy < 0 || iy >= in_hw || ix < 0 || ix >= in_hw) {
            for (int c = 0; c < in_c; ++c) dst[c] = T(0);
          } else {
            const T* src = x + (static_cast<std::size_t>(iy) * in_hw + ix) * in_c;
            for (int c = 0; c < in_c; ++c) dst[c] = src[c];
          }
        }
      }
    }
  }
}

// Scatters dcols back onto the input gradient.
template <typename T>
void col2im(const T* dcols, int in_hw, int in_c, int stride, int out_hw, T* dx) {
  std::fill(dx, dx + static_cast<std::size_t>(in_hw) * in_hw * in_c, T(0));
  for (int oy = 0; oy < out_hw; ++oy) {
    for (int ox = 0; ox < out_hw; ++ox) {
      const T* row = dcols + (static_cast<std::size_t>(oy) * out_hw + ox) * 9 * in_c;
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy * stride + ky - 1;
        if (iy < 0 || iy >= in_hw) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox * stride + kx - 1;
          if (ix < 0 || ix >= in_hw) continue;
          const T* src = row + (static_cast<std::size_t>(ky) * 3 + kx) * in_c;
          T* dst = dx + (static_cast<std::size_t>(iy) * in_hw + ix) * in_c;
          for (int c = 0; c < in_c; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

// out[n][o] = b[o] + sum_k rows[n][k] * w[k][o]; inner loop contiguous in o,
// so it vectorizes without reassociation and stays bit-stable.
template <typename T>
void matmul_rows(const T* rows, std::size_t n_rows, std::size_t k_dim, const T* w, const T* b,
                 std::size_t o_dim, T* out) {
  for (std::size_t n = 0; n < n_rows; ++n) {
    T* orow = out + n * o_dim;
    for (std::size_t o = 0; o < o_dim; ++o) orow[o] = b[o];
    const T* rrow = rows + n * k_dim;
    for (std::size_t k = 0; k < k_dim; ++k) {
      const T a = rrow[k];
      if (a == T(0)) continue;
      const T* wrow = w + k * o_dim;
      for (std::size_t o = 0; o < o_dim; ++o) orow[o] += a * wrow[o];
    }
  }
}

template <typename T>
void relu_inplace(std::vector<T>& v) {
  for (T& x : v)
    if (x < T(0)) x = T(0);
}

}  // namespace netdetail

// Deterministic single-sample forward pass; activations are cached for a
// later backward pass. Returns the output head values in mm.
template <typename T>
std::span<const T> forward(const Network<T>& net, std::span<const T> input, NetActivations<T>& act,
                           NetScratch<T>& scratch) {
  const NetworkConfig& cfg = net.cfg;
  if (act.acts.empty() || act.acts[0].size() != input.size()) act.prepare(cfg);
  if (scratch.deltas.empty() || scratch.deltas[0].size() != input.size()) scratch.prepare(cfg);
  std::copy(input.begin(), input.end(), act.acts[0].begin());

  const std::vector<int> hw_list = cfg.conv_out_hw();
  int in_hw = cfg.input_hw;
  for (std::size_t l = 0; l < cfg.conv.size(); ++l) {
    const ConvSpec& cs = cfg.conv[l];
    const int out_hw = hw_list[l];
    const std::size_t k_dim = static_cast<std::size_t>(9) * cs.in_channels;
    netdetail::im2col(act.acts[l].data(), in_hw, cs.in_channels, cs.stride, out_hw,
                      scratch.cols.data());
    netdetail::matmul_rows(scratch.cols.data(), static_cast<std::size_t>(out_hw) * out_hw, k_dim,
                           net.conv_w[l].data(), net.conv_b[l].data(),
                           static_cast<std::size_t>(cs.out_channels), act.acts[l + 1].data());
    netdetail::check_finite(act.acts[l + 1], "activation", l);
    netdetail::relu_inplace(act.acts[l + 1]);
    in_hw = out_hw;
  }
  for (std::size_t l = 0; l < cfg.fc.size(); ++l) {
    const FcSpec& fs = cfg.fc[l];
    std::vector<T>& x = act.acts[cfg.conv.size() + l];
    std::vector<T>& y = act.acts[cfg.conv.size() + l + 1];
    netdetail::matmul_rows(x.data(), 1, static_cast<std::size_t>(fs.in_features), net.fc_w[l].data(),
                           net.fc_b[l].data(), static_cast<std::size_t>(fs.out_features), y.data());
    netdetail::check_finite(y, "activation", cfg.conv.size() + l);
    if (l + 1 < cfg.fc.size()) netdetail::relu_inplace(y);
  }
  return act.output();
}

// Read-only transposed weights ([out][k] layouts); rebuilt after each
// optimizer step, shared by all backward workers.
template <typename T>
struct TransposedWeights {
  std::vector<std::vector<T>> conv_w_t;  // [out_c][9*in_c]
  std::vector<std::vector<T>> fc_w_t;    // [out][in]

  void rebuild(const Network<T>& net) {
    const NetworkConfig& cfg = net.cfg;
    conv_w_t.resize(cfg.conv.size());
    for (std::size_t l = 0; l < cfg.conv.size(); ++l) {
      const std::size_t k_dim = static_cast<std::size_t>(9) * cfg.conv[l].in_channels;
      const std::size_t o_dim = static_cast<std::size_t>(cfg.conv[l].out_channels);
      conv_w_t[l].resize(k_dim * o_dim);
      for (std::size_t k = 0; k < k_dim; ++k)
        for (std::size_t o = 0; o < o_dim; ++o)
          conv_w_t[l][o * k_dim + k] = net.conv_w[l][k * o_dim + o];
    }
    fc_w_t.resize(cfg.fc.size());
    for (std::size_t l = 0; l < cfg.fc.size(); ++l) {
      const std::size_t k_dim = static_cast<std::size_t>(cfg.fc[l].in_features);
      const std::size_t o_dim = static_cast<std::size_t>(cfg.fc[l].out_features);
      fc_w_t[l].resize(k_dim * o_dim);
      for (std::size_t k = 0; k < k_dim; ++k)
        for (std::size_t o = 0; o < o_dim; ++o)
          fc_w_t[l][o * k_dim + k] = net.fc_w[l][k * o_dim + o];
    }
  }
};

// Backward pass for the sample whose activations are in `act`. d_output is
// dLoss/dPrediction; parameter gradients accumulate into `grads`.
template <typename T>
void backward(const Network<T>& net, const TransposedWeights<T>& wt, const NetActivations<T>& act,
              std::span<const T> d_output, NetGradients<T>& grads, NetScratch<T>& scratch) {
  const NetworkConfig& cfg = net.cfg;
  const std::size_t n_fc = cfg.fc.size();
  const std::size_t n_conv = cfg.conv.size();
  if (scratch.deltas.empty()) scratch.prepare(cfg);

  std::copy(d_output.begin(), d_output.end(), scratch.deltas.back().begin());

  for (std::size_t li = n_fc; li-- > 0;) {
    const FcSpec& fs = cfg.fc[li];
    const std::size_t k_dim = static_cast<std::size_t>(fs.in_features);
    const std::size_t o_dim = static_cast<std::size_t>(fs.out_features);
    std::vector<T>& dy = scratch.deltas[n_conv + li + 1];
    std::vector<T>& dx = scratch.deltas[n_conv + li];
    const std::vector<T>& x = act.acts[n_conv + li];
    const std::vector<T>& y = act.acts[n_conv + li + 1];
    if (li + 1 < n_fc) {  // rectifier mask
      for (std::size_t o = 0; o < o_dim; ++o)
        if (y[o] <= T(0)) dy[o] = T(0);
    }
    for (std::size_t o = 0; o < o_dim; ++o) grads.fc_b[li][o] += dy[o];
    T* gw = grads.fc_w[li].data();
    for (std::size_t k = 0; k < k_dim; ++k) {
      const T a = x[k];
      if (a != T(0)) {
        T* grow = gw + k * o_dim;
        for (std::size_t o = 0; o < o_dim; ++o) grow[o] += a * dy[o];
      }
    }
    std::fill(dx.begin(), dx.end(), T(0));
    const T* wt_l = wt.fc_w_t[li].data();
    for (std::size_t o = 0; o < o_dim; ++o) {
      const T g = dy[o];
      if (g == T(0)) continue;
      const T* wrow = wt_l + o * k_dim;
      for (std::size_t k = 0; k < k_dim; ++k) dx[k] += g * wrow[k];
    }
  }

  const std::vector<int> hw_list = cfg.conv_out_hw();
  for (std::size_t li = n_conv; li-- > 0;) {
    const ConvSpec& cs = cfg.conv[li];
    const int out_hw = hw_list[li];
    const int in_hw = li == 0 ? cfg.input_hw : hw_list[li - 1];
    const std::size_t k_dim = static_cast<std::size_t>(9) * cs.in_channels;
    const std::size_t o_dim = static_cast<std::size_t>(cs.out_channels);
    const std::size_t n_rows = static_cast<std::size_t>(out_hw) * out_hw;
    std::vector<T>& dy = scratch.deltas[li + 1];
    const std::vector<T>& y = act.acts[li + 1];
    for (std::size_t i = 0; i < dy.size(); ++i)
      if (y[i] <= T(0)) dy[i] = T(0);

    // Re-gather this layer's input rows.
    netdetail::im2col(act.acts[li].data(), in_hw, cs.in_channels, cs.stride, out_hw,
                      scratch.cols.data());

    T* gb = grads.conv_b[li].data();
    T* gw = grads.conv_w[li].data();
    const T* wt_l = wt.conv_w_t[li].data();
    for (std::size_t n = 0; n < n_rows; ++n) {
      const T* dyrow = dy.data() + n * o_dim;
      const T* crow = scratch.cols.data() + n * k_dim;
      T* dcrow = scratch.dcols.data() + n * k_dim;
      for (std::size_t o = 0; o < o_dim; ++o) gb[o] += dyrow[o];
      for (std::size_t k = 0; k < k_dim; ++k) {
        const T a = crow[k];
        if (a != T(0)) {
          T* grow = gw + k * o_dim;
          for (std::size_t o = 0; o < o_dim; ++o) grow[o] += a * dyrow[o];
        }
      }
      std::fill(dcrow, dcrow + k_dim, T(0));
      for (std::size_t o = 0; o < o_dim; ++o) {
        const T g = dyrow[o];
        if (g == T(0)) continue;
        const T* wrow = wt_l + o * k_dim;
        for (std::size_t k = 0; k < k_dim; ++k) dcrow[k] += g * wrow[k];
      }
    }
    netdetail::col2im(scratch.dcols.data(), in_hw, cs.in_channels, cs.stride, out_hw,
                      scratch.deltas[li].data());
    netdetail::check_finite(grads.conv_w[li], "gradient", li);
  }
}

}  // namespace subvox
