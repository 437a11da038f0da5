// High-precision reference implementations of every layer type. These are the
// ground truth the simulator is diffed against; clarity over speed.
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "dla/tensor.hpp"
#include "dla/topology.hpp"

namespace dla {

// Standard cross-correlation (no filter flip) with zero padding and per-output
// channel bias. Filters: K x (C/groups) x R x S.
inline Tensor direct_conv(const Tensor& input, const FilterBank& filters,
                          const std::vector<double>& bias, int stride, int pad,
                          int groups) {
  const Shape3 in = input.shape;
  if (in.c % groups != 0 || filters.k % groups != 0)
    throw std::invalid_argument("direct_conv: channels not divisible by groups");
  if (filters.c != in.c / groups)
    throw std::invalid_argument("direct_conv: filter depth mismatch");
  if (!bias.empty() && static_cast<int>(bias.size()) != filters.k)
    throw std::invalid_argument("direct_conv: bias size mismatch");
  const int p = (in.h + 2 * pad - filters.r) / stride + 1;
  const int q = (in.w + 2 * pad - filters.s) / stride + 1;
  if (p < 1 || q < 1) throw std::invalid_argument("direct_conv: empty output");

  Tensor out(filters.k, p, q);
  const int k_per_group = filters.k / groups;
  for (int k = 0; k < filters.k; ++k) {
    const int g = k / k_per_group;
    const int c0 = g * filters.c;
    const double b = bias.empty() ? 0.0 : bias[k];
    double* out_plane = &out.at(k, 0, 0);
    for (int i = 0; i < p * q; ++i) out_plane[i] = b;
    for (int c = 0; c < filters.c; ++c) {
      for (int r = 0; r < filters.r; ++r) {
        for (int s = 0; s < filters.s; ++s) {
          const double wv = filters.at(k, c, r, s);
          if (wv == 0.0) continue;
          // output ranges whose taps stay inside the (unpadded) input
          if (in.h - 1 + pad - r < 0 || in.w - 1 + pad - s < 0) continue;
          const int oy_lo = std::max(0, (pad - r + stride - 1) / stride);
          const int oy_hi = std::min(p - 1, (in.h - 1 + pad - r) / stride);
          const int ox_lo = std::max(0, (pad - s + stride - 1) / stride);
          const int ox_hi = std::min(q - 1, (in.w - 1 + pad - s) / stride);
          for (int oy = oy_lo; oy <= oy_hi; ++oy) {
            const int y = oy * stride + r - pad;
            const double* in_row =
                input.data.data() +
                (std::size_t(c0 + c) * in.h + std::size_t(y)) * in.w;
            double* out_row = out_plane + std::size_t(oy) * q;
            const int x0 = ox_lo * stride + s - pad;
            for (int ox = ox_lo; ox <= ox_hi; ++ox)
              out_row[ox] += in_row[x0 + (ox - ox_lo) * stride] * wv;
          }
        }
      }
    }
  }
  return out;
}

// v_o = W v_i + b.
inline std::vector<double> fully_connected(const std::vector<double>& input,
                                           const std::vector<double>& weights,
                                           int n_out,
                                           const std::vector<double>& bias) {
  const int n_in = static_cast<int>(input.size());
  if (weights.size() != static_cast<std::size_t>(n_out) * n_in)
    throw std::invalid_argument("fully_connected: weight matrix shape mismatch");
  if (!bias.empty() && static_cast<int>(bias.size()) != n_out)
    throw std::invalid_argument("fully_connected: bias size mismatch");
  std::vector<double> out(n_out, 0.0);
  for (int o = 0; o < n_out; ++o) {
    double acc = 0.0;
    const double* row = weights.data() + static_cast<std::size_t>(o) * n_in;
    for (int i = 0; i < n_in; ++i) acc += row[i] * input[i];
    out[o] = acc + (bias.empty() ? 0.0 : bias[o]);
  }
  return out;
}

// Batched variant: V_o = W V_i, columns are images. Input is n_in x b,
// stored column-major (one image contiguous).
inline std::vector<std::vector<double>> fully_connected_batch(
    const std::vector<std::vector<double>>& inputs, const std::vector<double>& weights,
    int n_out, const std::vector<double>& bias) {
  std::vector<std::vector<double>> out;
  out.reserve(inputs.size());
  for (const auto& v : inputs) out.push_back(fully_connected(v, weights, n_out, bias));
  return out;
}

// Cross-channel LRN: out(c) = in(c) / (k + (alpha/n) * sum_{c' in window} in(c')^2)^beta,
// window of n channels centered on c, clipped at the boundaries.
inline Tensor lrn_norm(const Tensor& input, int n, double alpha, double beta, double k) {
  if (n < 1 || n % 2 == 0) throw std::invalid_argument("lrn_norm: n must be odd");
  Tensor out(input.shape);
  const int half = n / 2;
  for (int c = 0; c < input.shape.c; ++c) {
    const int lo = std::max(0, c - half);
    const int hi = std::min(input.shape.c - 1, c + half);
    for (int y = 0; y < input.shape.h; ++y)
      for (int x = 0; x < input.shape.w; ++x) {
        double ss = 0.0;
        for (int cc = lo; cc <= hi; ++cc) {
          const double v = input.at(cc, y, x);
          ss += v * v;
        }
        out.at(c, y, x) = input.at(c, y, x) / std::pow(k + alpha / n * ss, beta);
      }
  }
  return out;
}

inline Tensor max_pool(const Tensor& input, int window, int stride) {
  if (window > input.shape.h || window > input.shape.w)
    throw std::invalid_argument("max_pool: window larger than input");
  const int p = (input.shape.h - window) / stride + 1;
  const int q = (input.shape.w - window) / stride + 1;
  Tensor out(input.shape.c, p, q);
  for (int c = 0; c < input.shape.c; ++c)
    for (int oy = 0; oy < p; ++oy)
      for (int ox = 0; ox < q; ++ox) {
        double m = input.at(c, oy * stride, ox * stride);
        for (int dy = 0; dy < window; ++dy)
          for (int dx = 0; dx < window; ++dx)
            m = std::max(m, input.at(c, oy * stride + dy, ox * stride + dx));
        out.at(c, oy, ox) = m;
      }
  return out;
}

inline Tensor relu(Tensor t) {
  for (double& v : t.data) v = std::max(0.0, v);
  return t;
}

// Numerically stabilized; the output sums to unity.
inline std::vector<double> softmax(const std::vector<double>& input) {
  if (input.empty()) throw std::invalid_argument("softmax: empty input");
  const double m = *std::max_element(input.begin(), input.end());
  std::vector<double> out(input.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < input.size(); ++i) {
    out[i] = std::exp(input[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

// Parameters for one network: conv layers carry filters+bias, fc layers carry
// a dense weight matrix+bias; other layers have no parameters.
struct LayerWeights {
  FilterBankF filters;          // conv
  std::vector<float> weights;   // fc, n_out x n_in row-major
  std::vector<float> bias;
};

struct NetworkWeights {
  std::vector<LayerWeights> layers;  // indexed like Topology::layers
};

namespace detail {

inline FilterBank to_fp64(const FilterBankF& f) {
  FilterBank out(f.k, f.c, f.r, f.s);
  for (std::size_t i = 0; i < f.data.size(); ++i) out.data[i] = f.data[i];
  return out;
}

inline std::vector<double> to_fp64(const std::vector<float>& v) {
  return std::vector<double>(v.begin(), v.end());
}

}  // namespace detail

// Runs every layer in order at FP64, returning each intermediate tensor
// (fc/softmax results as flat tensors) for simulator diffing.
inline std::vector<Tensor> run_reference(const Topology& t, const NetworkWeights& w,
                                         const Tensor& input) {
  if (input.shape != t.input)
    throw std::invalid_argument("run_reference: input shape does not match topology");
  if (w.layers.size() != t.layers.size())
    throw std::invalid_argument("run_reference: weights for " +
                                std::to_string(w.layers.size()) + " layers, topology has " +
                                std::to_string(t.layers.size()));
  std::vector<Tensor> acts;
  Tensor cur = input;
  for (std::size_t i = 0; i < t.layers.size(); ++i) {
    const LayerSpec& l = t.layers[i];
    switch (l.kind) {
      case LayerKind::Conv: {
        const auto& lw = w.layers[i];
        if (lw.filters.data.empty())
          throw std::invalid_argument("run_reference: missing filters for layer " +
                                      std::to_string(i));
        cur = direct_conv(cur, detail::to_fp64(lw.filters), detail::to_fp64(lw.bias),
                          l.stride, l.pad, l.groups);
        if (l.relu) cur = relu(std::move(cur));
        break;
      }
      case LayerKind::FullyConnected: {
        const auto& lw = w.layers[i];
        if (lw.weights.empty())
          throw std::invalid_argument("run_reference: missing weights for layer " +
                                      std::to_string(i));
        std::vector<double> flat(cur.data.begin(), cur.data.end());
        auto out = fully_connected(flat, detail::to_fp64(lw.weights), l.n_out,
                                   detail::to_fp64(lw.bias));
        cur = Tensor::flat(l.n_out);
        cur.data = std::move(out);
        if (l.relu)
          for (double& v : cur.data) v = std::max(0.0, v);
        break;
      }
      case LayerKind::MaxPool:
        cur = max_pool(cur, l.window, l.stride);
        break;
      case LayerKind::Norm:
        cur = lrn_norm(cur, l.norm_n, l.alpha, l.beta, l.k);
        break;
      case LayerKind::Softmax: {
        std::vector<double> flat(cur.data.begin(), cur.data.end());
        auto out = softmax(flat);
        cur = Tensor::flat(static_cast<int>(out.size()));
        cur.data = std::move(out);
        break;
      }
    }
    acts.push_back(cur);
  }
  return acts;
}

}  // namespace dla
