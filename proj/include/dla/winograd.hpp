// Minimal filtering F(4,3): four outputs of a 3-tap correlation from six
// inputs with six multiplications. The transforms are derived at startup by
// Toom-Cook/Lagrange interpolation over the points {0, 1, -1, 2, -2, inf} and
// self-checked against the sliding dot products before first use.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace dla::wino {

constexpr int kOutputs = 4;  // Q_vec
constexpr int kTaps = 3;     // S_vec
constexpr int kWidth = 6;    // W_vec = Q_vec + S_vec - 1

struct WinogradF43 {
  std::array<std::array<double, kWidth>, kOutputs> at;  // output transform A^T
  std::array<std::array<double, kTaps>, kWidth> g;      // filter transform G
  std::array<std::array<double, kWidth>, kWidth> bt;    // input transform B^T
};

// Direct evaluation of the four sliding 3-tap dot products; the oracle form.
template <typename T>
std::array<T, kOutputs> direct_tile(const std::array<T, kWidth>& in,
                                    const std::array<T, kTaps>& f) {
  std::array<T, kOutputs> out{};
  for (int j = 0; j < kOutputs; ++j)
    out[j] = f[0] * in[j] + f[1] * in[j + 1] + f[2] * in[j + 2];
  return out;
}

namespace detail {

// coefficients (ascending powers) of prod over pts of (x - p)
inline std::array<std::int64_t, kWidth> expand_roots(const std::array<int, 5>& pts,
                                                     int skip) {
  std::array<std::int64_t, kWidth> c{};
  c[0] = 1;
  int deg = 0;
  for (int i = 0; i < 5; ++i) {
    if (i == skip) continue;
    for (int j = deg; j >= 0; --j) {
      c[j + 1] += c[j];
      c[j] *= -pts[i];
    }
    ++deg;
  }
  return c;
}

inline WinogradF43 construct() {
  const std::array<int, 5> pts = {0, 1, -1, 2, -2};  // plus the implicit point at infinity
  WinogradF43 w{};

  // A^T: evaluation of the output interpolation at each point; the infinity
  // column contributes only to the highest-order output. pow(0, 0) == 1.
  for (int j = 0; j < kOutputs; ++j) {
    for (int k = 0; k < 5; ++k) w.at[j][k] = std::pow(double(pts[k]), j);
    w.at[j][5] = (j == kOutputs - 1) ? 1.0 : 0.0;
  }

  // G: filter polynomial evaluated at each point, scaled by the node products.
  for (int k = 0; k < 5; ++k) {
    std::int64_t nk = 1;
    for (int l = 0; l < 5; ++l)
      if (l != k) nk *= (pts[k] - pts[l]);
    for (int j = 0; j < kTaps; ++j)
      w.g[k][j] = std::pow(double(pts[k]), j) / double(nk);
  }
  for (int j = 0; j < kTaps; ++j) w.g[5][j] = (j == kTaps - 1) ? 1.0 : 0.0;

  // B^T row k: coefficients of prod_{l != k}(x - p_l); infinity row gets the
  // full node polynomial.
  for (int k = 0; k < 5; ++k) {
    const auto c = expand_roots(pts, k);
    for (int j = 0; j < kWidth; ++j) w.bt[k][j] = double(c[j]);
  }
  const auto m = expand_roots(pts, -1);
  for (int j = 0; j < kWidth; ++j) w.bt[5][j] = double(m[j]);
  return w;
}

}  // namespace detail

template <typename T>
std::array<T, kWidth> transform_filter(const WinogradF43& w, const std::array<T, kTaps>& f) {
  std::array<T, kWidth> out{};
  for (int i = 0; i < kWidth; ++i)
    out[i] = T(w.g[i][0]) * f[0] + T(w.g[i][1]) * f[1] + T(w.g[i][2]) * f[2];
  return out;
}

template <typename T>
std::array<T, kWidth> transform_input(const WinogradF43& w, const std::array<T, kWidth>& in) {
  std::array<T, kWidth> out{};
  for (int i = 0; i < kWidth; ++i) {
    T acc = T(0);
    for (int j = 0; j < kWidth; ++j) acc += T(w.bt[i][j]) * in[j];
    out[i] = acc;
  }
  return out;
}

template <typename T>
std::array<T, kOutputs> output_transform(const WinogradF43& w, const std::array<T, kWidth>& m) {
  std::array<T, kOutputs> out{};
  for (int i = 0; i < kOutputs; ++i) {
    T acc = T(0);
    for (int j = 0; j < kWidth; ++j) acc += T(w.at[i][j]) * m[j];
    out[i] = acc;
  }
  return out;
}

// Full tile: A^T ((G f) (.) (B^T i)). The elementwise stage is the only
// multiply stage counted against the DSP budget: exactly six per tile.
template <typename T>
std::array<T, kOutputs> conv_tile_f43(const WinogradF43& w, const std::array<T, kWidth>& in,
                                      const std::array<T, kTaps>& f,
                                      std::uint64_t* mul_count = nullptr) {
  const auto gf = transform_filter(w, f);
  const auto bi = transform_input(w, in);
  std::array<T, kWidth> m{};
  for (int i = 0; i < kWidth; ++i) m[i] = gf[i] * bi[i];
  if (mul_count) *mul_count += kWidth;
  return output_transform(w, m);
}

// Counting variant of the direct form, for the 6-vs-12 multiply comparison.
template <typename T>
std::array<T, kOutputs> direct_tile_counted(const std::array<T, kWidth>& in,
                                            const std::array<T, kTaps>& f,
                                            std::uint64_t& mul_count) {
  mul_count += kOutputs * kTaps;
  return direct_tile(in, f);
}

// Constructs the transforms and proves the correctness identity on 1000
// random (filter, input) pairs before returning.
inline WinogradF43 derive_f43() {
  WinogradF43 w = detail::construct();
  std::mt19937_64 rng(0x57f43u);
  auto unit = [&rng]() { return 2.0 * (double(rng() >> 11) * 0x1p-53) - 1.0; };
  for (int trial = 0; trial < 1000; ++trial) {
    std::array<double, kWidth> in;
    std::array<double, kTaps> f;
    for (auto& v : in) v = unit();
    for (auto& v : f) v = unit();
    const auto got = conv_tile_f43(w, in, f);
    const auto want = direct_tile(in, f);
    for (int j = 0; j < kOutputs; ++j)
      if (std::fabs(got[j] - want[j]) > 1e-10)
        throw std::logic_error("winograd F(4,3) self-check failed");
  }
  return w;
}

inline const WinogradF43& winograd_f43() {
  static const WinogradF43 w = derive_f43();
  return w;
}

}  // namespace dla::wino
