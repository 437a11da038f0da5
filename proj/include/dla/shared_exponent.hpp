// Shared-exponent FP16 arithmetic emulation: a group of values is encoded as
// one base-2 exponent plus 18-bit signed mantissas, dot products run in exact
// integer arithmetic, and results renormalize to FP16. Deterministic:
// identical inputs produce bit-identical outputs.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "dla/fp16.hpp"

namespace dla::shexp {

// exponent assigned to all-zero groups; far below anything encodable
constexpr int kZeroExponent = -(1 << 20);

constexpr int kDefaultMantissaBits = 18;

struct SharedExpGroup {
  int e_max = kZeroExponent;
  int mantissa_bits = kDefaultMantissaBits;
  std::vector<std::int32_t> mantissas;

  // decoded value of slot j: m_j * 2^(e_max - (mantissa_bits - 2))
  double decode(std::size_t j) const {
    if (e_max == kZeroExponent) return 0.0;
    return std::ldexp(static_cast<double>(mantissas[j]), e_max - (mantissa_bits - 2));
  }

  std::size_t size() const { return mantissas.size(); }
};

// Block-encodes values against the maximum exponent in the group. The top
// value lands in [2^(bits-2), 2^(bits-1)), leaving one headroom bit; values
// more than bits-1 octaves below flush to zero via rounding.
template <typename T>
SharedExpGroup encode_group(std::span<const T> values,
                            int mantissa_bits = kDefaultMantissaBits) {
  SharedExpGroup g;
  g.mantissa_bits = mantissa_bits;
  g.mantissas.resize(values.size(), 0);

  int e_max = kZeroExponent;
  for (const T v : values) {
    if (!std::isfinite(static_cast<double>(v)))
      throw std::invalid_argument("encode_group: non-finite input");
    if (v != T(0)) e_max = std::max(e_max, std::ilogb(static_cast<double>(v)));
  }
  g.e_max = e_max;
  if (e_max == kZeroExponent) return g;

  const int shift = (mantissa_bits - 2) - e_max;
  const std::int32_t lo = -(std::int32_t(1) << (mantissa_bits - 1));
  const std::int32_t hi = (std::int32_t(1) << (mantissa_bits - 1)) - 1;
  for (std::size_t j = 0; j < values.size(); ++j) {
    const double m = std::nearbyint(std::ldexp(static_cast<double>(values[j]), shift));
    g.mantissas[j] = static_cast<std::int32_t>(
        std::min<double>(std::max<double>(m, lo), hi));
  }
  return g;
}

inline SharedExpGroup encode_group(const std::vector<double>& values,
                                   int mantissa_bits = kDefaultMantissaBits) {
  return encode_group(std::span<const double>(values), mantissa_bits);
}

inline double decode(const SharedExpGroup& g, std::size_t j) { return g.decode(j); }

// Exact integer dot product of two groups, returned at full precision as a
// double (the integer sum and the power-of-two scale are both exact).
inline double dot_exact(const SharedExpGroup& a, const SharedExpGroup& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: group width mismatch");
  std::int64_t s = 0;
  for (std::size_t j = 0; j < a.size(); ++j)
    s += static_cast<std::int64_t>(a.mantissas[j]) * b.mantissas[j];
  if (s == 0) return 0.0;
  const int scale = (a.e_max - (a.mantissa_bits - 2)) + (b.e_max - (b.mantissa_bits - 2));
  return std::ldexp(static_cast<double>(s), scale);
}

// The full PE dot as seen by the stream buffer: integer dot product plus an
// init value aligned onto the same fixed-point grid, renormalized to FP16.
inline Fp16 dot(const SharedExpGroup& a, const SharedExpGroup& b, double init = 0.0) {
  const double s = dot_exact(a, b);
  double aligned = init;
  if (init != 0.0 && a.e_max != kZeroExponent && b.e_max != kZeroExponent) {
    const int scale =
        (a.e_max - (a.mantissa_bits - 2)) + (b.e_max - (b.mantissa_bits - 2));
    const double fx = std::nearbyint(std::ldexp(init, -scale));
    if (std::isfinite(fx)) {
      const double back = std::ldexp(fx, scale);
      if (std::isfinite(back)) aligned = back;
    }
  }
  return to_fp16(s + aligned);
}

}  // namespace dla::shexp
