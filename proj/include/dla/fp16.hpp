// IEEE binary16 software emulation: round-to-nearest-even conversion with
// saturating overflow (the data path carries no infinities), subnormal
// support, and exact decode.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace dla {

namespace fp16_detail {

// Encode a finite double as binary16 bits. Overflow saturates to +/-65504.
inline std::uint16_t encode(double v) {
  if (std::isnan(v)) return 0x7e00;
  const std::uint16_t sign = std::signbit(v) ? 0x8000 : 0;
  double a = std::fabs(v);
  if (std::isinf(v)) return sign | 0x7bff;
  if (a == 0.0) return sign;

  int e = std::ilogb(a);
  if (e < -14) {
    // subnormal grid, quantum 2^-24
    double q = std::nearbyint(std::ldexp(a, 24));
    if (q >= 1024.0) return sign | 0x0400;  // rounded up into the normal range
    return sign | static_cast<std::uint16_t>(q);
  }
  if (e > 15) return sign | 0x7bff;

  // normal: significand in [1024, 2048) after scaling by 2^(10-e)
  double m = std::nearbyint(std::ldexp(a, 10 - e));
  if (m >= 2048.0) {
    ++e;
    if (e > 15) return sign | 0x7bff;
    m = 1024.0;
  }
  return static_cast<std::uint16_t>(
      sign | ((e + 15) << 10) | (static_cast<int>(m) - 1024));
}

inline double decode(std::uint16_t bits) {
  const int sign = (bits & 0x8000) ? -1 : 1;
  const int exp = (bits >> 10) & 0x1f;
  const int man = bits & 0x3ff;
  if (exp == 0) return sign * std::ldexp(static_cast<double>(man), -24);
  if (exp == 31) {
    if (man != 0) return std::numeric_limits<double>::quiet_NaN();
    return sign * std::numeric_limits<double>::infinity();
  }
  return sign * std::ldexp(static_cast<double>(1024 + man), exp - 25);
}

}  // namespace fp16_detail

// A stored 16-bit floating point value (1 sign, 5 exponent, 10 mantissa bits).
struct Fp16 {
  std::uint16_t bits = 0;

  static Fp16 from_double(double v) { return Fp16{fp16_detail::encode(v)}; }
  double to_double() const { return fp16_detail::decode(bits); }
  float to_float() const { return static_cast<float>(fp16_detail::decode(bits)); }

  bool operator==(const Fp16&) const = default;
};

inline Fp16 to_fp16(double v) { return Fp16::from_double(v); }

// Value passed through FP16 storage: quantize and decode in one step.
inline float fp16_round(float v) {
  return Fp16::from_double(static_cast<double>(v)).to_float();
}
inline double fp16_round(double v) { return Fp16::from_double(v).to_double(); }

constexpr double kFp16Max = 65504.0;

}  // namespace dla
