#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "dla/winograd.hpp"

using namespace dla::wino;

namespace {

double urand(std::mt19937_64& rng) {
  return 2.0 * (double(rng() >> 11) * 0x1p-53) - 1.0;
}

}  // namespace

TEST_CASE("derivation self-checks and matches hand cases") {
  const WinogradF43 w = derive_f43();

  // delta filter passes inputs through
  const std::array<double, 6> in = {1, 2, 3, 4, 5, 6};
  const auto delta = conv_tile_f43(w, in, {1, 0, 0});
  for (int j = 0; j < 4; ++j) CHECK(delta[std::size_t(j)] == Catch::Approx(j + 1).margin(1e-12));

  // box filter on all-ones
  const auto box = conv_tile_f43(w, {1, 1, 1, 1, 1, 1}, {1, 1, 1});
  for (double v : box) CHECK(v == Catch::Approx(3.0).margin(1e-12));
}

TEST_CASE("transform stages") {
  const WinogradF43& w = winograd_f43();

  // zero filter and zero input transform to zero
  const auto gz = transform_filter<double>(w, {0, 0, 0});
  for (double v : gz) CHECK(v == 0.0);
  const auto bz = transform_input<double>(w, {0, 0, 0, 0, 0, 0});
  for (double v : bz) CHECK(v == 0.0);
  const auto az = output_transform<double>(w, {0, 0, 0, 0, 0, 0});
  for (double v : az) CHECK(v == 0.0);

  // delta filter picks the first column of G
  const auto g0 = transform_filter<double>(w, {1, 0, 0});
  for (int i = 0; i < 6; ++i) CHECK(g0[std::size_t(i)] == Catch::Approx(w.g[std::size_t(i)][0]).margin(1e-15));

  // transforms match an explicit matrix multiply on random vectors
  std::mt19937_64 rng(0x603);
  for (int t = 0; t < 100; ++t) {
    std::array<double, 3> f;
    std::array<double, 6> i6;
    for (auto& v : f) v = urand(rng);
    for (auto& v : i6) v = urand(rng);

    const auto gf = transform_filter<double>(w, f);
    for (int r = 0; r < 6; ++r) {
      double want = 0;
      for (int c = 0; c < 3; ++c) want += w.g[std::size_t(r)][std::size_t(c)] * f[std::size_t(c)];
      CHECK(gf[std::size_t(r)] == Catch::Approx(want).margin(1e-13));
    }
    const auto bi = transform_input<double>(w, i6);
    for (int r = 0; r < 6; ++r) {
      double want = 0;
      for (int c = 0; c < 6; ++c) want += w.bt[std::size_t(r)][std::size_t(c)] * i6[std::size_t(c)];
      CHECK(bi[std::size_t(r)] == Catch::Approx(want).margin(1e-13));
    }

    // linearity of the input transform
    std::array<double, 6> j6;
    for (auto& v : j6) v = urand(rng);
    std::array<double, 6> sum;
    for (int k = 0; k < 6; ++k) sum[std::size_t(k)] = i6[std::size_t(k)] + j6[std::size_t(k)];
    const auto bsum = transform_input<double>(w, sum);
    const auto bj = transform_input<double>(w, j6);
    for (int k = 0; k < 6; ++k)
      CHECK(bsum[std::size_t(k)] == Catch::Approx(bi[std::size_t(k)] + bj[std::size_t(k)]).margin(1e-12));
  }
}

TEST_CASE("output transform recovers the sliding dot products") {
  const WinogradF43& w = winograd_f43();
  std::mt19937_64 rng(0xa7);
  for (int t = 0; t < 1000; ++t) {
    std::array<double, 3> f;
    std::array<double, 6> i6;
    for (auto& v : f) v = urand(rng);
    for (auto& v : i6) v = urand(rng);
    const auto gf = transform_filter<double>(w, f);
    const auto bi = transform_input<double>(w, i6);
    std::array<double, 6> m;
    for (int k = 0; k < 6; ++k) m[std::size_t(k)] = gf[std::size_t(k)] * bi[std::size_t(k)];
    const auto got = output_transform<double>(w, m);
    const auto want = direct_tile(i6, f);
    for (int j = 0; j < 4; ++j)
      CHECK(std::fabs(got[std::size_t(j)] - want[std::size_t(j)]) <= 1e-10);
  }
}

TEST_CASE("equivalence over 1e4 random tiles at FP64 and FP32") {
  const WinogradF43& w = winograd_f43();
  std::mt19937_64 rng(0xe443);

  double max64 = 0.0;
  float max32 = 0.0f;
  for (int t = 0; t < 10'000; ++t) {
    std::array<double, 3> f;
    std::array<double, 6> i6;
    for (auto& v : f) v = urand(rng);
    for (auto& v : i6) v = urand(rng);

    const auto got = conv_tile_f43(w, i6, f);
    const auto want = direct_tile(i6, f);
    for (int j = 0; j < 4; ++j)
      max64 = std::max(max64, std::fabs(got[std::size_t(j)] - want[std::size_t(j)]));

    std::array<float, 3> ff;
    std::array<float, 6> fi;
    for (int k = 0; k < 3; ++k) ff[std::size_t(k)] = float(f[std::size_t(k)]);
    for (int k = 0; k < 6; ++k) fi[std::size_t(k)] = float(i6[std::size_t(k)]);
    const auto got32 = conv_tile_f43(w, fi, ff);
    const auto want32 = direct_tile(fi, ff);
    for (int j = 0; j < 4; ++j)
      max32 = std::max(max32, std::fabs(got32[std::size_t(j)] - want32[std::size_t(j)]));
  }
  CHECK(max64 < 1e-10);
  CHECK(max32 < 1e-4f);
}

TEST_CASE("multiplication count: 6 per tile vs 12 direct") {
  const WinogradF43& w = winograd_f43();
  std::mt19937_64 rng(12);
  std::uint64_t wino_muls = 0, direct_muls = 0;
  for (int t = 0; t < 100; ++t) {
    std::array<double, 3> f;
    std::array<double, 6> i6;
    for (auto& v : f) v = urand(rng);
    for (auto& v : i6) v = urand(rng);
    (void)conv_tile_f43(w, i6, f, &wino_muls);
    (void)direct_tile_counted(i6, f, direct_muls);
  }
  CHECK(wino_muls == 600);     // exactly 6 per tile
  CHECK(direct_muls == 1200);  // 12 per tile for the direct form
}

TEST_CASE("bilinearity of the tile") {
  const WinogradF43& w = winograd_f43();
  std::mt19937_64 rng(77);
  for (int t = 0; t < 200; ++t) {
    std::array<double, 3> f, g;
    std::array<double, 6> i6;
    for (auto& v : f) v = urand(rng);
    for (auto& v : g) v = urand(rng);
    for (auto& v : i6) v = urand(rng);
    const double a = urand(rng), b = urand(rng);

    std::array<double, 3> lin;
    for (int k = 0; k < 3; ++k) lin[std::size_t(k)] = a * f[std::size_t(k)] + b * g[std::size_t(k)];
    const auto got = conv_tile_f43(w, i6, lin);
    const auto tf = conv_tile_f43(w, i6, f);
    const auto tg = conv_tile_f43(w, i6, g);
    for (int j = 0; j < 4; ++j)
      CHECK(got[std::size_t(j)] ==
            Catch::Approx(a * tf[std::size_t(j)] + b * tg[std::size_t(j)]).margin(1e-10));
  }
}
