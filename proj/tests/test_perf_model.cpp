#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dla/perf_model.hpp"
#include "dla/topology.hpp"

using namespace dla;

namespace {

DlaLayout alexnet_layout() { return build_dla_layout(builtin_alexnet()); }

const LayerPerf& layer(const SystemPerf& sp, const std::string& name) {
  for (const auto& lp : sp.layers)
    if (lp.name == name) return lp;
  FAIL("no layer named " + name);
  throw std::logic_error("unreachable");
}

// independent oracle: count useful and issued MAC slots by brute-force loop
// trips over the schedule
std::pair<std::uint64_t, std::uint64_t> count_macs_brute_force(const VectorConfig& cfg,
                                                               const DlaConvLayer& cv) {
  const LayerSpec& l = cv.folded;
  const int kg = l.out_channels / l.groups;
  const int cg = cv.in_shape.c / l.groups;
  std::uint64_t useful = 0, issued = 0;
  for (int grp = 0; grp < l.groups; ++grp)
    for (int kt = 0; kt * cfg.k_vec < kg; ++kt)
      for (int p0 = 0; p0 < cv.out_shape.h; p0 += cfg.l_h)
        for (int q0 = 0; q0 < cv.out_shape.w; q0 += cfg.q_vec * cfg.l_w)
          for (int cs = 0; cs * cfg.c_vec < cg; ++cs)
            for (int r = 0; r < l.filter_h; ++r)
              for (int st = 0; st * cfg.s_vec < l.filter_w; ++st)
                for (int lh = 0; lh < cfg.l_h; ++lh)
                  for (int lw = 0; lw < cfg.l_w; ++lw) {
                    issued += std::uint64_t(cfg.q_vec) * cfg.s_vec * cfg.c_vec *
                              cfg.k_vec;
                    const int p = p0 + lh;
                    if (p >= cv.out_shape.h) continue;
                    for (int pe = 0; pe < cfg.k_vec; ++pe) {
                      if (kt * cfg.k_vec + pe >= kg) continue;
                      for (int qv = 0; qv < cfg.q_vec; ++qv) {
                        const int q = q0 + lw * cfg.q_vec + qv;
                        if (q >= cv.out_shape.w) continue;
                        for (int sv = 0; sv < cfg.s_vec; ++sv) {
                          const int s = st * cfg.s_vec + sv;
                          if (s >= l.filter_w) continue;
                          for (int c = 0; c < cfg.c_vec; ++c)
                            if (cs * cfg.c_vec + c < cg) ++useful;
                        }
                      }
                    }
                  }
  return {useful, issued};
}

}  // namespace

TEST_CASE("the worked efficiency example: Q=20, Q_vec=3, no interleave") {
  VectorConfig cfg;
  cfg.c_vec = 1;
  cfg.k_vec = 1;
  cfg.q_vec = 3;
  cfg.s_vec = 1;
  cfg.w_vec = 3;
  cfg.l_w = 1;
  cfg.l_h = 1;
  cfg.winograd = false;
  const LayerSpec conv = LayerSpec::conv(1, 1, 1, 1, 1, 0, 1, false);
  const double eff = dsp_efficiency(cfg, conv, {1, 1, 20});
  CHECK(eff == Catch::Approx(20.0 / 21.0).margin(1e-12));  // 95%
}

TEST_CASE("alexnet per-layer efficiency at 8x48, L_w=2, L_h=3") {
  const DlaLayout lay = alexnet_layout();
  const VectorConfig cfg;
  CHECK(dsp_efficiency(cfg, lay.convs[0]) == Catch::Approx(0.7963).margin(5e-4));
  // conv2 factorization is exact: 27/32 * 27/27 * 128/144 * 5/6
  CHECK(dsp_efficiency(cfg, lay.convs[1]) == Catch::Approx(0.625).margin(1e-12));
  CHECK(dsp_efficiency(cfg, lay.convs[2]) == Catch::Approx(169.0 / 240.0).margin(1e-12));
  CHECK(dsp_efficiency(cfg, lay.convs[3]) == Catch::Approx(169.0 / 240.0).margin(1e-12));
  CHECK(dsp_efficiency(cfg, lay.convs[4]) == Catch::Approx(0.625926).margin(1e-5));
}

TEST_CASE("fully vectorizable layer reaches efficiency 1") {
  const VectorConfig cfg;  // 8x48, L_w=2, L_h=3, winograd
  // K=48, P=3, Q=8, C=8, 1x3 filter: every dimension divides its factor
  const LayerSpec conv = LayerSpec::conv(8, 48, 1, 3, 1, 0, 1, false);
  const double eff = dsp_efficiency(cfg, conv, {8, 3, 10});
  CHECK(eff == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("dsp_efficiency requires a stride-1 layer") {
  const VectorConfig cfg;
  const LayerSpec strided = LayerSpec::conv(3, 8, 3, 3, 2, 0, 1, false);
  CHECK_THROWS_AS(dsp_efficiency(cfg, strided, {3, 9, 9}), std::invalid_argument);
}

TEST_CASE("alexnet cycle counts at 8x48") {
  const DlaLayout lay = alexnet_layout();
  const VectorConfig cfg;
  const DeviceSpec dev = DeviceSpec::arria10_1150();
  const SystemPerf sp = system_throughput(cfg, lay, dev);

  CHECK(layer(sp, "conv1").n_cycles == 28'728);
  CHECK(layer(sp, "conv2").n_cycles == 77'760);   // 2*3*27*8*6*5*2
  CHECK(layer(sp, "conv3").n_cycles == 46'080);   // 8*15*4*32*3*1
  CHECK(layer(sp, "conv4").n_cycles == 34'560);
  CHECK(layer(sp, "conv5").n_cycles == 25'920);
  CHECK(layer(sp, "conv3").padded_macs == 212'336'640ull);

  CHECK(layer(sp, "fc6").n_cycles == 1'572'864);
  CHECK(layer(sp, "fc7").n_cycles == 699'051);
  CHECK(layer(sp, "fc8").n_cycles == 170'667);

  // fc8 is compute bound: 8.19 MB of weights vs 10.92 MB transferable
  CHECK(layer(sp, "fc8").byte_req == Catch::Approx(8'192'000.0));
  CHECK(layer(sp, "fc8").byte_ddr == Catch::Approx(10'922'688.0));
  // fc6: 75.5 MB < 100.7 MB
  CHECK(layer(sp, "fc6").byte_req == Catch::Approx(75'497'472.0));
  CHECK(layer(sp, "fc6").byte_ddr == Catch::Approx(100'663'296.0));

  // all alexnet layers are compute bound
  for (const auto& lp : sp.layers) CHECK(lp.n_real == Catch::Approx(double(lp.n_cycles)));
}

TEST_CASE("degenerate fc hits the single-cycle floor") {
  const VectorConfig cfg;
  DlaFcLayer fc;
  fc.name = "fc";
  fc.n_in = 1;
  fc.n_out = 1;
  const LayerPerf lp = fc_layer_perf(cfg, fc, DeviceSpec::arria10_1150());
  CHECK(lp.n_cycles == 1);
}

TEST_CASE("system throughput matches the modeled operating point") {
  const DlaLayout lay = alexnet_layout();
  const VectorConfig cfg;
  const DeviceSpec dev = DeviceSpec::arria10_1150();

  const SystemPerf sp = system_throughput(cfg, lay, dev, 0.16);
  CHECK(sp.total_cycles_per_image == Catch::Approx(238'491.5625).margin(1e-6));
  CHECK(sp.img_per_s_device == Catch::Approx(1270.5).margin(0.1));
  CHECK(sp.img_per_s_system == Catch::Approx(1067.2).margin(0.1));
  CHECK(sp.img_per_s_per_watt == Catch::Approx(23.7).margin(0.05));

  const SystemPerf flat = system_throughput(cfg, lay, dev, 0.0);
  CHECK(flat.img_per_s_system == Catch::Approx(flat.img_per_s_device));
  CHECK(flat.img_per_s_device == Catch::Approx(1270.5).margin(0.1));
}

TEST_CASE("gflops columns") {
  const DlaLayout lay = alexnet_layout();
  const VectorConfig cfg;
  const DeviceSpec dev = DeviceSpec::arria10_1150();
  const SystemPerf sp = system_throughput(cfg, lay, dev);

  const double peak = 2.0 * 2304 * 303e6 / 1e9;  // 1396.2 GFLOPS physical
  for (const auto& lp : sp.layers) {
    CHECK(lp.act_gflops == Catch::Approx(peak * lp.dsp_eff).epsilon(1e-9));
    if (lp.is_fc)
      CHECK(lp.eff_gflops == lp.act_gflops);
    else
      CHECK(lp.eff_gflops == 2.0 * lp.act_gflops);  // winograd doubles effective
  }
  CHECK(layer(sp, "conv2").act_gflops == Catch::Approx(872.6).margin(0.1));
  CHECK(layer(sp, "fc6").dsp_eff >= 0.99);
  CHECK(layer(sp, "fc7").dsp_eff >= 0.99);
  CHECK(layer(sp, "fc8").dsp_eff >= 0.99);

  // winograd off: effective equals actual everywhere
  VectorConfig nowino = cfg;
  nowino.winograd = false;
  const SystemPerf sp2 = system_throughput(nowino, lay, dev);
  for (const auto& lp : sp2.layers) CHECK(lp.eff_gflops == lp.act_gflops);
}

TEST_CASE("integer identities of the cycle model") {
  const DlaLayout lay = alexnet_layout();
  const VectorConfig cfg;
  const DeviceSpec dev = DeviceSpec::arria10_1150();
  const SystemPerf sp = system_throughput(cfg, lay, dev);

  for (const auto& lp : sp.layers) {
    const std::uint64_t mpc =
        lp.is_fc ? std::uint64_t(cfg.fc_macs_per_cycle()) : std::uint64_t(cfg.macs_per_cycle());
    CHECK(lp.n_cycles * mpc == lp.padded_macs);
    CHECK(lp.dsp_eff == Catch::Approx(double(lp.useful_macs) / double(lp.padded_macs))
                            .epsilon(1e-15));
    CHECK(lp.n_real ==
          Catch::Approx(double(lp.n_cycles) * std::max(1.0, lp.byte_req / lp.byte_ddr)));
    CHECK(lp.n_real >= double(lp.n_cycles));
  }
}

TEST_CASE("efficiency equals brute-force loop-trip counting on small layers") {
  VectorConfig cfg;
  cfg.c_vec = 4;
  cfg.k_vec = 6;
  cfg.l_w = 2;
  cfg.l_h = 2;

  struct Case { int c, h, w, k, r, s, pad, groups; };
  for (const Case& cs : {Case{5, 9, 11, 7, 3, 3, 1, 1}, Case{8, 7, 7, 12, 1, 5, 2, 2},
                         Case{3, 13, 6, 4, 2, 3, 0, 1}}) {
    const LayerSpec conv =
        LayerSpec::conv(cs.c, cs.k, cs.r, cs.s, 1, cs.pad, cs.groups, false);
    DlaConvLayer cv;
    cv.folded = conv;
    cv.plan = identity_fold(conv, {cs.c, cs.h, cs.w});
    cv.in_shape = {cs.c, cs.h, cs.w};
    const int p = (cs.h + 2 * cs.pad - cs.r) + 1;
    const int q = (cs.w + 2 * cs.pad - cs.s) + 1;
    cv.out_shape = {cs.k, p, q};
    cv.stored_shape = cv.out_shape;
    cv.useful_macs =
        std::uint64_t(cs.k) * p * q * (cs.c / cs.groups) * cs.r * cs.s;

    const auto [useful, issued] = count_macs_brute_force(cfg, cv);
    CHECK(useful == cv.useful_macs);
    const double eff = dsp_efficiency(cfg, cv);
    CHECK(eff == Catch::Approx(double(useful) / double(issued)).epsilon(1e-15));

    const LayerPerf lp = conv_layer_perf(cfg, cv, 0.0, DeviceSpec::arria10_1150());
    CHECK(lp.padded_macs == issued);
  }
}

TEST_CASE("energy conservation: effective flops times time equals 2 x useful MACs") {
  const DlaLayout lay = alexnet_layout();
  const VectorConfig cfg;
  const DeviceSpec dev = DeviceSpec::arria10_1150();
  const SystemPerf sp = system_throughput(cfg, lay, dev);

  for (const auto& lp : sp.layers) {
    const double per_image_cycles = lp.is_fc ? lp.n_real / sp.s_batch : lp.n_real;
    const double time_s = per_image_cycles / dev.fmax_hz;
    const double useful_per_image =
        lp.is_fc ? double(lp.useful_macs) / sp.s_batch : double(lp.useful_macs);
    CHECK(lp.eff_gflops * 1e9 * time_s ==
          Catch::Approx(2.0 * useful_per_image).epsilon(1e-9));
  }
}

TEST_CASE("raising L_h never raises the row efficiency term") {
  const DlaLayout lay = alexnet_layout();
  double prev = 1.0;
  for (const int lh : {1, 2, 3, 4, 5, 7}) {
    VectorConfig cfg;
    cfg.l_h = lh;
    const double eff = dsp_efficiency(cfg, lay.convs[2]);
    CHECK(eff <= prev + 1e-12);
    prev = eff;
  }
}

TEST_CASE("doubling fmax with fixed DDR hardware doubles only compute-bound layers") {
  // a conv whose successor needs a huge filter prefetch is DDR bound
  Topology t;
  t.input = {8, 16, 16};
  t.layers = {LayerSpec::conv(8, 8, 3, 3, 1, 1, 1, true),
              LayerSpec::conv(8, 512, 3, 3, 1, 1, 1, true),
              LayerSpec::conv(512, 512, 3, 3, 1, 1, 1, true)};
  normalize_topology(t);
  const DlaLayout lay = build_dla_layout(t);
  const VectorConfig cfg;

  DeviceSpec base = DeviceSpec::arria10_1150();
  DeviceSpec fast = base;
  fast.fmax_hz = 2.0 * base.fmax_hz;
  fast.ddr_bytes_per_cycle = base.ddr_bytes_per_cycle / 2;  // same bytes/second

  const SystemPerf a = system_throughput(cfg, lay, base);
  const SystemPerf b = system_throughput(cfg, lay, fast);

  REQUIRE(a.layers[0].n_real > double(a.layers[0].n_cycles));  // DDR bound
  REQUIRE(a.layers[2].n_real == double(a.layers[2].n_cycles));  // compute bound

  // compute-bound layer time halves; DDR-bound layer time is unchanged
  const double t0a = a.layers[0].n_real / base.fmax_hz;
  const double t0b = b.layers[0].n_real / fast.fmax_hz;
  CHECK(t0b == Catch::Approx(t0a).epsilon(1e-12));
  const double t2a = a.layers[2].n_real / base.fmax_hz;
  const double t2b = b.layers[2].n_real / fast.fmax_hz;
  CHECK(t2b == Catch::Approx(0.5 * t2a).epsilon(1e-12));
}
