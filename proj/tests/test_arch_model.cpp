#include <catch2/catch_amalgamated.hpp>

#include "dla/arch_model.hpp"
#include "dla/topology.hpp"

using namespace dla;

namespace {

VectorConfig cfg_8x48() { return VectorConfig{}; }

VectorConfig cfg(int c, int k, bool winograd = true) {
  VectorConfig v;
  v.c_vec = c;
  v.k_vec = k;
  v.winograd = winograd;
  return v;
}

DlaLayout alexnet_layout() { return build_dla_layout(builtin_alexnet()); }

}  // namespace

TEST_CASE("dsp usage") {
  VectorConfig base = cfg(8, 48, false);
  CHECK(dsp_usage(base) == 2304);
  CHECK(dsp_usage(cfg(8, 48, true)) == 1352);  // 2304/2 + 200

  VectorConfig tiny = cfg(2, 2, false);
  CHECK(dsp_usage(tiny) == 24);

  CHECK(dsp_usage(cfg(16, 96, true)) == 4808);

  // the transform overhead constant is overridable
  CHECK(dsp_usage(cfg(8, 48, true), 0) == 1152);
}

TEST_CASE("dsp usage is monotone in each vector factor") {
  const DlaLayout lay = alexnet_layout();
  (void)lay;
  for (const bool wino : {false, true}) {
    std::int64_t prev = 0;
    for (int k = 8; k <= 96; k += 8) {
      const auto d = dsp_usage(cfg(8, k, wino));
      CHECK(d >= prev);
      prev = d;
    }
    prev = 0;
    for (int c = 1; c <= 32; c *= 2) {
      const auto d = dsp_usage(cfg(c, 48, wino));
      CHECK(d >= prev);
      prev = d;
    }
  }
}

TEST_CASE("stream buffer m20k for alexnet") {
  // folded conv1 dominates: depth_in 3249 + depth_out 1458 -> 5 M20K x 48 banks
  const DlaLayout lay = alexnet_layout();
  const std::int64_t banks = 48;
  CHECK((lay.convs[0].in_shape.volume() + banks - 1) / banks == 3249);
  CHECK((lay.convs[0].stored_shape.volume() + banks - 1) / banks == 1458);
  CHECK(stream_buffer_m20k(cfg_8x48(), lay) == 240);
}

TEST_CASE("stream buffer m20k single layer and empty cases") {
  // 48x13x13 in and out with 48 banks: ceil(338/1024) = 1 M20K per bank
  Topology t;
  t.input = {48, 13, 13};
  t.layers = {LayerSpec::conv(48, 48, 3, 3, 1, 1, 1, false)};
  CHECK(stream_buffer_m20k(cfg_8x48(), build_dla_layout(t)) == 48);

  // no conv layers -> no stream buffer
  Topology fc_only;
  fc_only.input = {16, 1, 1};
  fc_only.layers = {LayerSpec::fully_connected(16, 4, false)};
  CHECK(stream_buffer_m20k(cfg_8x48(), build_dla_layout(fc_only)) == 0);
}

TEST_CASE("filter cache m20k") {
  CHECK(filter_cache_m20k(cfg_8x48()) == 1152);  // 48 banks * 48 PEs / 2

  VectorConfig small;
  small.c_vec = 1;
  small.k_vec = 2;
  small.q_vec = 2;
  small.s_vec = 1;
  small.w_vec = 2;
  small.winograd = false;
  CHECK(filter_cache_m20k(small) == 2);

  small.k_vec = 1;  // odd bank*pe product forces the round-up
  CHECK(filter_cache_m20k(small) == 1);

  // doubling K_vec exactly doubles the filter cache (banks fixed)
  CHECK(filter_cache_m20k(cfg(8, 96)) == 2 * filter_cache_m20k(cfg(8, 48)));
  CHECK(filter_cache_m20k(cfg(8, 32)) == 2 * filter_cache_m20k(cfg(8, 16)));
}

TEST_CASE("check_fit on the arria 10 preset") {
  const DlaLayout lay = alexnet_layout();
  const DeviceSpec dev = DeviceSpec::arria10_1150();

  const ResourceReport ok = check_fit(cfg(8, 48, true), lay, dev);
  CHECK(ok.n_dsps == 1352);
  CHECK(ok.m20k_stream == 240);
  CHECK(ok.m20k_filter_cache == 1152);
  CHECK(ok.m20k_total() == 1392);
  CHECK(ok.feasible);
  CHECK(ok.limiting_resource == Resource::None);
  CHECK(ok.warnings.empty());

  // measured totals of the real build bound the model from above
  CHECK(ok.n_dsps <= 1476);
  CHECK(ok.m20k_total() <= 2487);

  const ResourceReport too_big = check_fit(cfg(16, 96, true), lay, dev);
  CHECK_FALSE(too_big.feasible);
  CHECK(too_big.limiting_resource == Resource::Dsp);

  DeviceSpec zero;
  zero.dsp_count = 0;
  zero.m20k_count = 0;
  zero.fmax_hz = 1e6;
  const ResourceReport nothing = check_fit(cfg(8, 48, true), lay, zero);
  CHECK_FALSE(nothing.feasible);
}

TEST_CASE("fc feature caching warning") {
  // a fully-connected input too large for the PE caches triggers a warning,
  // not infeasibility
  Topology t;
  t.input = {64, 32, 32};
  t.layers = {LayerSpec::conv(64, 64, 3, 3, 1, 1, 1, true),
              LayerSpec::fully_connected(64 * 32 * 32, 10, false)};
  normalize_topology(t);
  const ResourceReport rr =
      check_fit(cfg_8x48(), build_dla_layout(t), DeviceSpec::arria10_1150());
  REQUIRE(rr.warnings.size() == 1);
  CHECK(rr.warnings[0].find("PE cache capacity") != std::string::npos);
}

TEST_CASE("vector config validation") {
  VectorConfig bad = cfg_8x48();
  bad.w_vec = 5;  // violates W = S + Q - 1
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  VectorConfig wino_bad = cfg_8x48();
  wino_bad.q_vec = 2;
  wino_bad.s_vec = 3;
  wino_bad.w_vec = 4;
  CHECK_THROWS_AS(wino_bad.validate(), std::invalid_argument);  // winograd needs (4,3,6)
  wino_bad.winograd = false;
  CHECK_NOTHROW(wino_bad.validate());

  VectorConfig zero = cfg_8x48();
  zero.k_vec = 0;
  CHECK_THROWS_AS(zero.validate(), std::invalid_argument);
}

TEST_CASE("device json") {
  const DeviceSpec d = device_from_json(nlohmann::json::parse(
      R"({"dsp_count":1518,"m20k_count":2713,"fmax_mhz":303,
          "ddr_bytes_per_cycle":64,"board_watts":45})"));
  CHECK(d.dsp_count == 1518);
  CHECK(d.m20k_count == 2713);
  CHECK(d.fmax_hz == 303e6);
  CHECK(d.ddr_bytes_per_cycle == 64);
  CHECK(d.board_watts == 45.0);

  const auto j = device_to_json(DeviceSpec::arria10_1150());
  CHECK(j["dsp_count"] == 1518);
  CHECK(j["fmax_mhz"] == 303.0);
}
