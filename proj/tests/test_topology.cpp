#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "dla/reference.hpp"
#include "dla/topology.hpp"

using namespace dla;

namespace {

double urand(std::mt19937_64& rng) {
  return 2.0 * (double(rng() >> 11) * 0x1p-53) - 1.0;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("builtin alexnet shapes") {
  const Topology t = builtin_alexnet();
  const ShapeTable st = infer_shapes(t);
  REQUIRE(t.layers.size() == 14);

  CHECK(st.rows[0].out == Shape3{96, 55, 55});    // conv1
  CHECK(st.rows[2].out == Shape3{96, 27, 27});    // pool1
  CHECK(st.rows[3].out == Shape3{256, 27, 27});   // conv2
  CHECK(st.rows[6].out == Shape3{384, 13, 13});   // conv3
  CHECK(st.rows[9].out == Shape3{256, 6, 6});     // pool5
  CHECK(st.rows[10].in.volume() == 9216);         // fc6 input
  CHECK(st.rows[10].out == Shape3{4096, 1, 1});
  CHECK(st.rows[13].out == Shape3{1000, 1, 1});   // softmax

  CHECK(st.rows[6].macs == 149'520'384ull);  // conv3 = 384*13*13*256*9
  std::uint64_t conv_macs = 0;
  for (std::size_t i = 0; i < t.layers.size(); ++i)
    if (t.layers[i].kind == LayerKind::Conv) conv_macs += st.rows[i].macs;
  CHECK(conv_macs == 665'784'864ull);  // ~666e6

  const auto names = layer_display_names(t);
  CHECK(names[0] == "conv1");
  CHECK(names[9] == "pool5");
  CHECK(names[10] == "fc6");
  CHECK(names[13] == "softmax");
}

TEST_CASE("shape inference basics") {
  // identity 1x1 conv keeps spatial dims
  Topology t;
  t.input = {4, 9, 7};
  t.layers = {LayerSpec::conv(4, 4, 1, 1, 1, 0, 1, false)};
  const ShapeTable st = infer_shapes(t);
  CHECK(st.rows[0].out == Shape3{4, 9, 7});

  // 3x3/2 pool on 13x13 -> 6x6
  Topology tp;
  tp.input = {2, 13, 13};
  tp.layers = {LayerSpec::max_pool(3, 2)};
  CHECK(infer_shapes(tp).rows[0].out == Shape3{2, 6, 6});
}

TEST_CASE("validation errors name the offending layer") {
  Topology t;
  t.input = {3, 8, 8};
  t.layers = {LayerSpec::conv(3, 96, 3, 3, 1, 1, 1, true),
              LayerSpec::conv(3, 8, 3, 3, 1, 1, 1, true)};  // declares C=3 after K=96
  try {
    infer_shapes(t);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.layer_index() == 1);
    CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
  }

  Topology empty;
  empty.input = {1, 1, 1};
  CHECK_THROWS_WITH(infer_shapes(empty), Catch::Matchers::ContainsSubstring("no layers"));

  // window larger than padded input
  Topology big;
  big.input = {1, 4, 4};
  big.layers = {LayerSpec::conv(1, 1, 9, 9, 1, 0, 1, false)};
  CHECK_THROWS_AS(infer_shapes(big), ValidationError);

  // softmax not last
  Topology sm;
  sm.input = {1, 1, 4};
  sm.layers = {LayerSpec::softmax(), LayerSpec::fully_connected(4, 2, false)};
  CHECK_THROWS_AS(infer_shapes(sm), ValidationError);
}

TEST_CASE("json round trip") {
  const Topology t = builtin_alexnet();
  const std::string path = temp_path("alexnet_roundtrip.json");
  save_topology(t, path);
  const Topology back = load_topology(path);
  CHECK(back == t);
}

TEST_CASE("json rejects malformed and unknown input") {
  const std::string bad = temp_path("bad.json");
  {
    std::ofstream f(bad);
    f << "{ not json";
  }
  CHECK_THROWS_AS(load_topology(bad), ParseError);
  CHECK_THROWS_AS(load_topology(temp_path("does_not_exist.json")), ParseError);

  const std::string unknown = temp_path("unknown_key.json");
  {
    std::ofstream f(unknown);
    f << R"({"name":"x","input":[1,4,4],
         "layers":[{"kind":"conv","K":1,"R":3,"S":3,"stride":1,"pad":0,"frobnicate":1}]})";
  }
  try {
    load_topology(unknown);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("frobnicate") != std::string::npos);
    CHECK(e.layer_index() == 0);
  }

  const std::string badkind = temp_path("bad_kind.json");
  {
    std::ofstream f(badkind);
    f << R"({"name":"x","input":[1,4,4],"layers":[{"kind":"wibble"}]})";
  }
  CHECK_THROWS_AS(load_topology(badkind), ValidationError);
}

TEST_CASE("fold plan for alexnet conv1") {
  const Topology t = builtin_alexnet();
  auto [folded, plan] = fold_strided_conv(t.layers[0], {3, 227, 227});
  CHECK(folded.in_channels == 48);
  CHECK(folded.filter_h == 3);
  CHECK(folded.filter_w == 3);
  CHECK(folded.stride == 1);
  CHECK(plan.folded_in == Shape3{48, 57, 57});
  CHECK(plan.useful_taps() == 121);
  CHECK(plan.padded_taps() == 144);
  // folded output dims
  CHECK(plan.folded_in.h - folded.filter_h + 1 == 55);
}

TEST_CASE("fold of a stride-1 layer is the identity plan") {
  const LayerSpec conv = LayerSpec::conv(4, 8, 3, 3, 1, 1, 1, false);
  auto [folded, plan] = fold_strided_conv(conv, {4, 9, 9});
  CHECK(plan.identity());
  CHECK(folded == conv);
  Tensor in(4, 9, 9);
  in.data[5] = 3.5;
  CHECK(fold_input(plan, in).data == in.data);
}

TEST_CASE("folding preserves convolution semantics") {
  std::mt19937_64 rng(0xf01d);

  auto check_equivalence = [&rng](int c, int h, int w, int k, int r, int s, int stride,
                                  int pad, int groups) {
    const LayerSpec conv = LayerSpec::conv(c, k, r, s, stride, pad, groups, false);
    Tensor in(c, h, w);
    for (auto& v : in.data) v = urand(rng);
    FilterBank fw(k, c / groups, r, s);
    for (auto& v : fw.data) v = urand(rng);
    std::vector<double> bias(std::size_t(k), 0.0);
    for (auto& v : bias) v = urand(rng);

    const Tensor want = direct_conv(in, fw, bias, stride, pad, groups);

    auto [folded, plan] = fold_strided_conv(conv, in.shape);
    const Tensor fin = fold_input(plan, in);
    const FilterBank ffw = fold_filters(plan, fw);
    const Tensor full = direct_conv(fin, ffw, bias, 1, 0, groups);

    // the folded conv may produce extra rows/cols; compare the valid window
    REQUIRE(full.shape.h >= want.shape.h);
    REQUIRE(full.shape.w >= want.shape.w);
    double max_err = 0.0, scale = 0.0;
    for (int kk = 0; kk < want.shape.c; ++kk)
      for (int y = 0; y < want.shape.h; ++y)
        for (int x = 0; x < want.shape.w; ++x) {
          max_err = std::max(max_err, std::fabs(full.at(kk, y, x) - want.at(kk, y, x)));
          scale = std::max(scale, std::fabs(want.at(kk, y, x)));
        }
    CHECK(max_err <= 1e-9 * std::max(scale, 1.0));
  };

  // the spec'd small case: 1 channel 8x8, 4x4 filter, stride 2
  check_equivalence(1, 8, 8, 2, 4, 4, 2, 0, 1);
  // alexnet conv1 geometry (reduced spatial size for speed)
  check_equivalence(3, 39, 39, 8, 11, 11, 4, 0, 1);
  // stride not dividing the filter, with padding, grouped
  check_equivalence(4, 17, 13, 6, 5, 3, 3, 2, 2);
  check_equivalence(2, 10, 10, 2, 2, 2, 2, 1, 1);
}

TEST_CASE("dla layout folds convs and tracks stored tensors") {
  const DlaLayout lay = build_dla_layout(builtin_alexnet());
  REQUIRE(lay.convs.size() == 5);
  REQUIRE(lay.fcs.size() == 3);
  CHECK(lay.softmax_index == 13);

  CHECK(lay.convs[0].in_shape == Shape3{48, 57, 57});
  CHECK(lay.convs[0].out_shape == Shape3{96, 55, 55});
  CHECK(lay.convs[0].stored_shape == Shape3{96, 27, 27});  // post-pool
  CHECK(lay.convs[0].norm_index == 1);
  CHECK(lay.convs[0].pool_index == 2);
  CHECK(lay.convs[2].stored_shape == Shape3{384, 13, 13});  // conv3, no pool
  CHECK(lay.convs[2].norm_index == -1);
  CHECK(lay.convs[4].last_conv);
  CHECK(lay.convs[4].stored_shape == Shape3{256, 6, 6});
  CHECK(lay.convs[0].useful_macs == 105'415'200ull);

  // bypass flags mirror the layer sequence
  CHECK_FALSE(lay.topology.layers[0].bypass_norm);
  CHECK_FALSE(lay.topology.layers[0].bypass_pool);
  CHECK(lay.topology.layers[6].bypass_norm);
  CHECK(lay.topology.layers[6].bypass_pool);
  CHECK(lay.topology.layers[8].bypass_norm);
  CHECK_FALSE(lay.topology.layers[8].bypass_pool);
}

TEST_CASE("layout rejects unsupported layer orders") {
  Topology t;
  t.input = {4, 8, 8};
  t.layers = {LayerSpec::fully_connected(256, 10, false),
              LayerSpec::conv(10, 4, 1, 1, 1, 0, 1, false)};
  CHECK_THROWS_AS(build_dla_layout(t), ValidationError);
}
