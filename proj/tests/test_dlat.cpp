#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>

#include "dla/dlat.hpp"
#include "dla/stimulus.hpp"

using namespace dla;

namespace {

std::string temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "dlat_test";
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST_CASE("tensor file round trip per dtype") {
  std::mt19937_64 rng(11);
  std::vector<double> vals(60);
  for (auto& v : vals) v = 2.0 * (double(rng() >> 11) * 0x1p-53) - 1.0;
  const std::vector<std::uint32_t> dims = {3, 4, 5};
  const std::string dir = temp_dir();

  // FP64 is exact
  dlat::write_tensor(dir + "/a64.dlat", dims, vals, dlat::Dtype::f64);
  const auto t64 = dlat::read_tensor(dir + "/a64.dlat");
  CHECK(t64.dims == dims);
  CHECK(t64.values == vals);

  // FP32 is exact for float-valued data
  std::vector<float> fvals(vals.begin(), vals.end());
  dlat::write_tensor(dir + "/a32.dlat", dims, fvals, dlat::Dtype::f32);
  const auto t32 = dlat::read_tensor(dir + "/a32.dlat");
  for (std::size_t i = 0; i < fvals.size(); ++i) CHECK(t32.values[i] == double(fvals[i]));

  // FP16 rounds to the nearest representable value; re-reading is stable
  dlat::write_tensor(dir + "/a16.dlat", dims, vals, dlat::Dtype::f16);
  const auto t16 = dlat::read_tensor(dir + "/a16.dlat");
  for (std::size_t i = 0; i < vals.size(); ++i) {
    CHECK(t16.values[i] == to_fp16(vals[i]).to_double());
  }
  dlat::write_tensor(dir + "/a16b.dlat", dims, t16.values, dlat::Dtype::f16);
  CHECK(dlat::read_tensor(dir + "/a16b.dlat").values == t16.values);
}

TEST_CASE("malformed files are rejected") {
  const std::string dir = temp_dir();
  {
    std::ofstream f(dir + "/bad_magic.dlat", std::ios::binary);
    f << "NOPE" << std::string(16, '\0');
  }
  CHECK_THROWS_AS(dlat::read_tensor(dir + "/bad_magic.dlat"), ParseError);

  {
    std::ofstream f(dir + "/bad_version.dlat", std::ios::binary);
    f << "DLAT";
    const char rest[] = {2, 0, 0, 1, 4, 0, 0, 0};
    f.write(rest, sizeof rest);
  }
  CHECK_THROWS_AS(dlat::read_tensor(dir + "/bad_version.dlat"), ParseError);

  {
    std::ofstream f(dir + "/truncated.dlat", std::ios::binary);
    f << "DLAT";
    const char rest[] = {1, 0, 1, 1, 8, 0, 0, 0};  // promises 8 fp32 values
    f.write(rest, sizeof rest);
  }
  CHECK_THROWS_AS(dlat::read_tensor(dir + "/truncated.dlat"), ParseError);

  CHECK_THROWS_AS(dlat::read_tensor(dir + "/missing.dlat"), ParseError);
}

TEST_CASE("weights manifest round trip") {
  Topology t;
  t.input = {2, 8, 8};
  t.layers = {LayerSpec::conv(2, 4, 3, 3, 1, 1, 2, true),
              LayerSpec::max_pool(2, 2),
              LayerSpec::fully_connected(64, 10, false)};
  normalize_topology(t);
  t.name = "tiny";

  const NetworkWeights w = make_random_weights(t, 5);
  const std::string dir = temp_dir() + "/weights";
  dlat::save_weights(dir, t, w);

  const NetworkWeights back = dlat::load_weights(dir + "/manifest.json", t);
  CHECK(back.layers[0].filters.data == w.layers[0].filters.data);
  CHECK(back.layers[0].bias == w.layers[0].bias);
  CHECK(back.layers[2].weights == w.layers[2].weights);
  CHECK(back.layers[2].bias == w.layers[2].bias);

  // a manifest whose dims disagree with the topology is rejected
  Topology other = t;
  other.layers[0].out_channels = 8;
  normalize_topology(other);
  CHECK_THROWS_AS(dlat::load_weights(dir + "/manifest.json", other), ValidationError);
}
