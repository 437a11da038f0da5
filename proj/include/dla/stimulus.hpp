// Seeded synthetic weights and images for model and fidelity validation.
// Generation is fully determined by the seed and topology, independent of the
// platform's distribution implementations.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "dla/reference.hpp"
#include "dla/tensor.hpp"
#include "dla/topology.hpp"

namespace dla {

enum class WeightScale {
  unit,    // uniform [-1, 1]
  fan_in,  // uniform [-1, 1] * sqrt(3/fan_in); keeps activations near unit
           // scale so FP16 storage never saturates on deep networks
};

namespace stimulus_detail {

// uniform in [-1, 1) from the top 53 bits; identical on every platform
inline double unit(std::mt19937_64& rng) {
  return 2.0 * (double(rng() >> 11) * 0x1p-53) - 1.0;
}

}  // namespace stimulus_detail

inline NetworkWeights make_random_weights(const Topology& topo, std::uint64_t seed,
                                          WeightScale scaling = WeightScale::fan_in) {
  const ShapeTable shapes = infer_shapes(topo);
  std::mt19937_64 rng(seed);
  NetworkWeights w;
  w.layers.resize(topo.layers.size());
  for (std::size_t i = 0; i < topo.layers.size(); ++i) {
    const LayerSpec& l = topo.layers[i];
    auto& lw = w.layers[i];
    if (l.kind == LayerKind::Conv) {
      const int cg = shapes.rows[i].in.c / l.groups;
      const double fan_in = double(cg) * l.filter_h * l.filter_w;
      const double s =
          scaling == WeightScale::fan_in ? std::sqrt(3.0 / fan_in) : 1.0;
      lw.filters = FilterBankF(l.out_channels, cg, l.filter_h, l.filter_w);
      for (float& v : lw.filters.data) v = float(stimulus_detail::unit(rng) * s);
      lw.bias.resize(std::size_t(l.out_channels));
      for (float& v : lw.bias) v = float(stimulus_detail::unit(rng) * s);
    } else if (l.kind == LayerKind::FullyConnected) {
      const int n_in = int(shapes.rows[i].in.volume());
      const double s =
          scaling == WeightScale::fan_in ? std::sqrt(3.0 / double(n_in)) : 1.0;
      lw.weights.resize(std::size_t(l.n_out) * n_in);
      for (float& v : lw.weights) v = float(stimulus_detail::unit(rng) * s);
      lw.bias.resize(std::size_t(l.n_out));
      for (float& v : lw.bias) v = float(stimulus_detail::unit(rng) * s);
    }
  }
  return w;
}

inline std::vector<Tensor> make_random_images(const Topology& topo, int n,
                                              std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<Tensor> images;
  images.reserve(std::size_t(n));
  for (int i = 0; i < n; ++i) {
    Tensor img(topo.input);
    for (double& v : img.data) v = stimulus_detail::unit(rng);
    images.push_back(std::move(img));
  }
  return images;
}

}  // namespace dla
