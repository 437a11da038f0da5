// Analytical throughput model: per-layer DSP efficiency from the loop-nest
// quantization terms, cycle counts with the DDR-bound correction, batched
// fully-connected cycles, and end-to-end images/s with the system derate.
//
// Cycles are padded work divided by the peak MAC rate. Efficiency is the
// exact ratio useful/padded over the same loop nest, so per-layer
// n_cycles * macs_per_cycle == padded_macs is an integer identity.
#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dla/arch_model.hpp"
#include "dla/topology.hpp"

namespace dla {

constexpr double kDefaultDerate = 0.16;

struct LayerPerf {
  std::string name;
  int layer_index = 0;
  bool is_fc = false;
  double dsp_eff = 0.0;
  std::uint64_t useful_macs = 0;  // per image (conv) or per batch (fc)
  std::uint64_t padded_macs = 0;
  std::uint64_t n_cycles = 0;     // per image (conv) or per batch (fc)
  double byte_req = 0.0;
  double byte_ddr = 0.0;
  double n_real = 0.0;            // >= n_cycles; inflated when DDR bound
  double act_gflops = 0.0;        // physical flops actually retired
  double eff_gflops = 0.0;        // algorithmic flops (2x act under Winograd)
};

struct SystemPerf {
  std::vector<LayerPerf> layers;
  int s_batch = 0;
  double derate = kDefaultDerate;
  double total_cycles_per_image = 0.0;
  double img_per_s_device = 0.0;
  double img_per_s_system = 0.0;
  double img_per_s_per_watt = 0.0;
};

namespace perf_detail {

inline std::int64_t cdiv(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

struct ConvNest {
  std::int64_t k_tiles, p_pad, q_pad, red_pad;  // padded extents of the loop nest
  std::uint64_t n_cycles;
  std::uint64_t padded_macs;
};

inline ConvNest conv_nest(const VectorConfig& cfg, const DlaConvLayer& cv) {
  const LayerSpec& l = cv.folded;
  if (l.stride != 1)
    throw std::invalid_argument("perf model requires a stride-1 (folded) conv");
  const std::int64_t k_g = l.out_channels / l.groups;
  const std::int64_t c_g = cv.in_shape.c / l.groups;
  const std::int64_t p = cv.out_shape.h, q = cv.out_shape.w;

  ConvNest n;
  n.k_tiles = l.groups * cdiv(k_g, cfg.k_vec);
  n.p_pad = cdiv(p, cfg.l_h) * cfg.l_h;
  n.q_pad = cdiv(q, std::int64_t(cfg.q_vec) * cfg.l_w) * cfg.q_vec * cfg.l_w;
  n.red_pad = cdiv(c_g, cfg.c_vec) * cfg.c_vec * l.filter_h *
              cdiv(l.filter_w, cfg.s_vec) * cfg.s_vec;
  n.n_cycles = std::uint64_t(n.k_tiles) * n.p_pad * (n.q_pad / cfg.q_vec) *
               (n.red_pad / (std::int64_t(cfg.s_vec) * cfg.c_vec));
  n.padded_macs = n.n_cycles * std::uint64_t(cfg.macs_per_cycle());
  return n;
}

}  // namespace perf_detail

// Fraction of issued MAC slots doing useful work: the product of the Q/P/K
// quantization terms and the reduction padding (C rounded to C_vec, filter
// rows counted at S_vec granularity, plus zero taps introduced by folding).
inline double dsp_efficiency(const VectorConfig& cfg, const DlaConvLayer& cv) {
  cfg.validate();
  const auto nest = perf_detail::conv_nest(cfg, cv);
  return double(cv.useful_macs) / double(nest.padded_macs);
}

inline double dsp_efficiency(const VectorConfig& cfg, const LayerSpec& conv,
                             Shape3 in_shape) {
  if (conv.kind != LayerKind::Conv) throw std::invalid_argument("not a conv layer");
  if (conv.stride != 1)
    throw std::invalid_argument("dsp_efficiency requires a stride-1 conv; fold first");
  DlaConvLayer cv;
  cv.folded = conv;
  cv.plan = identity_fold(conv, in_shape);
  cv.in_shape = in_shape;
  const int p = (in_shape.h + 2 * conv.pad - conv.filter_h) / conv.stride + 1;
  const int q = (in_shape.w + 2 * conv.pad - conv.filter_w) / conv.stride + 1;
  cv.out_shape = {conv.out_channels, p, q};
  cv.stored_shape = cv.out_shape;
  cv.useful_macs = std::uint64_t(conv.out_channels) * p * q *
                   (in_shape.c / conv.groups) * conv.filter_h * conv.filter_w;
  return dsp_efficiency(cfg, cv);
}

// Per-layer convolution performance. next_layer_filter_bytes is the filter
// prefetch traffic for the following conv layer (0 for the last conv; the
// fully-connected weights stream live and are not prefetched).
inline LayerPerf conv_layer_perf(const VectorConfig& cfg, const DlaConvLayer& cv,
                                 double next_layer_filter_bytes, const DeviceSpec& dev) {
  cfg.validate();
  const auto nest = perf_detail::conv_nest(cfg, cv);

  LayerPerf lp;
  lp.name = cv.name;
  lp.layer_index = cv.layer_index;
  lp.is_fc = false;
  lp.useful_macs = cv.useful_macs;
  lp.padded_macs = nest.padded_macs;
  lp.n_cycles = nest.n_cycles;
  lp.dsp_eff = double(lp.useful_macs) / double(lp.padded_macs);
  lp.byte_req = next_layer_filter_bytes;
  lp.byte_ddr = double(dev.ddr_bytes_per_cycle) * double(lp.n_cycles);
  lp.n_real = double(lp.n_cycles) * std::max(1.0, lp.byte_req / lp.byte_ddr);
  lp.act_gflops =
      2.0 * double(cfg.physical_multipliers()) * dev.fmax_hz * lp.dsp_eff / 1e9;
  lp.eff_gflops = cfg.winograd ? 2.0 * lp.act_gflops : lp.act_gflops;
  return lp;
}

// Batched fully-connected performance (whole batch of S_batch images).
// Weights stream densely at F = (W_vec/N) * C_vec words per cycle and are
// shared across PEs, so the MAC rate is W_vec * C_vec * K_vec per cycle.
inline LayerPerf fc_layer_perf(const VectorConfig& cfg, const DlaFcLayer& fc,
                               const DeviceSpec& dev) {
  cfg.validate();
  if (cfg.w_vec % 2 != 0)
    throw std::invalid_argument("fully-connected mode needs an even W_vec");
  const std::uint64_t weights = std::uint64_t(fc.n_out) * fc.n_in;
  const std::int64_t f_words = (cfg.w_vec / 2) * cfg.c_vec;  // N = S_batch/K_vec = 2

  LayerPerf lp;
  lp.name = fc.name;
  lp.layer_index = fc.layer_index;
  lp.is_fc = true;
  lp.n_cycles = std::uint64_t(perf_detail::cdiv(std::int64_t(weights), f_words));
  lp.useful_macs = weights * std::uint64_t(cfg.s_batch());
  lp.padded_macs = lp.n_cycles * std::uint64_t(cfg.fc_macs_per_cycle());
  lp.dsp_eff = double(lp.useful_macs) / double(lp.padded_macs);
  lp.byte_req = 2.0 * double(weights);
  lp.byte_ddr = double(dev.ddr_bytes_per_cycle) * double(lp.n_cycles);
  lp.n_real = double(lp.n_cycles) * std::max(1.0, lp.byte_req / lp.byte_ddr);
  lp.act_gflops =
      2.0 * double(cfg.fc_macs_per_cycle()) * dev.fmax_hz * lp.dsp_eff / 1e9;
  lp.eff_gflops = lp.act_gflops;  // no Winograd in fully-connected mode
  return lp;
}

inline double conv_filter_bytes(const LayerSpec& conv, int in_channels) {
  return 2.0 * double(conv.out_channels) * (in_channels / conv.groups) * conv.filter_h *
         conv.filter_w;
}

// End-to-end throughput: convolutions run per image, fully-connected layers
// per batch normalized by S_batch. Norm/ReLU/pool run concurrently with the
// PE pipeline and contribute no cycles.
inline SystemPerf system_throughput(const VectorConfig& cfg, const DlaLayout& layout,
                                    const DeviceSpec& dev,
                                    double derate = kDefaultDerate) {
  cfg.validate();
  SystemPerf sp;
  sp.s_batch = cfg.s_batch();
  sp.derate = derate;

  double total = 0.0;
  for (std::size_t i = 0; i < layout.convs.size(); ++i) {
    double next_bytes = 0.0;
    if (i + 1 < layout.convs.size()) {
      const auto& nxt = layout.convs[i + 1];
      next_bytes = conv_filter_bytes(layout.topology.layers[nxt.layer_index],
                                     layout.shapes.rows[nxt.layer_index].in.c);
    }
    LayerPerf lp = conv_layer_perf(cfg, layout.convs[i], next_bytes, dev);
    total += lp.n_real;
    sp.layers.push_back(std::move(lp));
  }
  for (const auto& fc : layout.fcs) {
    LayerPerf lp = fc_layer_perf(cfg, fc, dev);
    total += lp.n_real / sp.s_batch;
    sp.layers.push_back(std::move(lp));
  }

  sp.total_cycles_per_image = total;
  sp.img_per_s_device = total > 0.0 ? dev.fmax_hz / total : 0.0;
  sp.img_per_s_system = sp.img_per_s_device * (1.0 - derate);
  sp.img_per_s_per_watt =
      dev.board_watts > 0.0 ? sp.img_per_s_system / dev.board_watts : 0.0;
  return sp;
}

// ---------------------------------------------------------------------------
// Report emission (text table and JSON), columns: layer, eff_gflops,
// act_gflops, efficiency.

inline std::string gflops_table(const SystemPerf& sp) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof line, "%-8s %14s %14s %8s\n", "layer", "eff_gflops",
                "act_gflops", "eff");
  os << line;
  for (const auto& lp : sp.layers) {
    std::snprintf(line, sizeof line, "%-8s %14.1f %14.1f %7.1f%%\n", lp.name.c_str(),
                  lp.eff_gflops, lp.act_gflops, 100.0 * lp.dsp_eff);
    os << line;
  }
  return os.str();
}

inline nlohmann::ordered_json perf_to_json(const SystemPerf& sp) {
  nlohmann::ordered_json j;
  j["s_batch"] = sp.s_batch;
  j["derate"] = sp.derate;
  j["total_cycles_per_image"] = sp.total_cycles_per_image;
  j["img_per_s_device"] = sp.img_per_s_device;
  j["img_per_s_system"] = sp.img_per_s_system;
  j["img_per_s_per_watt"] = sp.img_per_s_per_watt;
  j["layers"] = nlohmann::ordered_json::array();
  for (const auto& lp : sp.layers) {
    nlohmann::ordered_json l;
    l["layer"] = lp.name;
    l["eff_gflops"] = lp.eff_gflops;
    l["act_gflops"] = lp.act_gflops;
    l["efficiency"] = lp.dsp_eff;
    l["n_cycles"] = lp.n_cycles;
    l["n_real"] = lp.n_real;
    l["byte_req"] = lp.byte_req;
    l["byte_ddr"] = lp.byte_ddr;
    l["useful_macs"] = lp.useful_macs;
    l["padded_macs"] = lp.padded_macs;
    j["layers"].push_back(std::move(l));
  }
  return j;
}

}  // namespace dla
