// Analytical resource model: DSP usage of the PE array (with the Winograd
// adjustment), stream-buffer and filter-cache M20K counts, and device
// feasibility checks.
#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dla/topology.hpp"

namespace dla {

// The architecture point: per-cycle vectorization along input depth (C_vec),
// output depth (K_vec), output width (Q_vec), input width (W_vec) and filter
// width (S_vec), plus the width/height interleave factors of the accumulator
// shift registers.
struct VectorConfig {
  int c_vec = 8;
  int k_vec = 48;
  int q_vec = 4;
  int w_vec = 6;
  int s_vec = 3;
  int l_w = 2;
  int l_h = 3;
  bool winograd = true;

  enum class Precision { fp16_shared_exp, fp32 };
  Precision precision = Precision::fp16_shared_exp;

  int interleave() const { return l_w * l_h; }

  // algorithmic MAC slots issued per cycle during convolution
  std::int64_t macs_per_cycle() const {
    return std::int64_t(q_vec) * s_vec * c_vec * k_vec;
  }
  // MAC slots per cycle in fully-connected mode (all W_vec dot units, no tile)
  std::int64_t fc_macs_per_cycle() const {
    return std::int64_t(w_vec) * c_vec * k_vec;
  }
  // hardware multipliers instantiated in the PE array
  std::int64_t physical_multipliers() const {
    return winograd ? std::int64_t(w_vec) * c_vec * k_vec : macs_per_cycle();
  }

  int s_batch() const { return k_vec * 2; }

  void validate() const {
    if (c_vec < 1 || k_vec < 1 || q_vec < 1 || w_vec < 1 || s_vec < 1 || l_w < 1 ||
        l_h < 1)
      throw std::invalid_argument("VectorConfig: all factors must be positive");
    if (w_vec != s_vec + q_vec - 1)
      throw std::invalid_argument("VectorConfig: W_vec must equal S_vec + Q_vec - 1");
    if (winograd && (q_vec != 4 || s_vec != 3 || w_vec != 6))
      throw std::invalid_argument(
          "VectorConfig: Winograd mode requires (Q_vec, S_vec, W_vec) = (4, 3, 6)");
  }
};

constexpr int kM20kWords = 1024;  // 16-bit words per M20K (2 wide x 512 deep)

struct DeviceSpec {
  int dsp_count = 0;
  int m20k_count = 0;
  int m20k_capacity_words = kM20kWords;
  double fmax_hz = 0.0;
  int ddr_bytes_per_cycle = 64;
  double board_watts = 0.0;
  // named constant for the Winograd transform DSP cost; deliberately an
  // over-estimate, overridable per device file
  int winograd_dsp_overhead = 200;

  static DeviceSpec arria10_1150() {
    DeviceSpec d;
    d.dsp_count = 1518;
    d.m20k_count = 2713;
    d.fmax_hz = 303e6;
    d.ddr_bytes_per_cycle = 64;
    d.board_watts = 45.0;
    return d;
  }
};

inline DeviceSpec device_from_json(const nlohmann::json& j) {
  DeviceSpec d;
  d.dsp_count = j.at("dsp_count").get<int>();
  d.m20k_count = j.at("m20k_count").get<int>();
  d.fmax_hz = j.at("fmax_mhz").get<double>() * 1e6;
  d.ddr_bytes_per_cycle = j.value("ddr_bytes_per_cycle", 64);
  d.board_watts = j.value("board_watts", 0.0);
  d.m20k_capacity_words = j.value("m20k_capacity_words", kM20kWords);
  d.winograd_dsp_overhead = j.value("winograd_dsp_overhead", 200);
  return d;
}

inline nlohmann::ordered_json device_to_json(const DeviceSpec& d) {
  nlohmann::ordered_json j;
  j["dsp_count"] = d.dsp_count;
  j["m20k_count"] = d.m20k_count;
  j["fmax_mhz"] = d.fmax_hz / 1e6;
  j["ddr_bytes_per_cycle"] = d.ddr_bytes_per_cycle;
  j["board_watts"] = d.board_watts;
  return j;
}

inline DeviceSpec load_device(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open device file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed device JSON (" + path + "): " + e.what());
  }
  return device_from_json(j);
}

enum class Resource { None, Dsp, M20k };

struct ResourceReport {
  std::int64_t n_dsps = 0;
  std::int64_t m20k_stream = 0;
  std::int64_t m20k_filter_cache = 0;
  bool feasible = false;
  Resource limiting_resource = Resource::None;
  std::vector<std::string> warnings;

  std::int64_t m20k_total() const { return m20k_stream + m20k_filter_cache; }
};

namespace detail {
inline std::int64_t ceil_div64(std::int64_t a, std::int64_t b) {
  return (a + b - 1) / b;
}
}  // namespace detail

// DSP blocks for the PE array. Each DSP does two 16-bit multiplies and adds;
// Winograd halves the multiplier count and adds a fixed transform cost.
// Fractional results round up: hardware cannot use half a DSP.
inline std::int64_t dsp_usage(const VectorConfig& cfg, int winograd_overhead = 200) {
  cfg.validate();
  const std::int64_t mults =
      std::int64_t(cfg.w_vec - cfg.q_vec + 1) * cfg.q_vec * cfg.k_vec * cfg.c_vec;
  if (cfg.winograd) return detail::ceil_div64(mults, 4) + winograd_overhead;
  return detail::ceil_div64(mults, 2);
}

// M20Ks for the stream buffer array: W_vec x C_vec banks sized for the worst
// layer's input plus the tensor actually stored back (post-pool when a pool
// follows the convolution).
inline std::int64_t stream_buffer_m20k(const VectorConfig& cfg, const DlaLayout& layout,
                                       int m20k_words = kM20kWords) {
  cfg.validate();
  const std::int64_t banks = std::int64_t(cfg.w_vec) * cfg.c_vec;
  std::int64_t worst = 0;
  for (const auto& cv : layout.convs) {
    const std::int64_t depth_in = detail::ceil_div64(cv.in_shape.volume(), banks);
    const std::int64_t depth_out = detail::ceil_div64(cv.stored_shape.volume(), banks);
    worst = std::max(worst, depth_in + depth_out);
  }
  if (worst == 0) return 0;
  return detail::ceil_div64(worst, m20k_words) * banks;
}

// M20Ks for the per-PE filter caches: W_vec x C_vec banks per PE, two banks
// per M20K (depth is not the constraint for filters).
inline std::int64_t filter_cache_m20k(const VectorConfig& cfg) {
  cfg.validate();
  return detail::ceil_div64(std::int64_t(cfg.w_vec) * cfg.c_vec * cfg.k_vec, 2);
}

// Words available per PE for cached data (each bank is half an M20K).
inline std::int64_t pe_cache_words(const VectorConfig& cfg, int m20k_words = kM20kWords) {
  return std::int64_t(cfg.w_vec) * cfg.c_vec * (m20k_words / 2);
}

inline ResourceReport check_fit(const VectorConfig& cfg, const DlaLayout& layout,
                                const DeviceSpec& dev) {
  cfg.validate();
  ResourceReport r;
  r.n_dsps = dsp_usage(cfg, dev.winograd_dsp_overhead);
  r.m20k_stream = stream_buffer_m20k(cfg, layout, dev.m20k_capacity_words);
  r.m20k_filter_cache = filter_cache_m20k(cfg);
  r.feasible = r.n_dsps <= dev.dsp_count && r.m20k_total() <= dev.m20k_count;
  if (r.n_dsps > dev.dsp_count)
    r.limiting_resource = Resource::Dsp;
  else if (r.m20k_total() > dev.m20k_count)
    r.limiting_resource = Resource::M20k;

  // fully-connected batches park image features in the PE caches; warn when
  // they do not fit (capacity is already allocated by the filter-cache model)
  const std::int64_t capacity = pe_cache_words(cfg, dev.m20k_capacity_words);
  const int images_per_pe = 2;  // N = S_batch / K_vec
  for (const auto& fc : layout.fcs) {
    const std::int64_t need = std::int64_t(images_per_pe) * fc.n_in;
    if (need > capacity)
      r.warnings.push_back(fc.name + ": " + std::to_string(need) +
                           " cached feature words exceed PE cache capacity of " +
                           std::to_string(capacity));
  }
  return r;
}

}  // namespace dla
