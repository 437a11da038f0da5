// Transaction-level simulator of the accelerator dataflow: stream-buffer
// banks, PE daisy chain, filter caches, interleaved shift-register
// accumulators, ReLU/Norm/Pool units, sequencer, and batched fully-connected
// mode. Produces real numerics (diffable against the FP64 reference) and
// cycle counts from loop-trip accounting over the same schedule the
// performance model describes.
//
// Numeric fidelity modes:
//   exact_fp32            - FP32 end to end, FP32 storage
//   device_fp16_shared_exp- FP16 stream-buffer/DDR storage, FP32 Winograd
//                           transforms, 18-bit shared-exponent multiplies,
//                           FP32 accumulation, FP16 rounding at write-back
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <climits>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dla/arch_model.hpp"
#include "dla/fp16.hpp"
#include "dla/reference.hpp"
#include "dla/shared_exponent.hpp"
#include "dla/tensor.hpp"
#include "dla/topology.hpp"
#include "dla/winograd.hpp"

namespace dla {

enum class Fidelity { exact_fp32, device_fp16_shared_exp };

inline const char* fidelity_name(Fidelity f) {
  return f == Fidelity::exact_fp32 ? "exact_fp32" : "device_fp16_shared_exp";
}

class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Per-layer error statistics vs the reference model. Relative errors are
// normalized by the layer's max |ref| (per image), which keeps ReLU zeros and
// near-zero elements from blowing up the ratio.
struct ErrorStats {
  double max_abs = 0.0;
  double max_rel = 0.0;
  double mean_rel = 0.0;
  std::uint64_t samples = 0;
  double rel_sum = 0.0;

  template <typename SimT, typename RefT>
  void accumulate(const std::vector<SimT>& sim, const std::vector<RefT>& ref) {
    if (sim.size() != ref.size())
      throw SimError("error stats: tensor size mismatch");
    double denom = 0.0;
    for (const RefT v : ref) denom = std::max(denom, std::fabs(double(v)));
    if (denom == 0.0) denom = 1.0;
    for (std::size_t i = 0; i < sim.size(); ++i) {
      const double d = std::fabs(double(sim[i]) - double(ref[i]));
      max_abs = std::max(max_abs, d);
      const double rel = d / denom;
      max_rel = std::max(max_rel, rel);
      rel_sum += rel;
    }
    samples += sim.size();
    mean_rel = rel_sum / double(samples);
  }
};

struct SimLayerResult {
  std::string name;
  int layer_index = -1;
  std::uint64_t cycles = 0;  // conv: per image; fc: per batch; other units: 0
  std::uint64_t stalls = 0;
  ErrorStats err;
};

struct SimResult {
  std::vector<SimLayerResult> layers;
  std::uint64_t total_cycles = 0;  // whole run, all images
  int images = 0;
  int images_padded = 0;  // including zero images appended to fill a batch
  int s_batch = 0;
  std::vector<std::vector<double>> probabilities;  // per image, host softmax
  std::vector<int> argmax;
  std::vector<int> ref_argmax;  // oracle classifications, when compared
  std::vector<std::string> warnings;
  // first image's stored per-layer tensors, when collect_outputs is set
  std::vector<std::pair<std::string, TensorF>> outputs;
};

struct SimOptions {
  Fidelity fidelity = Fidelity::device_fp16_shared_exp;
  bool compare_reference = true;
  bool collect_outputs = false;        // keep image 0 intermediates for dumping
  const DeviceSpec* device = nullptr;  // when set, gate on check_fit
  std::vector<int> pe_order;           // test hook; empty = natural order
};

// ---------------------------------------------------------------------------
// Stream buffer array: W_vec x C_vec banks, double buffered. Values live in a
// dense CHW tensor; the bank mapping (x % W_vec, c % C_vec) is enforced
// through slot accounting and the one-word-per-bank-per-cycle stick reads.

namespace sim_detail {

inline std::int64_t cdiv(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

class StreamBufferArray {
 public:
  StreamBufferArray(int w_vec, int c_vec, std::int64_t bank_words)
      : w_vec_(w_vec), c_vec_(c_vec), bank_words_(bank_words) {}

  // words a tensor occupies in each bank (uniform-stride addressing)
  std::int64_t bank_slots(const Shape3& s) const {
    if (s.volume() == 0) return 0;
    return cdiv(s.c, c_vec_) * s.h * cdiv(s.w, w_vec_);
  }

  void load_front(TensorF t, bool fp16_storage) {
    front_ = std::move(t);
    if (fp16_storage)
      for (float& v : front_.data) v = fp16_round(v);
    check_capacity();
  }

  // the unit chain writes the finished (post-pool) tensor into the back buffer
  void store_back(TensorF t, bool fp16_storage) {
    back_ = std::move(t);
    if (fp16_storage)
      for (float& v : back_.data) v = fp16_round(v);
    check_capacity();
  }

  void swap() {
    front_ = std::move(back_);
    back_ = TensorF();
  }

  const TensorF& front() const { return front_; }
  void replace_front(TensorF t) { front_ = std::move(t); check_capacity(); }

  // One cycle's read: a 1 x W_vec x C_vec stick, at most one word per bank.
  // Channels at or above c_limit and out-of-range positions read as zero.
  void read_stick(int c0, int c_limit, int y, int x0, float* out) const {
    const Shape3& s = front_.shape;
    for (int w = 0; w < w_vec_; ++w) {
      const int x = x0 + w;
      float* col = out + std::size_t(w) * c_vec_;
      if (y < 0 || y >= s.h || x < 0 || x >= s.w) {
        std::fill(col, col + c_vec_, 0.0f);
        continue;
      }
      for (int c = 0; c < c_vec_; ++c) {
        const int ch = c0 + c;
        col[c] = (ch < c_limit && ch < s.c) ? front_.at(ch, y, x) : 0.0f;
      }
    }
  }

  void check_capacity() const {
    const std::int64_t used = bank_slots(front_.shape) + bank_slots(back_.shape);
    if (bank_words_ > 0 && used > bank_words_)
      throw SimError("stream buffer overflow: " + std::to_string(used) +
                     " words per bank, provisioned " + std::to_string(bank_words_));
  }

 private:
  int w_vec_, c_vec_;
  std::int64_t bank_words_;
  TensorF front_, back_;
};

inline int float_exponent(float v) {
  const std::uint32_t b = std::bit_cast<std::uint32_t>(v) & 0x7fffffffu;
  if (b == 0) return INT_MIN;
  const int e = int(b >> 23);
  if (e == 0xff) throw SimError("non-finite value in data path");
  if (e != 0) return e - 127;
  return std::ilogb(double(v));  // subnormal
}

// 2^e for the product-scale exponents seen in the dot path (hot loop)
inline double pow2i(int e) {
  static const std::vector<double> table = [] {
    std::vector<double> t(1024);
    for (int i = 0; i < 1024; ++i) t[std::size_t(i)] = std::ldexp(1.0, i - 512);
    return t;
  }();
  if (e < -512 || e > 511) return std::ldexp(1.0, e);
  return table[std::size_t(e + 512)];
}

// Shared-exponent block encode of n values into 18-bit mantissas; returns the
// group exponent (shexp::kZeroExponent for an all-zero block).
inline int encode_block(const float* vals, int n, std::int32_t* mant) {
  int e_max = INT_MIN;
  for (int i = 0; i < n; ++i)
    if (vals[i] != 0.0f) e_max = std::max(e_max, float_exponent(vals[i]));
  if (e_max == INT_MIN) {
    std::fill(mant, mant + n, 0);
    return shexp::kZeroExponent;
  }
  const double scale = std::ldexp(1.0, 16 - e_max);
  for (int i = 0; i < n; ++i) {
    const long m = std::lrint(double(vals[i]) * scale);
    mant[i] = std::int32_t(std::clamp(m, -131072L, 131071L));
  }
  return e_max;
}

// Geometry of one stride-1 conv as scheduled on the PE array.
struct ConvGeometry {
  int k = 0, groups = 1, k_g = 0;
  int c_fold = 0, c_g = 0;
  int r = 0, s = 0, pad = 0;
  int h = 0, w = 0;  // folded input
  int p = 0, q = 0;  // output
  int k_tiles_per_group = 0, c_slices = 0, s_strips = 0;
  int tiles() const { return groups * k_tiles_per_group; }
  int reduction_steps() const { return c_slices * r * s_strips; }
};

inline ConvGeometry conv_geometry(const VectorConfig& cfg, const LayerSpec& folded,
                                  Shape3 in, Shape3 out) {
  if (folded.stride != 1)
    throw SimError("simulator requires a stride-1 (folded) convolution");
  ConvGeometry g;
  g.k = folded.out_channels;
  g.groups = folded.groups;
  g.k_g = g.k / g.groups;
  g.c_fold = in.c;
  g.c_g = in.c / g.groups;
  g.r = folded.filter_h;
  g.s = folded.filter_w;
  g.pad = folded.pad;
  g.h = in.h;
  g.w = in.w;
  g.p = out.h;
  g.q = out.w;
  g.k_tiles_per_group = int(cdiv(g.k_g, cfg.k_vec));
  g.c_slices = int(cdiv(g.c_g, cfg.c_vec));
  g.s_strips = int(cdiv(g.s, cfg.s_vec));
  return g;
}

// Per-layer PE filter cache contents: transformed (and, at device fidelity,
// shared-exponent encoded) filter blocks, indexed [tile][reduction block][pe].
struct FilterPlane {
  int vals = 0;  // per entry: W_vec*C_vec (winograd) or S_vec*C_vec (direct)
  std::size_t n_entries = 0;
  std::vector<float> f32;
  std::vector<std::int32_t> mant;
  std::vector<int> exps;

  std::size_t entry(std::size_t tile, std::size_t block, std::size_t pe,
                    std::size_t blocks, std::size_t k_vec) const {
    return (tile * blocks + block) * k_vec + pe;
  }
};

inline FilterPlane build_filter_plane(const VectorConfig& cfg, const ConvGeometry& g,
                                      const FilterBankF& filters, Fidelity fid) {
  const bool device = fid == Fidelity::device_fp16_shared_exp;
  const auto& wg = wino::winograd_f43();
  FilterPlane plane;
  plane.vals = (cfg.winograd ? cfg.w_vec : cfg.s_vec) * cfg.c_vec;
  plane.n_entries =
      std::size_t(g.tiles()) * g.reduction_steps() * std::size_t(cfg.k_vec);
  if (device) {
    plane.mant.assign(plane.n_entries * plane.vals, 0);
    plane.exps.assign(plane.n_entries, shexp::kZeroExponent);
  } else {
    plane.f32.assign(plane.n_entries * plane.vals, 0.0f);
  }

  std::vector<float> scratch(std::size_t(plane.vals), 0.0f);
  for (int tile = 0; tile < g.tiles(); ++tile) {
    const int grp = tile / g.k_tiles_per_group;
    const int t = tile % g.k_tiles_per_group;
    std::size_t block = 0;
    for (int cs = 0; cs < g.c_slices; ++cs)
      for (int rr = 0; rr < g.r; ++rr)
        for (int st = 0; st < g.s_strips; ++st, ++block) {
          for (int pe = 0; pe < cfg.k_vec; ++pe) {
            const std::size_t e =
                plane.entry(tile, block, pe, g.reduction_steps(), cfg.k_vec);
            const int k_local = t * cfg.k_vec + pe;
            std::fill(scratch.begin(), scratch.end(), 0.0f);
            if (k_local < g.k_g) {
              const int k = grp * g.k_g + k_local;
              for (int c = 0; c < cfg.c_vec; ++c) {
                const int cg = cs * cfg.c_vec + c;
                if (cg >= g.c_g) continue;
                std::array<float, wino::kTaps> taps{};
                for (int j = 0; j < cfg.s_vec && j < wino::kTaps; ++j) {
                  const int ss = st * cfg.s_vec + j;
                  if (ss >= g.s) continue;
                  float v = filters.at(k, cg, rr, ss);
                  if (device) v = fp16_round(v);  // weights arrive as 16-bit words
                  taps[j] = v;
                }
                if (cfg.winograd) {
                  const auto wf = wino::transform_filter<float>(wg, taps);
                  for (int w = 0; w < cfg.w_vec; ++w)
                    scratch[std::size_t(w) * cfg.c_vec + c] = wf[w];
                } else {
                  for (int j = 0; j < cfg.s_vec; ++j)
                    scratch[std::size_t(j) * cfg.c_vec + c] = taps[j];
                }
              }
            }
            if (device) {
              plane.exps[e] = encode_block(scratch.data(), plane.vals,
                                           plane.mant.data() + e * plane.vals);
            } else {
              std::copy(scratch.begin(), scratch.end(),
                        plane.f32.begin() + e * plane.vals);
            }
          }
        }
  }
  return plane;
}

// Executes one convolution layer over the stream buffer front tensor.
// Returns the FP32 staged output (pre norm/pool/storage-rounding) and adds
// the issued cycle count (loop trips, including padded slots).
inline TensorF conv_core(const VectorConfig& cfg, const ConvGeometry& g,
                         const StreamBufferArray& stream, const FilterPlane& plane,
                         const std::vector<float>& bias, bool relu, Fidelity fid,
                         std::uint64_t& cycles, const std::vector<int>* pe_order) {
  const bool device = fid == Fidelity::device_fp16_shared_exp;
  const auto& wg = wino::winograd_f43();

  // FP32 copies of the output transform for the ReLU unit
  std::array<std::array<float, wino::kWidth>, wino::kOutputs> atf;
  for (int i = 0; i < wino::kOutputs; ++i)
    for (int j = 0; j < wino::kWidth; ++j) atf[i][j] = float(wg.at[i][j]);
  std::array<std::array<float, wino::kWidth>, wino::kWidth> btf;
  for (int i = 0; i < wino::kWidth; ++i)
    for (int j = 0; j < wino::kWidth; ++j) btf[i][j] = float(wg.bt[i][j]);

  std::vector<int> natural_order;
  if (!pe_order) {
    natural_order.resize(cfg.k_vec);
    for (int i = 0; i < cfg.k_vec; ++i) natural_order[i] = i;
  } else if (int(pe_order->size()) != cfg.k_vec) {
    throw SimError("pe_order must list every PE exactly once");
  }
  const std::vector<int>& order = pe_order ? *pe_order : natural_order;

  TensorF staged(g.k, g.p, g.q);
  const int l_total = cfg.interleave();
  const int row_blocks = int(cdiv(g.p, cfg.l_h));
  const int col_supers = int(cdiv(g.q, std::int64_t(cfg.q_vec) * cfg.l_w));
  const int acc_width = cfg.winograd ? cfg.w_vec : cfg.q_vec;
  const int stick_vals = cfg.w_vec * cfg.c_vec;

  std::vector<float> acc(std::size_t(l_total) * cfg.k_vec * acc_width);
  std::vector<float> stick(stick_vals), trans(stick_vals);
  std::vector<std::int32_t> feat_mant(stick_vals);
  std::vector<int> bank_count(std::size_t(cfg.w_vec) * cfg.c_vec);

  for (int tile = 0; tile < g.tiles(); ++tile) {
    const int grp = tile / g.k_tiles_per_group;
    const int t_in_grp = tile % g.k_tiles_per_group;
    for (int rb = 0; rb < row_blocks; ++rb) {
      const int p0 = rb * cfg.l_h;
      for (int csup = 0; csup < col_supers; ++csup) {
        const int q0 = csup * cfg.q_vec * cfg.l_w;
        std::fill(acc.begin(), acc.end(), 0.0f);

        std::size_t block = 0;
        for (int cs = 0; cs < g.c_slices; ++cs) {
          const int c0 = grp * g.c_g + cs * cfg.c_vec;
          const int c_limit = std::min((grp + 1) * g.c_g, g.c_fold);
          for (int rr = 0; rr < g.r; ++rr) {
            for (int st = 0; st < g.s_strips; ++st, ++block) {
              for (int lh = 0; lh < cfg.l_h; ++lh) {
                const int y = p0 + lh + rr - g.pad;
                for (int lw = 0; lw < cfg.l_w; ++lw) {
                  ++cycles;
                  const int x0 = q0 + lw * cfg.q_vec + st * cfg.s_vec - g.pad;
                  stream.read_stick(c0, c_limit, y, x0, stick.data());

                  const float* feat = stick.data();
                  if (cfg.winograd) {
                    for (int c = 0; c < cfg.c_vec; ++c)
                      for (int w = 0; w < cfg.w_vec; ++w) {
                        float s = 0.0f;
                        for (int j = 0; j < cfg.w_vec; ++j)
                          s += btf[w][j] * stick[std::size_t(j) * cfg.c_vec + c];
                        trans[std::size_t(w) * cfg.c_vec + c] = s;
                      }
                    feat = trans.data();
                  }

                  int feat_e = 0;
                  if (device) {
                    feat_e = encode_block(feat, stick_vals, feat_mant.data());
                    if (feat_e == shexp::kZeroExponent) continue;  // all-zero stick
                  }

                  const int slot = lh * cfg.l_w + lw;
                  for (const int pe : order) {
                    const std::size_t e =
                        plane.entry(tile, block, pe, g.reduction_steps(), cfg.k_vec);
                    float* a =
                        acc.data() + (std::size_t(slot) * cfg.k_vec + pe) * acc_width;
                    if (cfg.winograd) {
                      if (device) {
                        if (plane.exps[e] == shexp::kZeroExponent) continue;
                        const double scale =
                            pow2i(feat_e + plane.exps[e] - 32);
                        const std::int32_t* fm = plane.mant.data() + e * plane.vals;
                        for (int w = 0; w < cfg.w_vec; ++w) {
                          std::int64_t s = 0;
                          const std::int32_t* fa = fm + std::size_t(w) * cfg.c_vec;
                          const std::int32_t* fb =
                              feat_mant.data() + std::size_t(w) * cfg.c_vec;
                          for (int c = 0; c < cfg.c_vec; ++c)
                            s += std::int64_t(fa[c]) * fb[c];
                          a[w] += float(double(s) * scale);
                        }
                      } else {
                        const float* fw = plane.f32.data() + e * plane.vals;
                        for (int w = 0; w < cfg.w_vec; ++w) {
                          float s = 0.0f;
                          const float* fa = fw + std::size_t(w) * cfg.c_vec;
                          const float* fb = feat + std::size_t(w) * cfg.c_vec;
                          for (int c = 0; c < cfg.c_vec; ++c) s += fa[c] * fb[c];
                          a[w] += s;
                        }
                      }
                    } else {
                      // direct mode: Q_vec sliding dot products per PE
                      if (device) {
                        if (plane.exps[e] == shexp::kZeroExponent) continue;
                        const double scale =
                            pow2i(feat_e + plane.exps[e] - 32);
                        const std::int32_t* fm = plane.mant.data() + e * plane.vals;
                        for (int qv = 0; qv < cfg.q_vec; ++qv) {
                          std::int64_t s = 0;
                          for (int j = 0; j < cfg.s_vec; ++j) {
                            const std::int32_t* fa = fm + std::size_t(j) * cfg.c_vec;
                            const std::int32_t* fb =
                                feat_mant.data() + std::size_t(qv + j) * cfg.c_vec;
                            for (int c = 0; c < cfg.c_vec; ++c)
                              s += std::int64_t(fa[c]) * fb[c];
                          }
                          a[qv] += float(double(s) * scale);
                        }
                      } else {
                        const float* fw = plane.f32.data() + e * plane.vals;
                        for (int qv = 0; qv < cfg.q_vec; ++qv) {
                          float s = 0.0f;
                          for (int j = 0; j < cfg.s_vec; ++j) {
                            const float* fa = fw + std::size_t(j) * cfg.c_vec;
                            const float* fb = feat + std::size_t(qv + j) * cfg.c_vec;
                            for (int c = 0; c < cfg.c_vec; ++c) s += fa[c] * fb[c];
                          }
                          a[qv] += s;
                        }
                      }
                    }
                  }
                }
              }
            }
          }
        }

        // drain: output transform in the ReLU unit, bias, non-linearity,
        // write-back burst through the crossbar
        std::fill(bank_count.begin(), bank_count.end(), 0);
        for (int lh = 0; lh < cfg.l_h; ++lh) {
          const int p = p0 + lh;
          if (p >= g.p) continue;
          for (int lw = 0; lw < cfg.l_w; ++lw) {
            const int slot = lh * cfg.l_w + lw;
            for (int pe = 0; pe < cfg.k_vec; ++pe) {
              const int k_local = t_in_grp * cfg.k_vec + pe;
              if (k_local >= g.k_g) continue;
              const int k = grp * g.k_g + k_local;
              const float* a =
                  acc.data() + (std::size_t(slot) * cfg.k_vec + pe) * acc_width;
              std::array<float, wino::kOutputs> out{};
              if (cfg.winograd) {
                for (int i = 0; i < wino::kOutputs; ++i) {
                  float s = 0.0f;
                  for (int j = 0; j < wino::kWidth; ++j) s += atf[i][j] * a[j];
                  out[i] = s;
                }
              } else {
                for (int i = 0; i < cfg.q_vec && i < wino::kOutputs; ++i) out[i] = a[i];
              }
              for (int j = 0; j < cfg.q_vec; ++j) {
                const int q = q0 + lw * cfg.q_vec + j;
                if (q >= g.q) continue;
                float v = out[j] + (bias.empty() ? 0.0f : bias[k]);
                if (relu) v = std::max(v, 0.0f);
                staged.at(k, p, q) = v;
                ++bank_count[std::size_t(q % cfg.w_vec) * cfg.c_vec + (k % cfg.c_vec)];
              }
            }
          }
        }
        // write-back must fit in the compute interval at one word/bank/cycle
        const int interval = g.reduction_steps() * l_total;
        for (int bc : bank_count)
          if (bc > interval)
            throw SimError("stream buffer write burst exceeds bank bandwidth");
      }
    }
  }
  return staged;
}

}  // namespace sim_detail

// ---------------------------------------------------------------------------
// Single-layer entry points

struct ConvLayerRun {
  TensorF output;  // as stored (FP16-rounded at device fidelity)
  std::uint64_t cycles = 0;
};

// Runs one stride-1 convolution through the PE array. Cycle counts include
// every padded slot the schedule issues.
inline ConvLayerRun run_conv_layer(const VectorConfig& cfg, const LayerSpec& conv,
                                   const TensorF& input, const FilterBankF& filters,
                                   const std::vector<float>& bias, Fidelity fid,
                                   const std::vector<int>* pe_order = nullptr) {
  cfg.validate();
  if (conv.kind != LayerKind::Conv) throw SimError("run_conv_layer: not a conv layer");
  const Shape3 in = input.shape;
  const int p = (in.h + 2 * conv.pad - conv.filter_h) / conv.stride + 1;
  const int q = (in.w + 2 * conv.pad - conv.filter_w) / conv.stride + 1;
  const auto geo = sim_detail::conv_geometry(cfg, conv, in, {conv.out_channels, p, q});

  // provision banks for this single layer (input + output resident)
  const std::int64_t banks = std::int64_t(cfg.w_vec) * cfg.c_vec;
  const std::int64_t depth = sim_detail::cdiv(in.volume(), banks) +
                             sim_detail::cdiv(std::int64_t(conv.out_channels) * p * q, banks);
  const std::int64_t bank_words = sim_detail::cdiv(depth, kM20kWords) * kM20kWords;

  const bool device = fid == Fidelity::device_fp16_shared_exp;
  sim_detail::StreamBufferArray stream(cfg.w_vec, cfg.c_vec, bank_words);
  stream.load_front(input, device);

  const auto plane = sim_detail::build_filter_plane(cfg, geo, filters, fid);
  ConvLayerRun run;
  run.output = sim_detail::conv_core(cfg, geo, stream, plane, bias, conv.relu, fid,
                                     run.cycles, pe_order);
  if (device)
    for (float& v : run.output.data) v = fp16_round(v);
  return run;
}

struct FcLayerRun {
  std::vector<std::vector<float>> outputs;  // S_batch vectors of n_out
  std::uint64_t cycles = 0;                 // per batch
};

// Batched fully-connected execution: features live in the PE caches, weights
// stream in densely at F = (W_vec/N) * C_vec words per cycle and are shared
// across all PEs; W_vec/N dot units accumulate per image and reduce at the
// end. No Winograd transforms in this mode.
inline FcLayerRun run_fc_layer(const VectorConfig& cfg, int n_in, int n_out, bool relu,
                               const std::vector<std::vector<float>>& batch,
                               const std::vector<float>& weights,
                               const std::vector<float>& bias, Fidelity fid) {
  cfg.validate();
  if (cfg.w_vec % 2 != 0) throw SimError("fully-connected mode needs an even W_vec");
  if (int(batch.size()) != cfg.s_batch())
    throw SimError("fc batch size must be S_batch = " + std::to_string(cfg.s_batch()));
  for (const auto& f : batch)
    if (int(f.size()) != n_in) throw SimError("fc feature length mismatch");
  if (weights.size() != std::size_t(n_out) * n_in)
    throw SimError("fc weight matrix shape mismatch");
  if (2LL * n_in > pe_cache_words(cfg))
    throw SimError("fc features do not fit the PE caches");

  const bool device = fid == Fidelity::device_fp16_shared_exp;
  const int units = cfg.w_vec / 2;  // N = 2 images per PE
  const int n_groups = int(sim_detail::cdiv(n_in, cfg.c_vec));
  const int padded = n_groups * cfg.c_vec;

  // cached features, FP16 at device fidelity, padded to whole C_vec groups
  std::vector<std::vector<float>> feats(batch.size(),
                                        std::vector<float>(std::size_t(padded), 0.0f));
  std::vector<std::vector<std::int32_t>> feat_mant;
  std::vector<std::vector<int>> feat_exps;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (int j = 0; j < n_in; ++j)
      feats[i][j] = device ? fp16_round(batch[i][j]) : batch[i][j];
  }
  if (device) {
    feat_mant.assign(batch.size(), std::vector<std::int32_t>(std::size_t(padded)));
    feat_exps.assign(batch.size(), std::vector<int>(std::size_t(n_groups)));
    for (std::size_t i = 0; i < batch.size(); ++i)
      for (int gi = 0; gi < n_groups; ++gi)
        feat_exps[i][gi] = sim_detail::encode_block(
            feats[i].data() + std::size_t(gi) * cfg.c_vec, cfg.c_vec,
            feat_mant[i].data() + std::size_t(gi) * cfg.c_vec);
  }

  FcLayerRun run;
  run.outputs.assign(batch.size(), std::vector<float>(std::size_t(n_out), 0.0f));
  run.cycles = std::uint64_t(
      sim_detail::cdiv(std::int64_t(n_out) * n_in, std::int64_t(units) * cfg.c_vec));

  std::vector<float> row(std::size_t(padded), 0.0f);
  std::vector<std::int32_t> row_mant(std::size_t(padded), 0);
  std::vector<int> row_exps(std::size_t(n_groups), 0);
  std::vector<float> acc(std::size_t(units), 0.0f);
  for (int k = 0; k < n_out; ++k) {
    const float* wrow = weights.data() + std::size_t(k) * n_in;
    for (int j = 0; j < n_in; ++j) row[j] = device ? fp16_round(wrow[j]) : wrow[j];
    std::fill(row.begin() + n_in, row.end(), 0.0f);
    if (device)
      for (int gi = 0; gi < n_groups; ++gi)
        row_exps[gi] = sim_detail::encode_block(row.data() + std::size_t(gi) * cfg.c_vec,
                                                cfg.c_vec,
                                                row_mant.data() + std::size_t(gi) * cfg.c_vec);
    for (std::size_t img = 0; img < batch.size(); ++img) {
      std::fill(acc.begin(), acc.end(), 0.0f);
      if (device) {
        for (int gi = 0; gi < n_groups; ++gi) {
          if (row_exps[gi] == shexp::kZeroExponent ||
              feat_exps[img][gi] == shexp::kZeroExponent)
            continue;
          std::int64_t s = 0;
          const std::int32_t* a = row_mant.data() + std::size_t(gi) * cfg.c_vec;
          const std::int32_t* b = feat_mant[img].data() + std::size_t(gi) * cfg.c_vec;
          for (int c = 0; c < cfg.c_vec; ++c) s += std::int64_t(a[c]) * b[c];
          const double scale = sim_detail::pow2i(row_exps[gi] + feat_exps[img][gi] - 32);
          acc[gi % units] += float(double(s) * scale);
        }
      } else {
        for (int gi = 0; gi < n_groups; ++gi) {
          float s = 0.0f;
          const float* a = row.data() + std::size_t(gi) * cfg.c_vec;
          const float* b = feats[img].data() + std::size_t(gi) * cfg.c_vec;
          for (int c = 0; c < cfg.c_vec; ++c) s += a[c] * b[c];
          acc[gi % units] += s;
        }
      }
      float v = 0.0f;
      for (int u = 0; u < units; ++u) v += acc[u];
      v += bias.empty() ? 0.0f : bias[k];
      if (relu) v = std::max(v, 0.0f);
      run.outputs[img][k] = device ? fp16_round(v) : v;
    }
  }
  return run;
}

// ---------------------------------------------------------------------------
// Whole-network execution

namespace sim_detail {

struct OracleFcRecord {
  std::vector<std::vector<double>> fc_acts;  // per fc layer, post-activation
  std::vector<double> softmax_out;
  int argmax = -1;
};

inline int argmax_of(const std::vector<double>& v) {
  return int(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace sim_detail

// Runs the full sequencer walk: per-image convolution phase through the
// stream buffers, batched fully-connected phase through the PE caches, and a
// host-side softmax reference stage. Cycle totals follow the schedule:
// sum(conv cycles) * images + sum(fc batch cycles) * batches.
inline SimResult run_network(const VectorConfig& cfg, const DlaLayout& layout,
                             const NetworkWeights& weights,
                             const std::vector<Tensor>& images, const SimOptions& opt) {
  cfg.validate();
  const Topology& topo = layout.topology;
  if (weights.layers.size() != topo.layers.size())
    throw SimError("run_network: weights do not match topology");
  if (images.empty()) throw SimError("run_network: no input images");
  if (opt.device) {
    const ResourceReport rr = check_fit(cfg, layout, *opt.device);
    if (!rr.feasible) throw SimError("run_network: configuration infeasible on device");
  }
  const bool device = opt.fidelity == Fidelity::device_fp16_shared_exp;
  const auto names = layer_display_names(topo);

  SimResult res;
  res.s_batch = cfg.s_batch();
  res.images = int(images.size());
  res.images_padded =
      layout.fcs.empty()
          ? res.images
          : int(sim_detail::cdiv(std::int64_t(images.size()), res.s_batch)) *
                res.s_batch;
  if (res.images_padded != res.images)
    res.warnings.push_back("padding batch with " +
                           std::to_string(res.images_padded - res.images) +
                           " zero images (batch size " + std::to_string(res.s_batch) +
                           ")");

  std::vector<SimLayerResult> per_layer(topo.layers.size());
  for (std::size_t i = 0; i < topo.layers.size(); ++i) {
    per_layer[i].name = names[i];
    per_layer[i].layer_index = int(i);
  }

  // per-conv preparation: folded filters, filter planes, geometry, biases
  struct ConvPrep {
    sim_detail::ConvGeometry geo;
    sim_detail::FilterPlane plane;
    std::vector<float> bias;
  };
  std::vector<ConvPrep> preps;
  preps.reserve(layout.convs.size());
  for (const auto& cv : layout.convs) {
    const auto& lw = weights.layers[cv.layer_index];
    if (lw.filters.data.empty())
      throw SimError("run_network: missing filters for " + cv.name);
    ConvPrep prep;
    prep.geo = sim_detail::conv_geometry(cfg, cv.folded, cv.in_shape, cv.out_shape);
    const FilterBankF folded = fold_filters(cv.plan, lw.filters);
    prep.plane = sim_detail::build_filter_plane(cfg, prep.geo, folded, opt.fidelity);
    prep.bias = lw.bias;
    preps.push_back(std::move(prep));
  }
  for (const auto& fc : layout.fcs)
    if (weights.layers[fc.layer_index].weights.empty())
      throw SimError("run_network: missing weights for " + fc.name);

  // stream buffer provisioning from the resource model
  const std::int64_t banks = std::int64_t(cfg.w_vec) * cfg.c_vec;
  const std::int64_t total_m20k = stream_buffer_m20k(cfg, layout);
  const std::int64_t bank_words = total_m20k / banks * kM20kWords;

  const int n_fc_in =
      layout.fcs.empty() ? 0 : layout.fcs.front().n_in;
  std::vector<std::vector<float>> fc_inputs(res.images_padded,
                                            std::vector<float>(std::size_t(n_fc_in), 0.0f));
  std::vector<sim_detail::OracleFcRecord> oracle_fc(opt.compare_reference ? images.size()
                                                                          : 0);

  std::uint64_t conv_cycles_per_image = 0;
  for (int img = 0; img < res.images; ++img) {
    // oracle activations for this image (FP64, original strided topology)
    std::vector<Tensor> ref_acts;
    if (opt.compare_reference) ref_acts = run_reference(topo, weights, images[img]);

    sim_detail::StreamBufferArray stream(cfg.w_vec, cfg.c_vec, bank_words);
    TensorF image_f = images[img].cast<float>();

    std::uint64_t conv_cycles = 0;
    for (std::size_t ci = 0; ci < layout.convs.size(); ++ci) {
      const DlaConvLayer& cv = layout.convs[ci];
      const LayerSpec& orig = topo.layers[cv.layer_index];
      const bool chain_continues = cv.norm_index >= 0 || cv.pool_index >= 0;

      if (ci == 0) {
        stream.load_front(fold_input(cv.plan, image_f), device);
      } else if (!cv.plan.identity()) {
        // mid-network fold: the sequencer re-addresses the stored tensor
        stream.replace_front(fold_input(cv.plan, stream.front()));
      }

      std::uint64_t layer_cycles = 0;
      TensorF staged = sim_detail::conv_core(
          cfg, preps[ci].geo, stream, preps[ci].plane, preps[ci].bias, orig.relu,
          opt.fidelity, layer_cycles,
          opt.pe_order.empty() ? nullptr : &opt.pe_order);
      conv_cycles += layer_cycles;
      if (img == 0) per_layer[cv.layer_index].cycles = layer_cycles;
      if (opt.compare_reference && chain_continues)
        per_layer[cv.layer_index].err.accumulate(staged.data,
                                                 ref_acts[cv.layer_index].data);

      if (cv.norm_index >= 0) {
        const LayerSpec& nl = topo.layers[cv.norm_index];
        if ((nl.norm_n - 1) / 2 > cfg.k_vec)
          throw SimError("norm window exceeds the one-tile reorder buffer");
        // norm unit: FP32 math over the staged tile outputs
        TensorF out(staged.shape);
        const int half = nl.norm_n / 2;
        for (int c = 0; c < staged.shape.c; ++c) {
          const int lo = std::max(0, c - half);
          const int hi = std::min(staged.shape.c - 1, c + half);
          for (int y = 0; y < staged.shape.h; ++y)
            for (int x = 0; x < staged.shape.w; ++x) {
              float ss = 0.0f;
              for (int cc = lo; cc <= hi; ++cc) {
                const float v = staged.at(cc, y, x);
                ss += v * v;
              }
              out.at(c, y, x) = float(
                  staged.at(c, y, x) /
                  std::pow(float(nl.k) + float(nl.alpha) / float(nl.norm_n) * ss,
                           float(nl.beta)));
            }
        }
        staged = std::move(out);
        if (opt.compare_reference && cv.pool_index >= 0)
          per_layer[cv.norm_index].err.accumulate(staged.data,
                                                  ref_acts[cv.norm_index].data);
      }

      if (cv.pool_index >= 0) {
        const LayerSpec& pl = topo.layers[cv.pool_index];
        TensorF out(cv.stored_shape);
        for (int c = 0; c < out.shape.c; ++c)
          for (int oy = 0; oy < out.shape.h; ++oy)
            for (int ox = 0; ox < out.shape.w; ++ox) {
              float m = staged.at(c, oy * pl.stride, ox * pl.stride);
              for (int dy = 0; dy < pl.window; ++dy)
                for (int dx = 0; dx < pl.window; ++dx)
                  m = std::max(m, staged.at(c, oy * pl.stride + dy,
                                            ox * pl.stride + dx));
              out.at(c, oy, ox) = m;
            }
        staged = std::move(out);
      }

      // write back through the crossbar (FP16 storage at device fidelity);
      // the last conv spills to DDR instead
      stream.store_back(std::move(staged), device);
      stream.swap();
      // the chain's final stage is compared as stored (post-rounding)
      const int final_index =
          cv.pool_index >= 0
              ? cv.pool_index
              : (cv.norm_index >= 0 ? cv.norm_index : cv.layer_index);
      if (opt.compare_reference)
        per_layer[final_index].err.accumulate(stream.front().data,
                                              ref_acts[final_index].data);
      if (opt.collect_outputs && img == 0)
        res.outputs.emplace_back(names[final_index], stream.front());

      if (cv.last_conv && n_fc_in > 0) {
        const TensorF& spilled = stream.front();
        std::copy(spilled.data.begin(), spilled.data.end(), fc_inputs[img].begin());
      }
    }
    if (img == 0) {
      conv_cycles_per_image = conv_cycles;
    } else if (conv_cycles != conv_cycles_per_image) {
      throw SimError("conv cycle count varied between images");
    }

    if (opt.compare_reference) {
      auto& rec = oracle_fc[img];
      for (const auto& fc : layout.fcs)
        rec.fc_acts.push_back(ref_acts[fc.layer_index].data);
      if (layout.softmax_index >= 0) {
        rec.softmax_out = ref_acts[layout.softmax_index].data;
        rec.argmax = sim_detail::argmax_of(rec.softmax_out);
      } else if (!layout.fcs.empty()) {
        rec.argmax = sim_detail::argmax_of(rec.fc_acts.back());
      }
    }
  }

  res.total_cycles = conv_cycles_per_image * std::uint64_t(res.images_padded);

  // fully-connected phase, per batch
  const int n_batches = layout.fcs.empty() ? 0 : res.images_padded / res.s_batch;
  std::uint64_t fc_cycles_per_batch = 0;
  std::vector<std::vector<float>> batch_feats;
  for (int b = 0; b < n_batches; ++b) {
    batch_feats.assign(fc_inputs.begin() + std::size_t(b) * res.s_batch,
                       fc_inputs.begin() + std::size_t(b + 1) * res.s_batch);
    for (std::size_t fi = 0; fi < layout.fcs.size(); ++fi) {
      const DlaFcLayer& fc = layout.fcs[fi];
      const auto& lw = weights.layers[fc.layer_index];
      FcLayerRun run = run_fc_layer(cfg, fc.n_in, fc.n_out, fc.relu, batch_feats,
                                    lw.weights, lw.bias, opt.fidelity);
      if (b == 0) {
        per_layer[fc.layer_index].cycles = run.cycles;
        fc_cycles_per_batch += run.cycles;
      }
      if (opt.compare_reference) {
        for (int i = 0; i < res.s_batch; ++i) {
          const int img = b * res.s_batch + i;
          if (img >= res.images) break;
          per_layer[fc.layer_index].err.accumulate(run.outputs[i],
                                                   oracle_fc[img].fc_acts[fi]);
        }
      }
      if (opt.collect_outputs && b == 0) {
        TensorF out = TensorF::flat(fc.n_out);
        out.data = run.outputs[0];
        res.outputs.emplace_back(fc.name, std::move(out));
      }
      batch_feats = std::move(run.outputs);
    }

    // host-side softmax reference stage on the final logits
    for (int i = 0; i < res.s_batch; ++i) {
      const int img = b * res.s_batch + i;
      if (img >= res.images) break;
      std::vector<double> logits(batch_feats[i].begin(), batch_feats[i].end());
      std::vector<double> probs = softmax(logits);
      if (layout.softmax_index >= 0 && opt.compare_reference)
        per_layer[layout.softmax_index].err.accumulate(probs,
                                                       oracle_fc[img].softmax_out);
      res.argmax.push_back(sim_detail::argmax_of(probs));
      if (opt.compare_reference) res.ref_argmax.push_back(oracle_fc[img].argmax);
      res.probabilities.push_back(std::move(probs));
    }
  }
  res.total_cycles += fc_cycles_per_batch * std::uint64_t(n_batches);

  res.layers = std::move(per_layer);
  return res;
}

inline nlohmann::ordered_json sim_to_json(const SimResult& r) {
  nlohmann::ordered_json j;
  j["images"] = r.images;
  j["images_padded"] = r.images_padded;
  j["s_batch"] = r.s_batch;
  j["total_cycles"] = r.total_cycles;
  j["cycles_per_image"] =
      r.images_padded > 0 ? double(r.total_cycles) / r.images_padded : 0.0;
  if (!r.ref_argmax.empty()) {
    int agree = 0;
    for (std::size_t i = 0; i < r.argmax.size(); ++i)
      if (r.argmax[i] == r.ref_argmax[i]) ++agree;
    j["argmax_agreement"] = agree;
    j["argmax_total"] = r.argmax.size();
  }
  j["warnings"] = r.warnings;
  j["layers"] = nlohmann::ordered_json::array();
  for (const auto& l : r.layers) {
    nlohmann::ordered_json lj;
    lj["layer"] = l.name;
    lj["cycles"] = l.cycles;
    lj["stalls"] = l.stalls;
    lj["max_abs_err"] = l.err.max_abs;
    lj["max_rel_err"] = l.err.max_rel;
    lj["mean_rel_err"] = l.err.mean_rel;
    j["layers"].push_back(std::move(lj));
  }
  return j;
}

}  // namespace dla
