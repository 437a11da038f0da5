// CNN topology description: layer specs, shape inference, JSON (de)serialization,
// the built-in AlexNet, and the stride-folding transform that turns a strided
// convolution into an equivalent stride-1 convolution over phase-split channels.
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dla/tensor.hpp"

namespace dla {

enum class LayerKind { Conv, FullyConnected, MaxPool, Norm, Softmax };

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::FullyConnected: return "fully_connected";
    case LayerKind::MaxPool: return "max_pool";
    case LayerKind::Norm: return "norm";
    case LayerKind::Softmax: return "softmax";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind = LayerKind::Conv;

  // conv
  int in_channels = 0;   // C; 0 = inferred from the producing layer
  int out_channels = 0;  // K
  int filter_h = 0;      // R
  int filter_w = 0;      // S
  int stride = 1;
  int pad = 0;
  int groups = 1;
  bool relu = false;
  // §-style unit bypass controls; normalized from the layer sequence on load
  bool bypass_norm = true;
  bool bypass_pool = true;

  // fully connected
  int n_in = 0;  // 0 = inferred
  int n_out = 0;

  // max pool
  int window = 0;

  // LRN constants
  int norm_n = 0;
  double alpha = 0.0;
  double beta = 0.0;
  double k = 0.0;

  bool operator==(const LayerSpec&) const = default;

  static LayerSpec conv(int c, int k, int r, int s, int stride, int pad, int groups,
                        bool relu) {
    LayerSpec l;
    l.kind = LayerKind::Conv;
    l.in_channels = c;
    l.out_channels = k;
    l.filter_h = r;
    l.filter_w = s;
    l.stride = stride;
    l.pad = pad;
    l.groups = groups;
    l.relu = relu;
    return l;
  }
  static LayerSpec fully_connected(int n_in, int n_out, bool relu) {
    LayerSpec l;
    l.kind = LayerKind::FullyConnected;
    l.n_in = n_in;
    l.n_out = n_out;
    l.relu = relu;
    return l;
  }
  static LayerSpec max_pool(int window, int stride) {
    LayerSpec l;
    l.kind = LayerKind::MaxPool;
    l.window = window;
    l.stride = stride;
    return l;
  }
  static LayerSpec norm(int n, double alpha, double beta, double k) {
    LayerSpec l;
    l.kind = LayerKind::Norm;
    l.norm_n = n;
    l.alpha = alpha;
    l.beta = beta;
    l.k = k;
    return l;
  }
  static LayerSpec softmax() {
    LayerSpec l;
    l.kind = LayerKind::Softmax;
    return l;
  }
};

struct Topology {
  std::string name;
  Shape3 input;
  std::vector<LayerSpec> layers;

  bool operator==(const Topology&) const = default;
};

struct ShapeRow {
  Shape3 in;
  Shape3 out;
  std::uint64_t macs = 0;  // useful multiply-accumulates (conv and fc only)
};

struct ShapeTable {
  std::vector<ShapeRow> rows;
  std::uint64_t total_macs() const {
    std::uint64_t t = 0;
    for (const auto& r : rows) t += r.macs;
    return t;
  }
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
 public:
  ValidationError(int layer_index, const std::string& msg)
      : std::runtime_error(layer_index < 0
                               ? msg
                               : "layer " + std::to_string(layer_index) + ": " + msg),
        layer_index_(layer_index) {}
  int layer_index() const { return layer_index_; }

 private:
  int layer_index_;
};

namespace detail {

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

inline void check_layer(const LayerSpec& l, int idx) {
  switch (l.kind) {
    case LayerKind::Conv:
      if (l.out_channels < 1 || l.filter_h < 1 || l.filter_w < 1)
        throw ValidationError(idx, "conv needs K, R, S >= 1");
      if (l.stride < 1 || l.pad < 0 || l.groups < 1)
        throw ValidationError(idx, "conv needs stride >= 1, pad >= 0, groups >= 1");
      if (l.out_channels % l.groups != 0)
        throw ValidationError(idx, "K not divisible by groups");
      if (l.in_channels != 0 && l.in_channels % l.groups != 0)
        throw ValidationError(idx, "C not divisible by groups");
      break;
    case LayerKind::FullyConnected:
      if (l.n_out < 1) throw ValidationError(idx, "fully_connected needs n_out >= 1");
      if (l.n_in < 0) throw ValidationError(idx, "fully_connected n_in must be >= 1");
      break;
    case LayerKind::MaxPool:
      if (l.window < 1 || l.stride < 1)
        throw ValidationError(idx, "max_pool needs window, stride >= 1");
      break;
    case LayerKind::Norm:
      if (l.norm_n < 1 || l.norm_n % 2 == 0)
        throw ValidationError(idx, "norm window n must be odd and >= 1");
      break;
    case LayerKind::Softmax:
      break;
  }
}

}  // namespace detail

// Runs shape inference over the whole topology, validating declared channel
// counts against produced shapes. Fills nothing in; see normalize_topology.
inline ShapeTable infer_shapes(const Topology& t) {
  if (t.layers.empty()) throw ValidationError(-1, "no layers");
  if (t.input.c < 1 || t.input.h < 1 || t.input.w < 1)
    throw ValidationError(-1, "input shape must be positive");

  ShapeTable table;
  Shape3 cur = t.input;
  int softmax_count = 0;
  for (int i = 0; i < static_cast<int>(t.layers.size()); ++i) {
    const LayerSpec& l = t.layers[i];
    detail::check_layer(l, i);
    ShapeRow row;
    row.in = cur;
    switch (l.kind) {
      case LayerKind::Conv: {
        if (l.in_channels != 0 && l.in_channels != cur.c)
          throw ValidationError(i, "conv declares C=" + std::to_string(l.in_channels) +
                                       " but input has " + std::to_string(cur.c) +
                                       " channels");
        if (cur.c % l.groups != 0)
          throw ValidationError(i, "input channels not divisible by groups");
        const int p = (cur.h + 2 * l.pad - l.filter_h) / l.stride + 1;
        const int q = (cur.w + 2 * l.pad - l.filter_w) / l.stride + 1;
        if (cur.h + 2 * l.pad < l.filter_h || cur.w + 2 * l.pad < l.filter_w || p < 1 ||
            q < 1)
          throw ValidationError(i, "filter larger than padded input");
        row.out = {l.out_channels, p, q};
        row.macs = static_cast<std::uint64_t>(l.out_channels) * p * q *
                   (cur.c / l.groups) * l.filter_h * l.filter_w;
        break;
      }
      case LayerKind::FullyConnected: {
        const long long flat = cur.volume();
        if (l.n_in != 0 && l.n_in != flat)
          throw ValidationError(i, "fully_connected declares n_in=" +
                                       std::to_string(l.n_in) + " but input flattens to " +
                                       std::to_string(flat));
        row.out = {l.n_out, 1, 1};
        row.macs = static_cast<std::uint64_t>(l.n_out) * flat;
        break;
      }
      case LayerKind::MaxPool: {
        if (l.window > cur.h || l.window > cur.w)
          throw ValidationError(i, "pool window larger than input");
        row.out = {cur.c, (cur.h - l.window) / l.stride + 1,
                   (cur.w - l.window) / l.stride + 1};
        break;
      }
      case LayerKind::Norm:
        row.out = cur;
        break;
      case LayerKind::Softmax:
        ++softmax_count;
        if (i != static_cast<int>(t.layers.size()) - 1)
          throw ValidationError(i, "softmax must be the last layer");
        row.out = cur;
        break;
    }
    table.rows.push_back(row);
    cur = row.out;
  }
  if (softmax_count > 1) throw ValidationError(-1, "more than one softmax layer");
  return table;
}

// Fills inferred fields (conv C, fc n_in) and normalizes the bypass flags to
// mirror the actual layer sequence. Returns the shape table as a by-product.
inline ShapeTable normalize_topology(Topology& t) {
  ShapeTable table = infer_shapes(t);
  for (int i = 0; i < static_cast<int>(t.layers.size()); ++i) {
    LayerSpec& l = t.layers[i];
    if (l.kind == LayerKind::Conv) {
      l.in_channels = table.rows[i].in.c;
      bool norm_follows = false, pool_follows = false;
      for (std::size_t j = i + 1; j < t.layers.size(); ++j) {
        if (t.layers[j].kind == LayerKind::Norm && !pool_follows) norm_follows = true;
        else if (t.layers[j].kind == LayerKind::MaxPool) pool_follows = true;
        else break;
      }
      l.bypass_norm = !norm_follows;
      l.bypass_pool = !pool_follows;
    } else if (l.kind == LayerKind::FullyConnected) {
      l.n_in = static_cast<int>(table.rows[i].in.volume());
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// JSON (de)serialization. Unknown keys are rejected.

namespace detail {

inline int json_int(const nlohmann::json& j, const std::string& key, int layer_idx) {
  const auto& v = j.at(key);
  if (!v.is_number_integer())
    throw ValidationError(layer_idx, "\"" + key + "\" must be an integer");
  return v.get<int>();
}

inline void reject_unknown_keys(const nlohmann::json& j,
                                std::initializer_list<const char*> allowed,
                                int layer_idx) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (item.key() == a) { ok = true; break; }
    if (!ok) throw ValidationError(layer_idx, "unknown key \"" + item.key() + "\"");
  }
}

inline LayerSpec layer_from_json(const nlohmann::json& j, int idx) {
  if (!j.is_object()) throw ValidationError(idx, "layer must be an object");
  const std::string kind = j.value("kind", std::string());
  if (kind == "conv") {
    reject_unknown_keys(j, {"kind", "C", "K", "R", "S", "stride", "pad", "groups",
                            "relu", "bypass_norm", "bypass_pool"}, idx);
    LayerSpec l = LayerSpec::conv(
        j.contains("C") ? json_int(j, "C", idx) : 0, json_int(j, "K", idx),
        json_int(j, "R", idx), json_int(j, "S", idx), json_int(j, "stride", idx),
        json_int(j, "pad", idx), j.contains("groups") ? json_int(j, "groups", idx) : 1,
        j.value("relu", false));
    return l;
  }
  if (kind == "fully_connected") {
    reject_unknown_keys(j, {"kind", "n_in", "n_out", "relu"}, idx);
    return LayerSpec::fully_connected(
        j.contains("n_in") ? json_int(j, "n_in", idx) : 0, json_int(j, "n_out", idx),
        j.value("relu", false));
  }
  if (kind == "max_pool") {
    reject_unknown_keys(j, {"kind", "window", "stride"}, idx);
    return LayerSpec::max_pool(json_int(j, "window", idx), json_int(j, "stride", idx));
  }
  if (kind == "norm") {
    reject_unknown_keys(j, {"kind", "n", "alpha", "beta", "k"}, idx);
    return LayerSpec::norm(json_int(j, "n", idx), j.at("alpha").get<double>(),
                           j.at("beta").get<double>(), j.at("k").get<double>());
  }
  if (kind == "softmax") {
    reject_unknown_keys(j, {"kind"}, idx);
    return LayerSpec::softmax();
  }
  throw ValidationError(idx, "unknown layer kind \"" + kind + "\"");
}

inline nlohmann::ordered_json layer_to_json(const LayerSpec& l) {
  nlohmann::ordered_json j;
  j["kind"] = layer_kind_name(l.kind);
  switch (l.kind) {
    case LayerKind::Conv:
      j["C"] = l.in_channels;
      j["K"] = l.out_channels;
      j["R"] = l.filter_h;
      j["S"] = l.filter_w;
      j["stride"] = l.stride;
      j["pad"] = l.pad;
      j["groups"] = l.groups;
      j["relu"] = l.relu;
      j["bypass_norm"] = l.bypass_norm;
      j["bypass_pool"] = l.bypass_pool;
      break;
    case LayerKind::FullyConnected:
      j["n_in"] = l.n_in;
      j["n_out"] = l.n_out;
      j["relu"] = l.relu;
      break;
    case LayerKind::MaxPool:
      j["window"] = l.window;
      j["stride"] = l.stride;
      break;
    case LayerKind::Norm:
      j["n"] = l.norm_n;
      j["alpha"] = l.alpha;
      j["beta"] = l.beta;
      j["k"] = l.k;
      break;
    case LayerKind::Softmax:
      break;
  }
  return j;
}

}  // namespace detail

inline Topology topology_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError(-1, "topology must be a JSON object");
  detail::reject_unknown_keys(j, {"name", "input", "layers"}, -1);
  Topology t;
  t.name = j.value("name", std::string("unnamed"));
  const auto& in = j.at("input");
  if (!in.is_array() || in.size() != 3)
    throw ValidationError(-1, "\"input\" must be [C, H, W]");
  t.input = {in[0].get<int>(), in[1].get<int>(), in[2].get<int>()};
  if (!j.contains("layers") || !j.at("layers").is_array())
    throw ValidationError(-1, "\"layers\" must be an array");
  int idx = 0;
  for (const auto& lj : j.at("layers")) t.layers.push_back(detail::layer_from_json(lj, idx++));
  normalize_topology(t);  // validates and fills inferred fields
  return t;
}

inline nlohmann::ordered_json topology_to_json(const Topology& t) {
  nlohmann::ordered_json j;
  j["name"] = t.name;
  j["input"] = {t.input.c, t.input.h, t.input.w};
  j["layers"] = nlohmann::ordered_json::array();
  for (const auto& l : t.layers) j["layers"].push_back(detail::layer_to_json(l));
  return j;
}

inline Topology load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open topology file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed topology JSON (" + path + "): " + e.what());
  }
  return topology_from_json(j);
}

inline void save_topology(const Topology& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write topology file: " + path);
  out << topology_to_json(t).dump(2) << "\n";
}

// Display names follow the AlexNet convention: conv1..convN, fc layers continue
// the numbering, norm/pool are tagged with the preceding conv's number.
inline std::vector<std::string> layer_display_names(const Topology& t) {
  std::vector<std::string> names;
  int conv_or_fc = 0, last_conv = 0;
  for (const auto& l : t.layers) {
    switch (l.kind) {
      case LayerKind::Conv:
        names.push_back("conv" + std::to_string(++conv_or_fc));
        last_conv = conv_or_fc;
        break;
      case LayerKind::FullyConnected:
        names.push_back("fc" + std::to_string(++conv_or_fc));
        break;
      case LayerKind::Norm:
        names.push_back("norm" + std::to_string(last_conv));
        break;
      case LayerKind::MaxPool:
        names.push_back("pool" + std::to_string(last_conv));
        break;
      case LayerKind::Softmax:
        names.push_back("softmax");
        break;
    }
  }
  return names;
}

// The canonical benchmark network: 3x227x227 input, five convolutions with
// LRN/pooling after conv1/conv2 and pooling after conv5, three fully-connected
// layers, softmax. 227 (not the 224 sometimes quoted for GPU harnesses) gives
// the canonical 55x55 conv1 output without padding.
inline Topology builtin_alexnet() {
  Topology t;
  t.name = "alexnet";
  t.input = {3, 227, 227};
  t.layers = {
      LayerSpec::conv(3, 96, 11, 11, 4, 0, 1, true),
      LayerSpec::norm(5, 1e-4, 0.75, 2.0),
      LayerSpec::max_pool(3, 2),
      LayerSpec::conv(96, 256, 5, 5, 1, 2, 2, true),
      LayerSpec::norm(5, 1e-4, 0.75, 2.0),
      LayerSpec::max_pool(3, 2),
      LayerSpec::conv(256, 384, 3, 3, 1, 1, 1, true),
      LayerSpec::conv(384, 384, 3, 3, 1, 1, 2, true),
      LayerSpec::conv(384, 256, 3, 3, 1, 1, 2, true),
      LayerSpec::max_pool(3, 2),
      LayerSpec::fully_connected(9216, 4096, true),
      LayerSpec::fully_connected(4096, 4096, true),
      LayerSpec::fully_connected(4096, 1000, false),
      LayerSpec::softmax(),
  };
  normalize_topology(t);
  return t;
}

// ---------------------------------------------------------------------------
// Stride folding: a stride-f convolution becomes a stride-1 convolution over
// C*f^2 phase channels with a ceil(R/f) x ceil(S/f) filter. Folded channel
// (c, dy, dx) -> c*f^2 + dy*f + dx holds input pixels with y%f==dy, x%f==dx.
// Filter taps that fall outside the original extent are zero-filled and count
// as padding overhead, not useful work.

struct FoldPlan {
  int factor = 1;
  int orig_pad = 0;
  Shape3 orig_in;    // pre-fold input (C, H, W), without padding
  Shape3 folded_in;  // (C*f^2, ceil((H+2p)/f), ceil((W+2p)/f))
  int orig_r = 0, orig_s = 0;
  int folded_r = 0, folded_s = 0;

  bool identity() const { return factor == 1; }

  int folded_channel(int c, int dy, int dx) const {
    return (c * factor + dy) * factor + dx;
  }

  // tap slots per original input channel, before and after zero-padding
  long long useful_taps() const { return static_cast<long long>(orig_r) * orig_s; }
  long long padded_taps() const {
    return static_cast<long long>(factor) * factor * folded_r * folded_s;
  }
};

inline FoldPlan identity_fold(const LayerSpec& conv, Shape3 in) {
  FoldPlan p;
  p.factor = 1;
  p.orig_pad = conv.pad;
  p.orig_in = in;
  p.folded_in = in;
  p.orig_r = p.folded_r = conv.filter_h;
  p.orig_s = p.folded_s = conv.filter_w;
  return p;
}

// Returns the equivalent stride-1 layer plus the plan needed to rearrange
// inputs and filters. A stride-1 layer gets an identity plan (pad untouched).
inline std::pair<LayerSpec, FoldPlan> fold_strided_conv(const LayerSpec& conv,
                                                        Shape3 in) {
  if (conv.kind != LayerKind::Conv) throw ValidationError(-1, "fold: not a conv layer");
  if (conv.stride <= 1) return {conv, identity_fold(conv, in)};

  const int f = conv.stride;
  FoldPlan p;
  p.factor = f;
  p.orig_pad = conv.pad;
  p.orig_in = in;
  p.orig_r = conv.filter_h;
  p.orig_s = conv.filter_w;
  p.folded_r = detail::ceil_div(conv.filter_h, f);
  p.folded_s = detail::ceil_div(conv.filter_w, f);
  p.folded_in = {in.c * f * f, detail::ceil_div(in.h + 2 * conv.pad, f),
                 detail::ceil_div(in.w + 2 * conv.pad, f)};

  LayerSpec folded = conv;
  folded.in_channels = p.folded_in.c;
  folded.filter_h = p.folded_r;
  folded.filter_w = p.folded_s;
  folded.stride = 1;
  folded.pad = 0;  // absorbed into the folded input
  return {folded, p};
}

// Rearranges an input tensor according to the plan (spatial padding included).
template <typename T>
TensorT<T> fold_input(const FoldPlan& p, const TensorT<T>& in) {
  if (in.shape != p.orig_in) throw std::invalid_argument("fold_input: shape mismatch");
  if (p.identity()) return in;
  const int f = p.factor;
  TensorT<T> out(p.folded_in);
  for (int c = 0; c < in.shape.c; ++c)
    for (int dy = 0; dy < f; ++dy)
      for (int dx = 0; dx < f; ++dx) {
        const int fc = p.folded_channel(c, dy, dx);
        for (int y = 0; y < p.folded_in.h; ++y)
          for (int x = 0; x < p.folded_in.w; ++x) {
            const int oy = y * f + dy - p.orig_pad;
            const int ox = x * f + dx - p.orig_pad;
            out.at(fc, y, x) = in.at_padded(c, oy, ox);
          }
      }
  return out;
}

// Filter weights for one conv layer: K filters of (C/groups) x R x S each.
template <typename T>
struct FilterBankT {
  int k = 0, c = 0, r = 0, s = 0;  // c = channels per group
  std::vector<T> data;

  FilterBankT() = default;
  FilterBankT(int k_, int c_, int r_, int s_)
      : k(k_), c(c_), r(r_), s(s_),
        data(static_cast<std::size_t>(k_) * c_ * r_ * s_, T(0)) {}

  T& at(int ki, int ci, int ri, int si) {
    return data[((static_cast<std::size_t>(ki) * c + ci) * r + ri) * s + si];
  }
  T at(int ki, int ci, int ri, int si) const {
    return data[((static_cast<std::size_t>(ki) * c + ci) * r + ri) * s + si];
  }
};

using FilterBank = FilterBankT<double>;
using FilterBankF = FilterBankT<float>;

// Rearranges filters to match fold_input; out-of-range taps stay zero.
template <typename T>
FilterBankT<T> fold_filters(const FoldPlan& p, const FilterBankT<T>& w) {
  if (w.r != p.orig_r || w.s != p.orig_s)
    throw std::invalid_argument("fold_filters: filter dims do not match plan");
  if (p.identity()) return w;
  const int f = p.factor;
  FilterBankT<T> out(w.k, w.c * f * f, p.folded_r, p.folded_s);
  for (int ki = 0; ki < w.k; ++ki)
    for (int ci = 0; ci < w.c; ++ci)
      for (int dy = 0; dy < f; ++dy)
        for (int dx = 0; dx < f; ++dx) {
          const int fc = p.folded_channel(ci, dy, dx);
          for (int a = 0; a < p.folded_r; ++a)
            for (int b = 0; b < p.folded_s; ++b) {
              const int rr = a * f + dy;
              const int ss = b * f + dx;
              if (rr < w.r && ss < w.s) out.at(ki, fc, a, b) = w.at(ki, ci, rr, ss);
            }
        }
  return out;
}

// ---------------------------------------------------------------------------
// Accelerator mapping view: every conv folded to stride 1 with its shapes and
// the tensor actually written back to the stream buffer (post-pool when a pool
// follows, per the overall pipeline), plus the fully-connected tail.

struct DlaConvLayer {
  int layer_index = 0;
  std::string name;
  LayerSpec folded;     // stride-1 geometry as mapped onto the PEs
  FoldPlan plan;        // identity when the layer was already stride 1
  Shape3 in_shape;      // folded input held by the stream buffer
  Shape3 out_shape;     // conv output (K, P, Q)
  Shape3 stored_shape;  // written back to the stream buffer / DDR (post-pool)
  std::uint64_t useful_macs = 0;
  int norm_index = -1;  // following norm layer, -1 if bypassed
  int pool_index = -1;  // following pool layer, -1 if bypassed
  bool last_conv = false;
};

struct DlaFcLayer {
  int layer_index = 0;
  std::string name;
  int n_in = 0;
  int n_out = 0;
  bool relu = false;
};

struct DlaLayout {
  Topology topology;  // original, unfolded
  ShapeTable shapes;  // shapes of the original topology
  std::vector<DlaConvLayer> convs;
  std::vector<DlaFcLayer> fcs;
  int softmax_index = -1;
};

// Maps a topology onto the accelerator execution structure. Requires the
// conv[norm][pool]... fc... [softmax] layer pattern the pipeline supports.
inline DlaLayout build_dla_layout(const Topology& t) {
  DlaLayout lay;
  lay.topology = t;
  lay.shapes = infer_shapes(t);
  const auto names = layer_display_names(t);

  const int n = static_cast<int>(t.layers.size());
  int i = 0;
  while (i < n && t.layers[i].kind == LayerKind::Conv) {
    const LayerSpec& l = t.layers[i];
    DlaConvLayer cv;
    cv.layer_index = i;
    cv.name = names[i];
    auto [folded, plan] = fold_strided_conv(l, lay.shapes.rows[i].in);
    cv.folded = folded;
    cv.plan = plan;
    cv.in_shape = plan.folded_in;
    cv.out_shape = lay.shapes.rows[i].out;
    cv.stored_shape = cv.out_shape;
    cv.useful_macs = lay.shapes.rows[i].macs;
    int j = i + 1;
    if (j < n && t.layers[j].kind == LayerKind::Norm) cv.norm_index = j++;
    if (j < n && t.layers[j].kind == LayerKind::MaxPool) {
      cv.pool_index = j;
      cv.stored_shape = lay.shapes.rows[j].out;
      ++j;
    }
    lay.convs.push_back(cv);
    i = j;
  }
  if (!lay.convs.empty()) lay.convs.back().last_conv = true;

  while (i < n && t.layers[i].kind == LayerKind::FullyConnected) {
    DlaFcLayer fc;
    fc.layer_index = i;
    fc.name = names[i];
    fc.n_in = static_cast<int>(lay.shapes.rows[i].in.volume());
    fc.n_out = t.layers[i].kind == LayerKind::FullyConnected ? t.layers[i].n_out : 0;
    fc.relu = t.layers[i].relu;
    lay.fcs.push_back(fc);
    ++i;
  }
  if (i < n && t.layers[i].kind == LayerKind::Softmax) lay.softmax_index = i++;
  if (i != n)
    throw ValidationError(i, "layer order not supported by the accelerator pipeline "
                             "(expected conv[norm][pool]... fc... [softmax])");
  return lay;
}

}  // namespace dla
