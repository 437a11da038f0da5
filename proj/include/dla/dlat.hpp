// DLAT binary tensor files: magic "DLAT", u16 version, u8 dtype
// (0=FP64, 1=FP32, 2=FP16), u8 ndim, ndim x u32 dims, little-endian payload.
// One file per parameter tensor; a JSON manifest maps layers to files.
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dla/fp16.hpp"
#include "dla/reference.hpp"
#include "dla/topology.hpp"

namespace dla::dlat {

enum class Dtype : std::uint8_t { f64 = 0, f32 = 1, f16 = 2 };

struct TensorFile {
  Dtype dtype = Dtype::f32;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;

  std::size_t count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return dims.empty() ? 0 : n;
  }
};

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char(v >> 8));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& buf, const std::string& path) : buf_(buf), path_(path) {}

  std::uint8_t u8() { return std::uint8_t(byte()); }
  std::uint16_t u16() { return std::uint16_t(byte()) | std::uint16_t(byte()) << 8; }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(byte()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(byte()) << (8 * i);
    return v;
  }
  bool at_end() const { return pos_ == buf_.size(); }
  void fail(const std::string& why) const {
    throw ParseError("DLAT file " + path_ + ": " + why);
  }

 private:
  unsigned char byte() {
    if (pos_ >= buf_.size()) fail("truncated");
    return static_cast<unsigned char>(buf_[pos_++]);
  }
  const std::string& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

template <typename T>
void write_tensor(const std::string& path, const std::vector<std::uint32_t>& dims,
                  const std::vector<T>& values, Dtype dtype) {
  std::size_t n = dims.empty() ? 0 : 1;
  for (auto d : dims) n *= d;
  if (n != values.size())
    throw std::invalid_argument("DLAT write: dims do not match value count");

  std::string out;
  out.reserve(16 + values.size() * 8);
  out += "DLAT";
  detail::put_u16(out, 1);
  out.push_back(char(dtype));
  out.push_back(char(dims.size()));
  for (auto d : dims) detail::put_u32(out, d);
  for (const T v : values) {
    switch (dtype) {
      case Dtype::f64: {
        std::uint64_t bits;
        const double d = double(v);
        std::memcpy(&bits, &d, 8);
        detail::put_u64(out, bits);
        break;
      }
      case Dtype::f32: {
        std::uint32_t bits;
        const float f = float(v);
        std::memcpy(&bits, &f, 4);
        detail::put_u32(out, bits);
        break;
      }
      case Dtype::f16:
        detail::put_u16(out, to_fp16(double(v)).bits);
        break;
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write DLAT file: " + path);
  f.write(out.data(), std::streamsize(out.size()));
}

inline TensorFile read_tensor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open DLAT file: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  detail::Reader r(buf, path);

  TensorFile t;
  char magic[4];
  for (char& c : magic) c = char(r.u8());
  if (std::memcmp(magic, "DLAT", 4) != 0) r.fail("bad magic");
  const std::uint16_t version = r.u16();
  if (version != 1) r.fail("unsupported version " + std::to_string(version));
  const std::uint8_t dt = r.u8();
  if (dt > 2) r.fail("unknown dtype " + std::to_string(dt));
  t.dtype = Dtype(dt);
  const int ndim = r.u8();
  for (int i = 0; i < ndim; ++i) t.dims.push_back(r.u32());

  t.values.resize(t.count());
  for (double& v : t.values) {
    switch (t.dtype) {
      case Dtype::f64: {
        const std::uint64_t bits = r.u64();
        double d;
        std::memcpy(&d, &bits, 8);
        v = d;
        break;
      }
      case Dtype::f32: {
        const std::uint32_t bits = r.u32();
        float fl;
        std::memcpy(&fl, &bits, 4);
        v = fl;
        break;
      }
      case Dtype::f16:
        v = Fp16{r.u16()}.to_double();
        break;
    }
  }
  if (!r.at_end()) r.fail("trailing bytes");
  return t;
}

// ---------------------------------------------------------------------------
// Weights manifest: one DLAT file per parameter tensor.

inline void save_weights(const std::string& dir, const Topology& topo,
                         const NetworkWeights& w, Dtype dtype = Dtype::f32) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto names = layer_display_names(topo);

  nlohmann::ordered_json manifest;
  manifest["topology"] = topo.name;
  manifest["layers"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < topo.layers.size(); ++i) {
    const LayerSpec& l = topo.layers[i];
    if (l.kind != LayerKind::Conv && l.kind != LayerKind::FullyConnected) continue;
    nlohmann::ordered_json entry;
    entry["index"] = i;
    entry["name"] = names[i];
    const auto& lw = w.layers[i];
    if (l.kind == LayerKind::Conv) {
      const std::string fn = names[i] + "_filters.dlat";
      write_tensor(dir + "/" + fn,
                   {std::uint32_t(lw.filters.k), std::uint32_t(lw.filters.c),
                    std::uint32_t(lw.filters.r), std::uint32_t(lw.filters.s)},
                   lw.filters.data, dtype);
      entry["filters"] = fn;
    } else {
      const std::string fn = names[i] + "_weights.dlat";
      write_tensor(dir + "/" + fn, {std::uint32_t(l.n_out), std::uint32_t(l.n_in)},
                   lw.weights, dtype);
      entry["weights"] = fn;
    }
    const std::string bn = names[i] + "_bias.dlat";
    write_tensor(dir + "/" + bn, {std::uint32_t(lw.bias.size())}, lw.bias, dtype);
    entry["bias"] = bn;
    manifest["layers"].push_back(std::move(entry));
  }
  std::ofstream mf(dir + "/manifest.json");
  if (!mf) throw std::runtime_error("cannot write manifest in " + dir);
  mf << manifest.dump(2) << "\n";
}

inline NetworkWeights load_weights(const std::string& manifest_path,
                                   const Topology& topo) {
  namespace fs = std::filesystem;
  std::ifstream mf(manifest_path);
  if (!mf) throw ParseError("cannot open manifest: " + manifest_path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed manifest JSON: ") + e.what());
  }
  const std::string dir = fs::path(manifest_path).parent_path().string();
  auto resolve = [&dir](const std::string& fn) {
    return dir.empty() ? fn : dir + "/" + fn;
  };

  const ShapeTable shapes = infer_shapes(topo);
  NetworkWeights w;
  w.layers.resize(topo.layers.size());
  for (const auto& entry : manifest.at("layers")) {
    const std::size_t i = entry.at("index").get<std::size_t>();
    if (i >= topo.layers.size())
      throw ValidationError(int(i), "manifest layer index out of range");
    const LayerSpec& l = topo.layers[i];
    auto& lw = w.layers[i];
    if (l.kind == LayerKind::Conv) {
      const TensorFile tf = read_tensor(resolve(entry.at("filters").get<std::string>()));
      const int cg = shapes.rows[i].in.c / l.groups;
      if (tf.dims != std::vector<std::uint32_t>{std::uint32_t(l.out_channels),
                                                std::uint32_t(cg),
                                                std::uint32_t(l.filter_h),
                                                std::uint32_t(l.filter_w)})
        throw ValidationError(int(i), "filter tensor dims do not match the layer");
      lw.filters = FilterBankF(l.out_channels, cg, l.filter_h, l.filter_w);
      for (std::size_t j = 0; j < tf.values.size(); ++j)
        lw.filters.data[j] = float(tf.values[j]);
    } else if (l.kind == LayerKind::FullyConnected) {
      const TensorFile tf = read_tensor(resolve(entry.at("weights").get<std::string>()));
      if (tf.count() != std::size_t(l.n_out) * l.n_in)
        throw ValidationError(int(i), "weight tensor size does not match the layer");
      lw.weights.assign(tf.values.begin(), tf.values.end());
    } else {
      throw ValidationError(int(i), "manifest entry for a layer without parameters");
    }
    if (entry.contains("bias")) {
      const TensorFile tf = read_tensor(resolve(entry.at("bias").get<std::string>()));
      lw.bias.assign(tf.values.begin(), tf.values.end());
    }
  }
  return w;
}

}  // namespace dla::dlat
