// Dense CHW tensors (row-major, W fastest) used by the reference model and
// the simulator. FP64 for oracle math, FP32 for device-side emulation.
#pragma once

#include <cassert>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace dla {

struct Shape3 {
  int c = 0;
  int h = 0;
  int w = 0;

  long long volume() const {
    return static_cast<long long>(c) * h * w;
  }
  bool operator==(const Shape3&) const = default;
};

template <typename T>
struct TensorT {
  Shape3 shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(Shape3 s) : shape(s), data(static_cast<std::size_t>(s.volume()), T(0)) {
    if (s.c < 0 || s.h < 0 || s.w < 0) throw std::invalid_argument("negative tensor dim");
  }
  TensorT(int c, int h, int w) : TensorT(Shape3{c, h, w}) {}

  // flat vector of length n, stored as (n, 1, 1)
  static TensorT flat(int n) { return TensorT(n, 1, 1); }

  std::size_t size() const { return data.size(); }

  T& at(int c, int y, int x) {
    assert(c >= 0 && c < shape.c && y >= 0 && y < shape.h && x >= 0 && x < shape.w);
    return data[(static_cast<std::size_t>(c) * shape.h + y) * shape.w + x];
  }
  T at(int c, int y, int x) const {
    assert(c >= 0 && c < shape.c && y >= 0 && y < shape.h && x >= 0 && x < shape.w);
    return data[(static_cast<std::size_t>(c) * shape.h + y) * shape.w + x];
  }

  // zero outside the spatial extent; channel index must be valid
  T at_padded(int c, int y, int x) const {
    if (y < 0 || y >= shape.h || x < 0 || x >= shape.w) return T(0);
    return at(c, y, x);
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out(shape);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using Tensor = TensorT<double>;
using TensorF = TensorT<float>;

}  // namespace dla
