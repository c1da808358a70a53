#pragma once

#include "softshell/errors.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace softshell::nn {

// Dense NCHW tensor.
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T(0)) : n(n_), c(c_), h(h_), w(w_) {
    if (n < 0 || c < 0 || h < 0 || w < 0) throw ShapeError("negative tensor dimension");
    data.assign(static_cast<std::size_t>(n) * c * h * w, fill);
  }

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t item_size() const { return static_cast<std::size_t>(c) * h * w; }
  T* item(int b) { return data.data() + b * item_size(); }
  const T* item(int b) const { return data.data() + b * item_size(); }
  T& at(int b, int ch, int y, int x) { return data[((static_cast<std::size_t>(b) * c + ch) * h + y) * w + x]; }
  T at(int b, int ch, int y, int x) const { return data[((static_cast<std::size_t>(b) * c + ch) * h + y) * w + x]; }

  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
  std::string shape_string() const {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + "]";
  }
};

}  // namespace softshell::nn
