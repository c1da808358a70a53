#include "softshell/nn.hpp"

#include "softshell/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <type_traits>

namespace softshell::nn {

namespace {

template <typename T>
void gemm(bool ta, bool tb, int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool acc) {
  kernels::GemmArgs g;
  g.trans_a = ta;
  g.trans_b = tb;
  g.m = m;
  g.n = n;
  g.k = k;
  g.lda = lda;
  g.ldb = ldb;
  g.ldc = ldc;
  g.beta = acc ? 1.0f : 0.0f;
  if constexpr (std::is_same_v<T, float>)
    kernels::sgemm(g, a, b, c);
  else
    kernels::dgemm(g, a, b, c);
}

// Output columns ox whose input column 2*ox - 1 + kx lies in [0, w).
inline void valid_range(int kx, int w, int wo, int& lo, int& hi) {
  lo = kx >= kPad ? 0 : 1;
  hi = std::min(wo, (w - kx + kPad + 1) / kStride);
}

// col[(c*16 + ky*4 + kx), oy*wo + ox] = x[c, 2oy-1+ky, 2ox-1+kx] (0 outside).
template <typename T>
void im2col(const T* x, int ch, int h, int w, T* col) {
  const int ho = h / kStride, wo = w / kStride;
  for (int c = 0; c < ch; ++c)
    for (int ky = 0; ky < kKernel; ++ky)
      for (int kx = 0; kx < kKernel; ++kx) {
        T* row = col + static_cast<std::size_t>((c * kKernel + ky) * kKernel + kx) * ho * wo;
        int lo, hi;
        valid_range(kx, w, wo, lo, hi);
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * kStride - kPad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(c) * h + iy) * w + kx - kPad;
          for (int ox = 0; ox < lo; ++ox) dst[ox] = T(0);
          for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * kStride];
          for (int ox = hi; ox < wo; ++ox) dst[ox] = T(0);
        }
      }
}

// Adjoint of im2col: x is overwritten.
template <typename T>
void col2im(const T* col, int ch, int h, int w, T* x) {
  const int ho = h / kStride, wo = w / kStride;
  std::fill(x, x + static_cast<std::size_t>(ch) * h * w, T(0));
  for (int c = 0; c < ch; ++c)
    for (int ky = 0; ky < kKernel; ++ky)
      for (int kx = 0; kx < kKernel; ++kx) {
        const T* row = col + static_cast<std::size_t>((c * kKernel + ky) * kKernel + kx) * ho * wo;
        int lo, hi;
        valid_range(kx, w, wo, lo, hi);
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * kStride - kPad + ky;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * wo;
          T* dst = x + (static_cast<std::size_t>(c) * h + iy) * w + kx - kPad;
          for (int ox = lo; ox < hi; ++ox) dst[ox * kStride] += src[ox];
        }
      }
}

void check_even(int h, int w, const char* op) {
  if (h <= 0 || w <= 0 || h % 2 != 0 || w % 2 != 0)
    throw ShapeError(std::string(op) + ": spatial dims " + std::to_string(h) + "x" + std::to_string(w) +
                     " must be positive and even");
}

template <typename T>
thread_local std::vector<T> t_col;

template <typename T>
T* scratch(std::size_t n) {
  auto& buf = t_col<T>;
  if (buf.size() < n) buf.resize(n);
  return buf.data();
}

}  // namespace

template <typename T>
void conv2d_forward(const Tensor<T>& x, const T* w, const T* b, int cout, Tensor<T>& y) {
  check_even(x.h, x.w, "conv2d");
  const int ho = x.h / 2, wo = x.w / 2, p = ho * wo, kdim = x.c * kKernel * kKernel;
  if (!(y.n == x.n && y.c == cout && y.h == ho && y.w == wo)) y = Tensor<T>(x.n, cout, ho, wo);
  T* col = scratch<T>(static_cast<std::size_t>(kdim) * p);
  for (int bi = 0; bi < x.n; ++bi) {
    im2col(x.item(bi), x.c, x.h, x.w, col);
    T* out = y.item(bi);
    for (int co = 0; co < cout; ++co) std::fill(out + static_cast<std::size_t>(co) * p, out + (co + 1) * static_cast<std::size_t>(p), b ? b[co] : T(0));
    gemm<T>(false, false, cout, p, kdim, w, kdim, col, p, out, p, true);
  }
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const T* w, int cout, const Tensor<T>& dy, Tensor<T>* dx, T* dw, T* db) {
  check_even(x.h, x.w, "conv2d_backward");
  const int ho = x.h / 2, wo = x.w / 2, p = ho * wo, kdim = x.c * kKernel * kKernel;
  if (!(dy.n == x.n && dy.c == cout && dy.h == ho && dy.w == wo))
    throw ShapeError("conv2d_backward: output gradient shape " + dy.shape_string() + " does not match");
  if (dx && !dx->same_shape(x)) *dx = Tensor<T>(x.n, x.c, x.h, x.w);
  T* col = scratch<T>(static_cast<std::size_t>(kdim) * p);
  for (int bi = 0; bi < x.n; ++bi) {
    const T* g = dy.item(bi);
    if (db)
      for (int co = 0; co < cout; ++co) {
        T s = 0;
        for (int i = 0; i < p; ++i) s += g[static_cast<std::size_t>(co) * p + i];
        db[co] += s;
      }
    if (dw) {
      im2col(x.item(bi), x.c, x.h, x.w, col);
      gemm<T>(false, true, cout, kdim, p, g, p, col, p, dw, kdim, true);
    }
    if (dx) {
      gemm<T>(true, false, kdim, p, cout, w, kdim, g, p, col, p, false);
      col2im(col, x.c, x.h, x.w, dx->item(bi));
    }
  }
}

template <typename T>
void tconv2d_forward(const Tensor<T>& x, const T* w, const T* b, int cout, Tensor<T>& y) {
  if (x.h <= 0 || x.w <= 0) throw ShapeError("tconv2d: empty input");
  const int ho = x.h * 2, wo = x.w * 2, p = x.h * x.w, kdim = cout * kKernel * kKernel;
  if (!(y.n == x.n && y.c == cout && y.h == ho && y.w == wo)) y = Tensor<T>(x.n, cout, ho, wo);
  T* col = scratch<T>(static_cast<std::size_t>(kdim) * p);
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  for (int bi = 0; bi < x.n; ++bi) {
    gemm<T>(true, false, kdim, p, x.c, w, kdim, x.item(bi), p, col, p, false);
    T* out = y.item(bi);
    col2im(col, cout, ho, wo, out);
    if (b)
      for (int co = 0; co < cout; ++co)
        for (std::size_t i = 0; i < plane; ++i) out[co * plane + i] += b[co];
  }
}

template <typename T>
void tconv2d_backward(const Tensor<T>& x, const T* w, int cout, const Tensor<T>& dy, Tensor<T>* dx, T* dw, T* db) {
  const int ho = x.h * 2, wo = x.w * 2, p = x.h * x.w, kdim = cout * kKernel * kKernel;
  if (!(dy.n == x.n && dy.c == cout && dy.h == ho && dy.w == wo))
    throw ShapeError("tconv2d_backward: output gradient shape " + dy.shape_string() + " does not match");
  if (dx && !dx->same_shape(x)) *dx = Tensor<T>(x.n, x.c, x.h, x.w);
  T* col = scratch<T>(static_cast<std::size_t>(kdim) * p);
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  for (int bi = 0; bi < x.n; ++bi) {
    const T* g = dy.item(bi);
    if (db)
      for (int co = 0; co < cout; ++co) {
        T s = 0;
        for (std::size_t i = 0; i < plane; ++i) s += g[co * plane + i];
        db[co] += s;
      }
    if (!dw && !dx) continue;
    im2col(g, cout, ho, wo, col);
    if (dw) gemm<T>(false, true, x.c, kdim, p, x.item(bi), p, col, p, dw, kdim, true);
    if (dx) gemm<T>(false, false, x.c, p, kdim, w, kdim, col, p, dx->item(bi), p, false);
  }
}

template <typename T>
void leaky_relu_inplace(std::vector<T>& x, T slope) {
  for (T& v : x) v = leaky_relu(v, slope);
}

template <typename T>
void leaky_relu_backward(const std::vector<T>& y, T slope, std::vector<T>& grad) {
  for (std::size_t i = 0; i < y.size(); ++i)
    if (!(y[i] > T(0))) grad[i] *= slope;
}

template <typename T>
void tanh_inplace(std::vector<T>& x) {
  for (T& v : x) v = std::tanh(v);
}

template <typename T>
void tanh_backward(const std::vector<T>& y, std::vector<T>& grad) {
  for (std::size_t i = 0; i < y.size(); ++i) grad[i] *= T(1) - y[i] * y[i];
}

template <typename T>
void dropout_inplace(std::vector<T>& x, double rate, std::mt19937_64& rng, bool train, std::vector<T>& mask) {
  if (!train || rate <= 0.0) {
    mask.clear();
    return;
  }
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  mask.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    mask[i] = u < rate ? T(0) : scale;
    x[i] *= mask[i];
  }
}

template <typename T>
double l2_loss(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>* grad) {
  if (!pred.same_shape(target))
    throw ShapeError("l2_loss: shapes " + pred.shape_string() + " and " + target.shape_string() + " differ");
  if (pred.size() == 0) throw ShapeError("l2_loss: empty tensors");
  if (grad && !grad->same_shape(pred)) *grad = Tensor<T>(pred.n, pred.c, pred.h, pred.w);
  const double inv = 1.0 / static_cast<double>(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
    sum += d * d;
    if (grad) grad->data[i] = static_cast<T>(2.0 * d * inv);
  }
  return sum * inv;
}

template <typename T>
double tv_loss(const Tensor<T>& pred, Tensor<T>* grad, double scale) {
  if (grad && !grad->same_shape(pred)) *grad = Tensor<T>(pred.n, pred.c, pred.h, pred.w);
  const std::size_t nh = static_cast<std::size_t>(pred.n) * pred.c * pred.h * (pred.w - 1);
  const std::size_t nv = static_cast<std::size_t>(pred.n) * pred.c * (pred.h - 1) * pred.w;
  const double inv_h = nh ? 1.0 / nh : 0.0, inv_v = nv ? 1.0 / nv : 0.0;
  double sh = 0.0, sv = 0.0;
  auto sgn = [](double d) { return d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0); };
  for (int b = 0; b < pred.n; ++b)
    for (int c = 0; c < pred.c; ++c)
      for (int y = 0; y < pred.h; ++y)
        for (int x = 0; x < pred.w; ++x) {
          const double v = pred.at(b, c, y, x);
          if (x + 1 < pred.w) {
            const double d = pred.at(b, c, y, x + 1) - v;
            sh += std::abs(d);
            if (grad) {
              const double g = scale * inv_h * sgn(d);
              grad->at(b, c, y, x + 1) += static_cast<T>(g);
              grad->at(b, c, y, x) -= static_cast<T>(g);
            }
          }
          if (y + 1 < pred.h) {
            const double d = pred.at(b, c, y + 1, x) - v;
            sv += std::abs(d);
            if (grad) {
              const double g = scale * inv_v * sgn(d);
              grad->at(b, c, y + 1, x) += static_cast<T>(g);
              grad->at(b, c, y, x) -= static_cast<T>(g);
            }
          }
        }
  return sh * inv_h + sv * inv_v;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w)
    throw ShapeError("concat: shapes " + a.shape_string() + " and " + b.shape_string() + " incompatible");
  Tensor<T> out(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    T* dst = out.item(i);
    std::copy(a.item(i), a.item(i) + a.item_size(), dst);
    std::copy(b.item(i), b.item(i) + b.item_size(), dst + a.item_size());
  }
  return out;
}

template <typename T>
void split_channels(const Tensor<T>& ab, int ca, Tensor<T>& a, Tensor<T>& b) {
  if (ca < 0 || ca > ab.c) throw ShapeError("split: channel count out of range");
  a = Tensor<T>(ab.n, ca, ab.h, ab.w);
  b = Tensor<T>(ab.n, ab.c - ca, ab.h, ab.w);
  for (int i = 0; i < ab.n; ++i) {
    const T* src = ab.item(i);
    std::copy(src, src + a.item_size(), a.item(i));
    std::copy(src + a.item_size(), src + ab.item_size(), b.item(i));
  }
}

#define SOFTSHELL_NN_INSTANTIATE(T)                                                                                  \
  template void conv2d_forward<T>(const Tensor<T>&, const T*, const T*, int, Tensor<T>&);                          \
  template void conv2d_backward<T>(const Tensor<T>&, const T*, int, const Tensor<T>&, Tensor<T>*, T*, T*);         \
  template void tconv2d_forward<T>(const Tensor<T>&, const T*, const T*, int, Tensor<T>&);                         \
  template void tconv2d_backward<T>(const Tensor<T>&, const T*, int, const Tensor<T>&, Tensor<T>*, T*, T*);        \
  template void leaky_relu_inplace<T>(std::vector<T>&, T);                                                         \
  template void leaky_relu_backward<T>(const std::vector<T>&, T, std::vector<T>&);                                 \
  template void tanh_inplace<T>(std::vector<T>&);                                                                  \
  template void tanh_backward<T>(const std::vector<T>&, std::vector<T>&);                                          \
  template void dropout_inplace<T>(std::vector<T>&, double, std::mt19937_64&, bool, std::vector<T>&);              \
  template double l2_loss<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>*);                                      \
  template double tv_loss<T>(const Tensor<T>&, Tensor<T>*, double);                                                \
  template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);                                       \
  template void split_channels<T>(const Tensor<T>&, int, Tensor<T>&, Tensor<T>&);

SOFTSHELL_NN_INSTANTIATE(float)
SOFTSHELL_NN_INSTANTIATE(double)

}  // namespace softshell::nn
