#pragma once

#include "softshell/tensor.hpp"

#include <cstdint>
#include <random>
#include <vector>

// Layers with fixed kernel 4, stride 2, padding 1. Weight layouts:
//   conv:  [cout, cin, 4, 4]
//   tconv: [cin, cout, 4, 4]
// Backward passes accumulate into dw/db and overwrite dx.
namespace softshell::nn {

inline constexpr int kKernel = 4;
inline constexpr int kStride = 2;
inline constexpr int kPad = 1;

template <typename T>
void conv2d_forward(const Tensor<T>& x, const T* w, const T* b, int cout, Tensor<T>& y);
template <typename T>
void conv2d_backward(const Tensor<T>& x, const T* w, int cout, const Tensor<T>& dy, Tensor<T>* dx, T* dw, T* db);

template <typename T>
void tconv2d_forward(const Tensor<T>& x, const T* w, const T* b, int cout, Tensor<T>& y);
template <typename T>
void tconv2d_backward(const Tensor<T>& x, const T* w, int cout, const Tensor<T>& dy, Tensor<T>* dx, T* dw, T* db);

template <typename T>
T leaky_relu(T x, T slope) {
  return x > T(0) ? x : slope * x;
}
template <typename T>
void leaky_relu_inplace(std::vector<T>& x, T slope);
// dz = dy * f'(z), using the activation output y (same sign as z for slope > 0).
template <typename T>
void leaky_relu_backward(const std::vector<T>& y, T slope, std::vector<T>& grad);

template <typename T>
void tanh_inplace(std::vector<T>& x);
template <typename T>
void tanh_backward(const std::vector<T>& y, std::vector<T>& grad);

// Inverted dropout. In training, keeps each unit with probability 1 - rate
// and scales it by 1/(1 - rate); `mask` receives the per-unit multiplier.
// Outside training the input is untouched and mask is cleared.
template <typename T>
void dropout_inplace(std::vector<T>& x, double rate, std::mt19937_64& rng, bool train, std::vector<T>& mask);

// Mean squared error over all elements; grad (optional) receives dL/dpred.
template <typename T>
double l2_loss(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>* grad = nullptr);
// Mean absolute horizontal forward difference plus mean absolute vertical
// forward difference. grad (optional) is accumulated with weight `scale`.
template <typename T>
double tv_loss(const Tensor<T>& pred, Tensor<T>* grad = nullptr, double scale = 1.0);

// Channel concatenation [a, b] and its split.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
void split_channels(const Tensor<T>& ab, int ca, Tensor<T>& a, Tensor<T>& b);

}  // namespace softshell::nn
