#include "softshell/kernels.hpp"

#include <cmath>

namespace softshell::kernels {

namespace {

template <typename T>
void gemm_ref(const GemmArgs& g, const T* a, const T* b, T* c) {
  for (int i = 0; i < g.m; ++i) {
    T* crow = c + static_cast<std::size_t>(i) * g.ldc;
    if (g.beta == 0.0f)
      for (int j = 0; j < g.n; ++j) crow[j] = T(0);
    for (int p = 0; p < g.k; ++p) {
      const T aip = g.trans_a ? a[static_cast<std::size_t>(p) * g.lda + i] : a[static_cast<std::size_t>(i) * g.lda + p];
      if (aip == T(0)) continue;
      if (!g.trans_b) {
        const T* brow = b + static_cast<std::size_t>(p) * g.ldb;
        for (int j = 0; j < g.n; ++j) crow[j] += aip * brow[j];
      } else {
        for (int j = 0; j < g.n; ++j) crow[j] += aip * b[static_cast<std::size_t>(j) * g.ldb + p];
      }
    }
  }
}

template <typename T>
void adam_ref(const AdamArgs& p, std::size_t n, T* param, const T* grad, T* m, T* v) {
  const T b1 = static_cast<T>(p.beta1), b2 = static_cast<T>(p.beta2);
  const T c1 = T(1) - b1, c2 = T(1) - b2;
  const T bc1 = static_cast<T>(1.0 - std::pow(static_cast<double>(p.beta1), static_cast<double>(p.step)));
  const T bc2 = static_cast<T>(1.0 - std::pow(static_cast<double>(p.beta2), static_cast<double>(p.step)));
  const T lr = static_cast<T>(p.lr), eps = static_cast<T>(p.eps);
  for (std::size_t i = 0; i < n; ++i) {
    const T gi = grad[i];
    m[i] = b1 * m[i] + c1 * gi;
    v[i] = b2 * v[i] + c2 * (gi * gi);
    const T mhat = m[i] / bc1;
    const T vhat = v[i] / bc2;
    param[i] = param[i] - lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

namespace scalar {

void sgemm(const GemmArgs& g, const float* a, const float* b, float* c) { gemm_ref(g, a, b, c); }

void adam_update(const AdamArgs& p, std::size_t n, float* param, const float* grad, float* m, float* v) {
  adam_ref(p, n, param, grad, m, v);
}

}  // namespace scalar

void dgemm(const GemmArgs& g, const double* a, const double* b, double* c) { gemm_ref(g, a, b, c); }

void adam_update(const AdamArgs& p, std::size_t n, double* param, const double* grad, double* m, double* v) {
  adam_ref(p, n, param, grad, m, v);
}

}  // namespace softshell::kernels
