#include "softshell/kernels.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <vector>

namespace softshell::kernels::avx2 {

namespace {

constexpr int kMr = 6;
constexpr int kNr = 16;
constexpr int kKc = 256;
constexpr int kMc = 96;
constexpr int kNc = 2048;

inline float load_a(const GemmArgs& g, const float* a, int i, int p) {
  return g.trans_a ? a[static_cast<std::size_t>(p) * g.lda + i] : a[static_cast<std::size_t>(i) * g.lda + p];
}

// Packs rows [i0, i0+mc) x cols [p0, p0+kc) of op(A) into kMr-row panels,
// column-interleaved, zero padded.
void pack_a(const GemmArgs& g, const float* a, int i0, int mc, int p0, int kc, float* dst) {
  for (int ir = 0; ir < mc; ir += kMr) {
    const int rows = std::min(kMr, mc - ir);
    for (int p = 0; p < kc; ++p) {
      for (int r = 0; r < rows; ++r) dst[r] = load_a(g, a, i0 + ir + r, p0 + p);
      for (int r = rows; r < kMr; ++r) dst[r] = 0.0f;
      dst += kMr;
    }
  }
}

// Packs rows [p0, p0+kc) x cols [j0, j0+nc) of op(B) into kNr-col panels.
void pack_b(const GemmArgs& g, const float* b, int p0, int kc, int j0, int nc, float* dst) {
  for (int jr = 0; jr < nc; jr += kNr) {
    const int cols = std::min(kNr, nc - jr);
    for (int p = 0; p < kc; ++p) {
      if (!g.trans_b) {
        const float* src = b + static_cast<std::size_t>(p0 + p) * g.ldb + j0 + jr;
        if (cols == kNr) {
          _mm256_storeu_ps(dst, _mm256_loadu_ps(src));
          _mm256_storeu_ps(dst + 8, _mm256_loadu_ps(src + 8));
        } else {
          for (int c = 0; c < cols; ++c) dst[c] = src[c];
          for (int c = cols; c < kNr; ++c) dst[c] = 0.0f;
        }
      } else {
        for (int c = 0; c < cols; ++c) dst[c] = b[static_cast<std::size_t>(j0 + jr + c) * g.ldb + p0 + p];
        for (int c = cols; c < kNr; ++c) dst[c] = 0.0f;
      }
      dst += kNr;
    }
  }
}

// 6x16 tile: acc = Ap * Bp over kc, then C = (accumulate ? C : 0) + acc.
void micro_kernel(int kc, const float* ap, const float* bp, float* c, int ldc, int rows, int cols, bool accumulate) {
  __m256 c00 = _mm256_setzero_ps(), c01 = _mm256_setzero_ps();
  __m256 c10 = _mm256_setzero_ps(), c11 = _mm256_setzero_ps();
  __m256 c20 = _mm256_setzero_ps(), c21 = _mm256_setzero_ps();
  __m256 c30 = _mm256_setzero_ps(), c31 = _mm256_setzero_ps();
  __m256 c40 = _mm256_setzero_ps(), c41 = _mm256_setzero_ps();
  __m256 c50 = _mm256_setzero_ps(), c51 = _mm256_setzero_ps();
  for (int p = 0; p < kc; ++p) {
    const __m256 b0 = _mm256_load_ps(bp);
    const __m256 b1 = _mm256_load_ps(bp + 8);
    __m256 a = _mm256_broadcast_ss(ap);
    c00 = _mm256_fmadd_ps(a, b0, c00);
    c01 = _mm256_fmadd_ps(a, b1, c01);
    a = _mm256_broadcast_ss(ap + 1);
    c10 = _mm256_fmadd_ps(a, b0, c10);
    c11 = _mm256_fmadd_ps(a, b1, c11);
    a = _mm256_broadcast_ss(ap + 2);
    c20 = _mm256_fmadd_ps(a, b0, c20);
    c21 = _mm256_fmadd_ps(a, b1, c21);
    a = _mm256_broadcast_ss(ap + 3);
    c30 = _mm256_fmadd_ps(a, b0, c30);
    c31 = _mm256_fmadd_ps(a, b1, c31);
    a = _mm256_broadcast_ss(ap + 4);
    c40 = _mm256_fmadd_ps(a, b0, c40);
    c41 = _mm256_fmadd_ps(a, b1, c41);
    a = _mm256_broadcast_ss(ap + 5);
    c50 = _mm256_fmadd_ps(a, b0, c50);
    c51 = _mm256_fmadd_ps(a, b1, c51);
    ap += kMr;
    bp += kNr;
  }
  alignas(32) float tile[kMr * kNr];
  _mm256_store_ps(tile + 0 * kNr, c00);
  _mm256_store_ps(tile + 0 * kNr + 8, c01);
  _mm256_store_ps(tile + 1 * kNr, c10);
  _mm256_store_ps(tile + 1 * kNr + 8, c11);
  _mm256_store_ps(tile + 2 * kNr, c20);
  _mm256_store_ps(tile + 2 * kNr + 8, c21);
  _mm256_store_ps(tile + 3 * kNr, c30);
  _mm256_store_ps(tile + 3 * kNr + 8, c31);
  _mm256_store_ps(tile + 4 * kNr, c40);
  _mm256_store_ps(tile + 4 * kNr + 8, c41);
  _mm256_store_ps(tile + 5 * kNr, c50);
  _mm256_store_ps(tile + 5 * kNr + 8, c51);
  if (cols == kNr) {
    for (int r = 0; r < rows; ++r) {
      float* crow = c + static_cast<std::size_t>(r) * ldc;
      __m256 lo = _mm256_load_ps(tile + r * kNr), hi = _mm256_load_ps(tile + r * kNr + 8);
      if (accumulate) {
        lo = _mm256_add_ps(lo, _mm256_loadu_ps(crow));
        hi = _mm256_add_ps(hi, _mm256_loadu_ps(crow + 8));
      }
      _mm256_storeu_ps(crow, lo);
      _mm256_storeu_ps(crow + 8, hi);
    }
    return;
  }
  for (int r = 0; r < rows; ++r) {
    float* crow = c + static_cast<std::size_t>(r) * ldc;
    for (int j = 0; j < cols; ++j) crow[j] = accumulate ? crow[j] + tile[r * kNr + j] : tile[r * kNr + j];
  }
}

template <typename T>
struct AlignedBuffer {
  T* ptr = nullptr;
  std::size_t size = 0;
  void reserve(std::size_t n) {
    if (n <= size) return;
    std::free(ptr);
    ptr = static_cast<T*>(std::aligned_alloc(64, ((n * sizeof(T) + 63) / 64) * 64));
    size = n;
  }
  ~AlignedBuffer() { std::free(ptr); }
};

}  // namespace

void sgemm(const GemmArgs& g, const float* a, const float* b, float* c) {
  if (g.m <= 0 || g.n <= 0) return;
  if (g.k <= 0) {
    if (g.beta == 0.0f)
      for (int i = 0; i < g.m; ++i) std::memset(c + static_cast<std::size_t>(i) * g.ldc, 0, sizeof(float) * g.n);
    return;
  }
  thread_local AlignedBuffer<float> abuf, bbuf;
  abuf.reserve(static_cast<std::size_t>(kMc) * kKc);
  bbuf.reserve(static_cast<std::size_t>(kKc) * (kNc + kNr));
  for (int j0 = 0; j0 < g.n; j0 += kNc) {
    const int nc = std::min(kNc, g.n - j0);
    for (int p0 = 0; p0 < g.k; p0 += kKc) {
      const int kc = std::min(kKc, g.k - p0);
      const bool accumulate = p0 > 0 || g.beta != 0.0f;
      pack_b(g, b, p0, kc, j0, nc, bbuf.ptr);
      for (int i0 = 0; i0 < g.m; i0 += kMc) {
        const int mc = std::min(kMc, g.m - i0);
        pack_a(g, a, i0, mc, p0, kc, abuf.ptr);
        for (int jr = 0; jr < nc; jr += kNr) {
          const float* bp = bbuf.ptr + static_cast<std::size_t>(jr) * kc;
          for (int ir = 0; ir < mc; ir += kMr) {
            const float* ap = abuf.ptr + static_cast<std::size_t>(ir) * kc;
            float* cp = c + static_cast<std::size_t>(i0 + ir) * g.ldc + j0 + jr;
            micro_kernel(kc, ap, bp, cp, g.ldc, std::min(kMr, mc - ir), std::min(kNr, nc - jr), accumulate);
          }
        }
      }
    }
  }
}

void adam_update(const AdamArgs& p, std::size_t n, float* param, const float* grad, float* m, float* v) {
  const float b1 = p.beta1, b2 = p.beta2;
  const float c1 = 1.0f - b1, c2 = 1.0f - b2;
  const float bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(p.beta1), static_cast<double>(p.step)));
  const float bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(p.beta2), static_cast<double>(p.step)));
  const __m256 vb1 = _mm256_set1_ps(b1), vb2 = _mm256_set1_ps(b2);
  const __m256 vc1 = _mm256_set1_ps(c1), vc2 = _mm256_set1_ps(c2);
  const __m256 vbc1 = _mm256_set1_ps(bc1), vbc2 = _mm256_set1_ps(bc2);
  const __m256 vlr = _mm256_set1_ps(p.lr), veps = _mm256_set1_ps(p.eps);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 g = _mm256_loadu_ps(grad + i);
    __m256 mi = _mm256_add_ps(_mm256_mul_ps(vb1, _mm256_loadu_ps(m + i)), _mm256_mul_ps(vc1, g));
    __m256 vi = _mm256_add_ps(_mm256_mul_ps(vb2, _mm256_loadu_ps(v + i)), _mm256_mul_ps(vc2, _mm256_mul_ps(g, g)));
    _mm256_storeu_ps(m + i, mi);
    _mm256_storeu_ps(v + i, vi);
    const __m256 mhat = _mm256_div_ps(mi, vbc1);
    const __m256 vhat = _mm256_div_ps(vi, vbc2);
    const __m256 step = _mm256_div_ps(_mm256_mul_ps(vlr, mhat), _mm256_add_ps(_mm256_sqrt_ps(vhat), veps));
    _mm256_storeu_ps(param + i, _mm256_sub_ps(_mm256_loadu_ps(param + i), step));
  }
  for (; i < n; ++i) {
    const float gi = grad[i];
    m[i] = b1 * m[i] + c1 * gi;
    v[i] = b2 * v[i] + c2 * (gi * gi);
    const float mhat = m[i] / bc1;
    const float vhat = v[i] / bc2;
    param[i] = param[i] - p.lr * mhat / (std::sqrt(vhat) + p.eps);
  }
}

}  // namespace softshell::kernels::avx2
