#pragma once

#include <cstddef>

namespace softshell::kernels {

enum class Isa { scalar, avx2 };

const char* to_string(Isa isa);

// Best ISA supported by this CPU. SOFTSHELL_SIMD=scalar forces the reference
// kernels.
Isa detect_isa();
Isa active_isa();
// Overrides the dispatch target; requesting avx2 on a CPU without it falls
// back to scalar. Returns the ISA actually selected.
Isa set_isa(Isa isa);

// Row-major C(MxN) = beta*C + op(A) op(B), op(A) is MxK, op(B) is KxN.
// lda/ldb/ldc are the row strides of the stored (untransposed) matrices.
// beta must be 0 or 1.
struct GemmArgs {
  bool trans_a = false;
  bool trans_b = false;
  int m = 0, n = 0, k = 0;
  int lda = 0, ldb = 0, ldc = 0;
  float beta = 0.0f;
};

// Adam with bias correction. t is the 1-based step count.
struct AdamArgs {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  long step = 1;
};

namespace scalar {
void sgemm(const GemmArgs& g, const float* a, const float* b, float* c);
void adam_update(const AdamArgs& p, std::size_t n, float* param, const float* grad, float* m, float* v);
}  // namespace scalar

namespace avx2 {
void sgemm(const GemmArgs& g, const float* a, const float* b, float* c);
void adam_update(const AdamArgs& p, std::size_t n, float* param, const float* grad, float* m, float* v);
}  // namespace avx2

// Dispatching entry points.
void sgemm(const GemmArgs& g, const float* a, const float* b, float* c);
void adam_update(const AdamArgs& p, std::size_t n, float* param, const float* grad, float* m, float* v);

// Double precision: reference loops only, used for gradient checks.
void dgemm(const GemmArgs& g, const double* a, const double* b, double* c);
void adam_update(const AdamArgs& p, std::size_t n, double* param, const double* grad, double* m, double* v);

}  // namespace softshell::kernels
