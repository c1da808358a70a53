#include "softshell/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace softshell::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect_isa()};
  return isa;
}

}  // namespace

const char* to_string(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

Isa detect_isa() {
  const char* env = std::getenv("SOFTSHELL_SIMD");
  if (env && std::strcmp(env, "scalar") == 0) return Isa::scalar;
  return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

Isa set_isa(Isa isa) {
  if (isa == Isa::avx2 && !cpu_has_avx2()) isa = Isa::scalar;
  current().store(isa, std::memory_order_relaxed);
  return isa;
}

void sgemm(const GemmArgs& g, const float* a, const float* b, float* c) {
  if (active_isa() == Isa::avx2)
    avx2::sgemm(g, a, b, c);
  else
    scalar::sgemm(g, a, b, c);
}

void adam_update(const AdamArgs& p, std::size_t n, float* param, const float* grad, float* m, float* v) {
  if (active_isa() == Isa::avx2)
    avx2::adam_update(p, n, param, grad, m, v);
  else
    scalar::adam_update(p, n, param, grad, m, v);
}

}  // namespace softshell::kernels
