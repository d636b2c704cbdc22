#include <atomic>
#include <cstdlib>
#include <cstring>

#include "slq/kernels.hpp"

namespace slq::kernels {

namespace {

bool cpu_has_avx2() {
#if SLQ_HAVE_AVX2_KERNELS && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

SimdLevel probe() {
  if (const char* env = std::getenv("SLQ_SIMD"); env && std::strcmp(env, "scalar") == 0) {
    return SimdLevel::Scalar;
  }
  return cpu_has_avx2() ? SimdLevel::Avx2 : SimdLevel::Scalar;
}

std::atomic<SimdLevel>& level_slot() {
  static std::atomic<SimdLevel> slot{probe()};
  return slot;
}

bool use_avx2() {
#if SLQ_HAVE_AVX2_KERNELS
  return level_slot().load(std::memory_order_relaxed) == SimdLevel::Avx2;
#else
  return false;
#endif
}

}  // namespace

std::string_view to_string(SimdLevel level) {
  return level == SimdLevel::Avx2 ? "avx2" : "scalar";
}

SimdLevel detected_level() { return probe(); }

SimdLevel active_level() { return level_slot().load(); }

SimdLevel set_active_level(SimdLevel level) {
  if (level == SimdLevel::Avx2 && !cpu_has_avx2()) level = SimdLevel::Scalar;
  level_slot().store(level);
  return level;
}

#if SLQ_HAVE_AVX2_KERNELS
#define SLQ_DISPATCH(fn, ...) \
  return use_avx2() ? avx2::fn(__VA_ARGS__) : scalar::fn(__VA_ARGS__)
#else
#define SLQ_DISPATCH(fn, ...) return scalar::fn(__VA_ARGS__)
#endif

void scale(std::span<double> y, std::span<const double> d) { SLQ_DISPATCH(scale, y, d); }

void axpy(double a, std::span<const double> x, std::span<double> y) {
  SLQ_DISPATCH(axpy, a, x, y);
}

double dot(std::span<const double> x, std::span<const double> y) { SLQ_DISPATCH(dot, x, y); }

void gemv_acc(std::span<double> y, const double* a, std::span<const double> x) {
  SLQ_DISPATCH(gemv_acc, y, a, x);
}

void conjugate_diagonal(std::span<double> m, std::span<const double> d) {
  SLQ_DISPATCH(conjugate_diagonal, m, d);
}

#undef SLQ_DISPATCH

}  // namespace slq::kernels
