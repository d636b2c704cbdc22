#pragma once

// Dense inner-loop kernels used by the simulators and the regression
// assembly. Every kernel has a portable scalar reference and, on x86-64, an
// AVX2 variant chosen once at startup from CPUID. Elementwise kernels produce
// bit-identical results across variants; reductions (dot) agree to rounding.

#include <cstddef>
#include <span>
#include <string_view>

namespace slq::kernels {

enum class SimdLevel { Scalar, Avx2 };

std::string_view to_string(SimdLevel level);

/// Best level supported by the running CPU. Honors SLQ_SIMD=scalar.
SimdLevel detected_level();

/// Level currently used by the dispatching entry points.
SimdLevel active_level();

/// Pins the dispatch level (tests use this to compare variants). Requesting a
/// level the CPU lacks falls back to Scalar and returns the level applied.
SimdLevel set_active_level(SimdLevel level);

// y[i] *= d[i]
void scale(std::span<double> y, std::span<const double> d);

// y[i] += a * x[i]
void axpy(double a, std::span<const double> x, std::span<double> y);

double dot(std::span<const double> x, std::span<const double> y);

// y += A x with A column-major, rows = y.size(), cols = x.size().
void gemv_acc(std::span<double> y, const double* a, std::span<const double> x);

// M[i,j] *= d[i] * d[j] for column-major square M of order d.size().
void conjugate_diagonal(std::span<double> m, std::span<const double> d);

// Explicit variants, exposed for equivalence tests.
namespace scalar {
void scale(std::span<double> y, std::span<const double> d);
void axpy(double a, std::span<const double> x, std::span<double> y);
double dot(std::span<const double> x, std::span<const double> y);
void gemv_acc(std::span<double> y, const double* a, std::span<const double> x);
void conjugate_diagonal(std::span<double> m, std::span<const double> d);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define SLQ_HAVE_AVX2_KERNELS 1
namespace avx2 {
void scale(std::span<double> y, std::span<const double> d);
void axpy(double a, std::span<const double> x, std::span<double> y);
double dot(std::span<const double> x, std::span<const double> y);
void gemv_acc(std::span<double> y, const double* a, std::span<const double> x);
void conjugate_diagonal(std::span<double> m, std::span<const double> d);
}  // namespace avx2
#else
#define SLQ_HAVE_AVX2_KERNELS 0
#endif

}  // namespace slq::kernels
