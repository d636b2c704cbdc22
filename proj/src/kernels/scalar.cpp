#include "slq/kernels.hpp"

namespace slq::kernels::scalar {

void scale(std::span<double> y, std::span<const double> d) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= d[i];
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

void gemv_acc(std::span<double> y, const double* a, std::span<const double> x) {
  const std::size_t rows = y.size();
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double xj = x[j];
    const double* col = a + j * rows;
    for (std::size_t i = 0; i < rows; ++i) y[i] += col[i] * xj;
  }
}

void conjugate_diagonal(std::span<double> m, std::span<const double> d) {
  const std::size_t n = d.size();
  for (std::size_t j = 0; j < n; ++j) {
    double* col = m.data() + j * n;
    const double dj = d[j];
    for (std::size_t i = 0; i < n; ++i) col[i] = col[i] * (d[i] * dj);
  }
}

}  // namespace slq::kernels::scalar
