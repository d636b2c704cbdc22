#include <doctest.h>

#include <cstring>
#include <random>
#include <vector>

#include "slq/kernels.hpp"

using namespace slq::kernels;

namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  std::vector<double> v(n);
  for (auto& x : v) x = z(rng);
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_SUITE("kernels") {
#if SLQ_HAVE_AVX2_KERNELS
TEST_CASE("avx2 and scalar variants agree on every length") {
  if (detected_level() != SimdLevel::Avx2) return;
  std::mt19937_64 rng(11);
  for (std::size_t n = 0; n <= 37; ++n) {
    const auto x = random_vector(n, rng), d = random_vector(n, rng);
    auto y1 = random_vector(n, rng);
    auto y2 = y1;

    scalar::scale(y1, d);
    avx2::scale(y2, d);
    CHECK(bit_equal(y1, y2));

    scalar::axpy(0.37, x, y1);
    avx2::axpy(0.37, x, y2);
    CHECK(bit_equal(y1, y2));

    const double s = scalar::dot(x, d), v = avx2::dot(x, d);
    CHECK(std::abs(s - v) <= 1e-13 * (1.0 + std::abs(s)));

    auto m1 = random_vector(n * n, rng);
    auto m2 = m1;
    scalar::conjugate_diagonal(m1, d);
    avx2::conjugate_diagonal(m2, d);
    CHECK(bit_equal(m1, m2));

    const auto a = random_vector(n * 5, rng);
    const auto x5 = random_vector(5, rng);
    auto g1 = random_vector(n, rng);
    auto g2 = g1;
    scalar::gemv_acc(g1, a.data(), x5);
    avx2::gemv_acc(g2, a.data(), x5);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(g1[i] - g2[i]) <= 1e-13 * (1 + std::abs(g1[i])));
  }
}
#endif

TEST_CASE("scalar reference matches hand evaluation") {
  std::vector<double> y = {1, 2, 3};
  const std::vector<double> d = {2, 0.5, -1};
  scalar::scale(y, d);
  CHECK(y == std::vector<double>{2, 1, -3});
  scalar::axpy(2.0, d, y);
  CHECK(y == std::vector<double>{6, 2, -5});
  CHECK(scalar::dot(y, d) == doctest::Approx(12 + 1 + 5));
  std::vector<double> m = {1, 1, 1, 1};  // column-major 2x2
  scalar::conjugate_diagonal(m, std::vector<double>{2, 3});
  CHECK(m == std::vector<double>{4, 6, 6, 9});
  std::vector<double> acc = {0, 0};
  const double a[] = {1, 2, 3, 4};  // [[1,3],[2,4]]
  scalar::gemv_acc(acc, a, std::vector<double>{1, 1});
  CHECK(acc == std::vector<double>{4, 6});
}

TEST_CASE("dispatch level can be pinned") {
  const SimdLevel before = active_level();
  CHECK(set_active_level(SimdLevel::Scalar) == SimdLevel::Scalar);
  CHECK(active_level() == SimdLevel::Scalar);
  std::vector<double> y = {1, 2};
  scale(y, std::vector<double>{3, 4});
  CHECK(y == std::vector<double>{3, 8});
  set_active_level(before);
}
}
