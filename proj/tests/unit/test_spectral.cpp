#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "slq/errors.hpp"
#include "slq/spectral.hpp"

using namespace slq;
using slq::testing::pi;

namespace {

// Number of eigenvalues below x of the tridiagonal matrix with diagonal a and
// off-diagonal b (Sturm sequence count).
long sturm_count(long n, double a, double b, double x) {
  long count = 0;
  double q = a - x;
  if (q < 0) ++count;
  for (long i = 1; i < n; ++i) {
    if (q == 0.0) q = 1e-300;
    q = (a - x) - b * b / q;
    if (q < 0) ++count;
  }
  return count;
}

// k-th smallest eigenvalue (1-based) of the second-difference Dirichlet
// operator on `points` interior nodes, found by bisection.
double fd_eigenvalue(long points, int k) {
  const double h = 1.0 / static_cast<double>(points + 1);
  const double a = 2.0 / (h * h), b = -1.0 / (h * h);
  double lo = 0.0, hi = 4.0 / (h * h);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (sturm_count(points, a, b, mid) >= k) hi = mid; else lo = mid;
  }
  return 0.5 * (lo + hi);
}

double trapezoid(const std::function<double(double)>& f, long n) {
  double s = 0.5 * (f(0.0) + f(1.0));
  for (long i = 1; i < n; ++i) s += f(static_cast<double>(i) / n);
  return s / n;
}

}  // namespace

TEST_SUITE("spectral") {
TEST_CASE("one-dimensional eigenvalues match a finite-difference eigensolver") {
  const auto basis = SpectralBasis::build(1, 3);
  for (int j = 0; j < 3; ++j) {
    const double fd = fd_eigenvalue(9999, j + 1);
    CHECK(std::abs(-basis.eigenvalues()[j] - fd) / fd < 1e-3);
    CHECK(basis.eigenvalues()[j] == doctest::Approx(-std::pow((j + 1) * pi(), 2)).epsilon(1e-14));
  }
}

TEST_CASE("weights, graph norms and basis invariants") {
  const auto one = SpectralBasis::build(1, 1);
  CHECK(one.lambda_weights()[0] == doctest::Approx(1.0 / pi()).epsilon(1e-14));
  CHECK(one.graph_norms()[0] == doctest::Approx(std::sqrt(1.0 + std::pow(pi(), 4))));

  for (int m : {1, 2}) {
    const auto b = SpectralBasis::build(m, 20);
    double sum_sq = 0.0;
    for (int j = 0; j < b.modes(); ++j) {
      CHECK(b.eigenvalues()[j] < 0.0);
      CHECK(b.graph_norms()[j] >= 1.0);
      if (j > 0) {
        CHECK(std::abs(b.eigenvalues()[j]) >= std::abs(b.eigenvalues()[j - 1]));
        CHECK(b.lambda_weights()[j] <= b.lambda_weights()[j - 1]);
      }
      sum_sq += std::pow(b.lambda_weights()[j], 2);
    }
    CHECK(std::isfinite(sum_sq));
  }
  // Strictly decreasing in one dimension, where eigenvalues are simple.
  const auto b1 = SpectralBasis::build(1, 40);
  double sum = 0.0;
  for (int j = 1; j < 40; ++j) CHECK(b1.lambda_weights()[j] < b1.lambda_weights()[j - 1]);
  for (int j = 0; j < 40; ++j) sum += std::pow(b1.lambda_weights()[j], 2);
  CHECK(sum < 1.0 / 6.0 + 1e-12);  // sum 1/(j pi)^2 = 1/6
}

TEST_CASE("two-dimensional ordering breaks ties lexicographically") {
  const auto b = SpectralBasis::build(2, 3);
  CHECK(b.wave_numbers(0) == std::array<int, 2>{1, 1});
  CHECK(b.wave_numbers(1) == std::array<int, 2>{1, 2});
  CHECK(b.wave_numbers(2) == std::array<int, 2>{2, 1});
  CHECK(b.eigenvalues()[1] == doctest::Approx(-5 * pi() * pi()));
  CHECK(b.lambda_weights()[0] == doctest::Approx(1.0 / (2 * pi() * pi())));
}

TEST_CASE("eigenvalue growth ratio stabilizes") {
  // mu_j / j^(2/m) settles; only its stabilization is asserted.
  const auto b1 = SpectralBasis::build(1, 400);
  CHECK(b1.eigenvalues()[399] / (400.0 * 400.0) ==
        doctest::Approx(b1.eigenvalues()[199] / (200.0 * 200.0)));
  const auto b2 = SpectralBasis::build(2, 400);
  const double r200 = b2.eigenvalues()[199] / 200.0, r400 = b2.eigenvalues()[399] / 400.0;
  CHECK(std::abs(r400 / r200 - 1.0) < 0.05);
}

TEST_CASE("invalid bases are configuration errors") {
  CHECK_THROWS_AS(SpectralBasis::build(1, 0), ConfigError);
  CHECK_THROWS_AS(SpectralBasis::build(3, 4), ConfigError);
}

TEST_CASE("eigenfunctions are orthonormal") {
  const auto b = SpectralBasis::build(1, 2);
  const double e12 = trapezoid([&](double x) { return b.eigenfunction(0, x) * b.eigenfunction(1, x); }, 20000);
  const double e11 = trapezoid([&](double x) { return std::pow(b.eigenfunction(0, x), 2); }, 20000);
  CHECK(std::abs(e12) < 1e-10);
  CHECK(e11 == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("Hilbert-Schmidt partial sums") {
  const auto b = SpectralBasis::build(1, 128);
  CHECK(hs_embedding_partial_sum(b, 0) == 0.0);
  const double first = 1.0 / (pi() * pi() * (1.0 + std::pow(pi(), 4)));
  CHECK(hs_embedding_partial_sum(b, 1) == doctest::Approx(first).epsilon(1e-12));
  CHECK(first == doctest::Approx(0.001038).epsilon(1e-3));
  double bound = 0.0;
  for (int j = 0; j < 128; ++j) bound += 4.0 / std::abs(b.eigenvalues()[j]);
  double prev = 0.0, prev_term = 1e300;
  for (int n = 1; n <= 128; ++n) {
    const double s = hs_embedding_partial_sum(b, n);
    CHECK(s >= prev);
    const double term = s - prev;
    CHECK(term < prev_term);
    prev_term = term;
    prev = s;
  }
  CHECK(prev <= bound);
}

TEST_CASE("multiplication matrices") {
  const auto b = SpectralBasis::build(1, 6);
  const auto ident = multiplication_matrix([](double, double) { return 1.0; }, b, 24);
  CHECK((ident.entries - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(ident.symmetric);
  CHECK(ident.warning.empty());
  const auto c = multiplication_matrix([](double, double) { return -2.5; }, b);
  CHECK((c.entries + 2.5 * Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-10);

  const auto b2 = SpectralBasis::build(1, 2);
  const auto mx = multiplication_matrix([](double x, double) { return x; }, b2, 32);
  const double oracle = trapezoid(
      [](double x) { return x * 2.0 * std::sin(pi() * x) * std::sin(2 * pi() * x); }, 100000);
  CHECK(mx.entries(0, 1) == doctest::Approx(oracle).epsilon(1e-8));
  CHECK(mx.entries(0, 1) == doctest::Approx(-16.0 / (9.0 * pi() * pi())).epsilon(1e-12));
  CHECK(mx.entries(0, 1) == mx.entries(1, 0));

  const auto b22 = SpectralBasis::build(2, 5);
  const auto m2 = multiplication_matrix([](double x, double y) { return 1.0 + x * y; }, b22);
  CHECK((m2.entries - m2.entries.transpose()).norm() < 1e-12);
}

TEST_CASE("projection consistency improves with the truncation level") {
  // L = multiplication by 1 + x^2, v = coefficients of x(1 - x).
  auto coeff = [](double x, double) { return 1.0 + x * x; };
  auto f = [](double x, double) { return x * (1.0 - x); };
  auto product = [&](double x, double y) { return coeff(x, y) * f(x, y); };
  const auto big = SpectralBasis::build(1, 256);
  const Eigen::VectorXd reference = project(product, big, 1024);
  double previous = 1e300;
  for (int n : {4, 8, 16, 32}) {
    const auto b = SpectralBasis::build(1, n);
    const Eigen::VectorXd v = project(f, b, 4 * n);
    Eigen::VectorXd approx = Eigen::VectorXd::Zero(256);
    approx.head(n) = multiplication_matrix(coeff, b).entries * v;
    const double err = (approx - reference).norm();
    CHECK(err < previous);
    previous = err;
  }
  CHECK(previous < 1e-3);
}

TEST_CASE("semigroup action") {
  const auto b = SpectralBasis::build(1, 4);
  const Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(4, -1.0, 2.0);
  CHECK(semigroup_apply(b, 0.0, v) == v);
  for (double dt : {1e-4, 0.01, 0.3, 2.0}) CHECK(semigroup_apply(b, dt, v).norm() <= v.norm());
  const Eigen::VectorXd e1 = Eigen::VectorXd::Unit(4, 0);
  CHECK(semigroup_apply(b, 1.0, e1)(0) == doctest::Approx(std::exp(-pi() * pi())).epsilon(1e-14));
  CHECK_THROWS_AS(semigroup_apply(b, -0.1, v), ContractViolation);
  const Eigen::VectorXd st = semigroup_apply(b, 0.03, semigroup_apply(b, 0.02, v));
  CHECK((st - semigroup_apply(b, 0.05, v)).norm() < 1e-15);
  const auto f = b.decay_factors(0.1);
  CHECK(f[2] == doctest::Approx(std::exp(-0.9 * pi() * pi())));
}

TEST_CASE("weighted norms") {
  const auto b = SpectralBasis::build(1, 3);
  const Eigen::VectorXd e1 = Eigen::VectorXd::Unit(3, 0);
  const auto n1 = weighted_norms(e1, b);
  CHECK(n1.h == 1.0);
  CHECK(n1.h_lambda_prime == doctest::Approx(b.lambda_weights()[0] / b.graph_norms()[0]));
  CHECK(n1.h_lambda == doctest::Approx(b.graph_norms()[0] / b.lambda_weights()[0]));
  const auto z = weighted_norms(Eigen::VectorXd::Zero(3), b);
  CHECK(z.h == 0.0);
  CHECK(z.h_lambda == 0.0);
  CHECK(z.h_lambda_prime == 0.0);
  const Eigen::VectorXd v(Eigen::Vector3d(0.3, -1.0, 2.0));
  const auto n = weighted_norms(v, b);
  CHECK(n.h_lambda_prime <= n.h);
  CHECK(n.h <= n.h_lambda);
}
}
