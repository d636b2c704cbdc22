#pragma once

// Eigenbasis of the Dirichlet Laplacian on (0,1) or (0,1)^2, the spectrally
// weighted norms built on it, and Galerkin projections of multiplication
// operators.

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace slq {

/// Sine eigenbasis truncated to the first N modes, ordered by |mu_j|.
///
/// m = 1: e_j(x) = sqrt(2) sin(j pi x), mu_j = -(j pi)^2.
/// m = 2: e_(p,q)(x,y) = 2 sin(p pi x) sin(q pi y), mu = -pi^2 (p^2 + q^2),
///        ties broken by (p, q) lexicographically.
/// Graph norms g_j = sqrt(1 + mu_j^2); weights lambda_j = |mu_j|^(-m/2).
class SpectralBasis {
 public:
  /// Throws ConfigError for modes < 1 or dimension outside {1, 2}.
  static SpectralBasis build(int dimension, int modes);

  /// Test hook: keeps the sine eigenfunctions of `build(dimension, mu.size())`
  /// but replaces the eigenvalues. A zero eigenvalue gets lambda_j = 1 so the
  /// weighted norms stay finite.
  static SpectralBasis with_eigenvalues(int dimension, std::vector<double> mu);

  int dimension() const { return dimension_; }
  int modes() const { return static_cast<int>(mu_.size()); }
  std::span<const double> eigenvalues() const { return mu_; }
  std::span<const double> graph_norms() const { return graph_; }
  std::span<const double> lambda_weights() const { return lambda_; }
  /// Growth bound k in |e^{At}| <= e^{kt}; zero for the Dirichlet Laplacian.
  double growth_bound() const { return growth_bound_; }
  bool eigenvalues_overridden() const { return overridden_; }

  /// Wave numbers of mode j (0-based); the second entry is 0 when m = 1.
  std::array<int, 2> wave_numbers(int j) const { return waves_.at(j); }

  /// e_j at (x, y); y is ignored when m = 1.
  double eigenfunction(int j, double x, double y = 0.0) const;

  /// e^{mu_j dt} for every mode.
  std::vector<double> decay_factors(double dt) const;

 private:
  int dimension_ = 1;
  std::vector<double> mu_, graph_, lambda_;
  std::vector<std::array<int, 2>> waves_;
  double growth_bound_ = 0.0;
  bool overridden_ = false;
};

using SpatialFunction = std::function<double(double x, double y)>;

struct GalerkinMatrix {
  Eigen::MatrixXd entries;
  bool symmetric = false;
  std::string source;
  /// max |<e_i, e_j>_quad - delta_ij| of the quadrature used to build it.
  double orthogonality_defect = 0.0;
  /// Non-empty when the defect exceeds 1e-8.
  std::string warning;
};

/// Squared Hilbert-Schmidt norm of the embedding H -> H'_lambda truncated to
/// the first `n` modes: sum_{j<=n} lambda_j^2 / g_j^2.
double hs_embedding_partial_sum(const SpectralBasis& basis, int n);

/// M_jk = \int coeff(x) e_j(x) e_k(x) dx by Gauss-Legendre quadrature with
/// `quad_points` nodes per spatial dimension (>= 2 * modes).
GalerkinMatrix multiplication_matrix(const SpatialFunction& coeff, const SpectralBasis& basis,
                                     int quad_points, std::string source = "coefficient");

/// Same, with the default rule of 4N nodes per dimension.
GalerkinMatrix multiplication_matrix(const SpatialFunction& coeff, const SpectralBasis& basis,
                                     std::string source = "coefficient");

/// Coefficients of e^{A dt} v. Throws ContractViolation for dt < 0.
Eigen::VectorXd semigroup_apply(const SpectralBasis& basis, double dt, const Eigen::VectorXd& v);

struct WeightedNorms {
  double h = 0.0;
  double h_lambda = 0.0;
  double h_lambda_prime = 0.0;
};

WeightedNorms weighted_norms(const Eigen::VectorXd& v, const SpectralBasis& basis);

/// Operator norm of M acting on H_lambda (resp. H'_lambda), i.e. the spectral
/// norm of W M W^{-1} with W = diag(g / lambda) (resp. diag(lambda / g)).
double operator_norm_h_lambda(const Eigen::MatrixXd& m, const SpectralBasis& basis);
double operator_norm_h_lambda_prime(const Eigen::MatrixXd& m, const SpectralBasis& basis);

/// Coefficients <f, e_j> by the same quadrature as multiplication_matrix.
Eigen::VectorXd project(const SpatialFunction& f, const SpectralBasis& basis, int quad_points);

}  // namespace slq
