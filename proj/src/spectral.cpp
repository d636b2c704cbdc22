#include "slq/spectral.hpp"

#include <gsl/gsl_integration.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "slq/errors.hpp"
#include "slq/kernels.hpp"

namespace slq {

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<std::array<int, 2>> enumerate_waves(int dimension, int modes) {
  std::vector<std::array<int, 2>> waves;
  if (dimension == 1) {
    for (int j = 1; j <= modes; ++j) waves.push_back({j, 0});
    return waves;
  }
  // The N smallest p^2 + q^2 all have p, q <= N.
  for (int p = 1; p <= modes; ++p)
    for (int q = 1; q <= modes; ++q) waves.push_back({p, q});
  std::stable_sort(waves.begin(), waves.end(), [](const auto& a, const auto& b) {
    const int ka = a[0] * a[0] + a[1] * a[1];
    const int kb = b[0] * b[0] + b[1] * b[1];
    return ka < kb;
  });
  waves.resize(modes);
  return waves;
}

struct QuadratureRule {
  std::vector<double> x, w;
};

QuadratureRule gauss_legendre(int n) {
  std::unique_ptr<gsl_integration_glfixed_table, decltype(&gsl_integration_glfixed_table_free)>
      table(gsl_integration_glfixed_table_alloc(static_cast<size_t>(n)),
            &gsl_integration_glfixed_table_free);
  QuadratureRule rule;
  rule.x.resize(n);
  rule.w.resize(n);
  for (int i = 0; i < n; ++i) {
    gsl_integration_glfixed_point(0.0, 1.0, static_cast<size_t>(i), &rule.x[i], &rule.w[i],
                                  table.get());
  }
  return rule;
}

// Tensor-product nodes for the basis dimension: columns are (x, y, weight).
struct Nodes {
  std::vector<double> x, y, w;
};

Nodes quadrature_nodes(const SpectralBasis& basis, int quad_points) {
  const QuadratureRule rule = gauss_legendre(quad_points);
  Nodes nodes;
  if (basis.dimension() == 1) {
    nodes.x = rule.x;
    nodes.y.assign(rule.x.size(), 0.0);
    nodes.w = rule.w;
    return nodes;
  }
  for (int i = 0; i < quad_points; ++i) {
    for (int k = 0; k < quad_points; ++k) {
      nodes.x.push_back(rule.x[i]);
      nodes.y.push_back(rule.x[k]);
      nodes.w.push_back(rule.w[i] * rule.w[k]);
    }
  }
  return nodes;
}

// Rows: nodes, columns: e_j at the node.
Eigen::MatrixXd eigenfunction_table(const SpectralBasis& basis, const Nodes& nodes) {
  Eigen::MatrixXd table(static_cast<Eigen::Index>(nodes.x.size()), basis.modes());
  for (Eigen::Index i = 0; i < table.rows(); ++i)
    for (int j = 0; j < basis.modes(); ++j)
      table(i, j) = basis.eigenfunction(j, nodes.x[i], nodes.y[i]);
  return table;
}

void check_quad_points(const SpectralBasis& basis, int quad_points) {
  if (quad_points < 2 * basis.modes()) {
    throw ContractViolation("multiplication_matrix: quad_points must be >= 2 * modes");
  }
}

double weighted_spectral_norm(const Eigen::MatrixXd& m, const Eigen::VectorXd& weight) {
  const Eigen::MatrixXd scaled = weight.asDiagonal() * m * weight.cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(scaled);
  return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

}  // namespace

SpectralBasis SpectralBasis::build(int dimension, int modes) {
  if (modes < 1) throw ConfigError("spectral basis needs at least one mode");
  if (dimension != 1 && dimension != 2) {
    throw ConfigError("spectral basis supports spatial dimension 1 or 2 only");
  }
  SpectralBasis b;
  b.dimension_ = dimension;
  b.waves_ = enumerate_waves(dimension, modes);
  for (const auto& [p, q] : b.waves_) {
    const double mu = -kPi * kPi * static_cast<double>(p * p + q * q);
    b.mu_.push_back(mu);
    b.graph_.push_back(std::sqrt(1.0 + mu * mu));
    b.lambda_.push_back(std::pow(std::abs(mu), -0.5 * dimension));
  }
  return b;
}

SpectralBasis SpectralBasis::with_eigenvalues(int dimension, std::vector<double> mu) {
  SpectralBasis b = build(dimension, static_cast<int>(mu.size()));
  b.mu_ = std::move(mu);
  b.overridden_ = true;
  b.growth_bound_ = std::max(0.0, *std::max_element(b.mu_.begin(), b.mu_.end()));
  for (std::size_t j = 0; j < b.mu_.size(); ++j) {
    const double mu_j = b.mu_[j];
    b.graph_[j] = std::sqrt(1.0 + mu_j * mu_j);
    b.lambda_[j] = mu_j == 0.0 ? 1.0 : std::pow(std::abs(mu_j), -0.5 * dimension);
  }
  return b;
}

double SpectralBasis::eigenfunction(int j, double x, double y) const {
  const auto& [p, q] = waves_.at(static_cast<std::size_t>(j));
  if (dimension_ == 1) return std::numbers::sqrt2 * std::sin(p * kPi * x);
  return 2.0 * std::sin(p * kPi * x) * std::sin(q * kPi * y);
}

std::vector<double> SpectralBasis::decay_factors(double dt) const {
  std::vector<double> d(mu_.size());
  for (std::size_t j = 0; j < mu_.size(); ++j) d[j] = std::exp(mu_[j] * dt);
  return d;
}

double hs_embedding_partial_sum(const SpectralBasis& basis, int n) {
  if (n > basis.modes()) throw ContractViolation("hs_embedding_partial_sum: n exceeds modes");
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    const double ratio = basis.lambda_weights()[j] / basis.graph_norms()[j];
    sum += ratio * ratio;
  }
  return sum;
}

GalerkinMatrix multiplication_matrix(const SpatialFunction& coeff, const SpectralBasis& basis,
                                     int quad_points, std::string source) {
  check_quad_points(basis, quad_points);
  const Nodes nodes = quadrature_nodes(basis, quad_points);
  const Eigen::MatrixXd table = eigenfunction_table(basis, nodes);
  const Eigen::Index count = table.rows();

  Eigen::VectorXd weight(count), weighted_coeff(count);
  for (Eigen::Index i = 0; i < count; ++i) {
    weight(i) = nodes.w[i];
    weighted_coeff(i) = nodes.w[i] * coeff(nodes.x[i], nodes.y[i]);
  }

  const int n = basis.modes();
  GalerkinMatrix out;
  out.source = std::move(source);
  out.symmetric = true;
  out.entries.resize(n, n);
  Eigen::MatrixXd gram(n, n);
  for (int j = 0; j < n; ++j) {
    for (int k = j; k < n; ++k) {
      const auto pj = table.col(j).array();
      const auto pk = table.col(k).array();
      out.entries(j, k) = out.entries(k, j) = (weighted_coeff.array() * pj * pk).sum();
      gram(j, k) = gram(k, j) = (weight.array() * pj * pk).sum();
    }
  }
  out.orthogonality_defect =
      (gram - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
  if (out.orthogonality_defect > 1e-8) {
    out.warning = "quadrature orthogonality defect " + std::to_string(out.orthogonality_defect);
  }
  return out;
}

GalerkinMatrix multiplication_matrix(const SpatialFunction& coeff, const SpectralBasis& basis,
                                     std::string source) {
  return multiplication_matrix(coeff, basis, 4 * basis.modes(), std::move(source));
}

Eigen::VectorXd semigroup_apply(const SpectralBasis& basis, double dt, const Eigen::VectorXd& v) {
  if (dt < 0.0) throw ContractViolation("semigroup_apply: negative time step");
  if (v.size() != basis.modes()) throw ContractViolation("semigroup_apply: length mismatch");
  Eigen::VectorXd out = v;
  const std::vector<double> decay = basis.decay_factors(dt);
  kernels::scale({out.data(), static_cast<std::size_t>(out.size())}, decay);
  return out;
}

WeightedNorms weighted_norms(const Eigen::VectorXd& v, const SpectralBasis& basis) {
  if (v.size() != basis.modes()) throw ContractViolation("weighted_norms: length mismatch");
  WeightedNorms norms;
  double h = 0.0, hl = 0.0, hlp = 0.0;
  for (int j = 0; j < basis.modes(); ++j) {
    const double v2 = v(j) * v(j);
    const double ratio = basis.graph_norms()[j] / basis.lambda_weights()[j];
    h += v2;
    hl += v2 * ratio * ratio;
    hlp += v2 / (ratio * ratio);
  }
  norms.h = std::sqrt(h);
  norms.h_lambda = std::sqrt(hl);
  norms.h_lambda_prime = std::sqrt(hlp);
  return norms;
}

double operator_norm_h_lambda(const Eigen::MatrixXd& m, const SpectralBasis& basis) {
  Eigen::VectorXd weight(basis.modes());
  for (int j = 0; j < basis.modes(); ++j)
    weight(j) = basis.graph_norms()[j] / basis.lambda_weights()[j];
  return weighted_spectral_norm(m, weight);
}

double operator_norm_h_lambda_prime(const Eigen::MatrixXd& m, const SpectralBasis& basis) {
  Eigen::VectorXd weight(basis.modes());
  for (int j = 0; j < basis.modes(); ++j)
    weight(j) = basis.lambda_weights()[j] / basis.graph_norms()[j];
  return weighted_spectral_norm(m, weight);
}

Eigen::VectorXd project(const SpatialFunction& f, const SpectralBasis& basis, int quad_points) {
  const Nodes nodes = quadrature_nodes(basis, quad_points);
  const Eigen::MatrixXd table = eigenfunction_table(basis, nodes);
  Eigen::VectorXd weighted(table.rows());
  for (Eigen::Index i = 0; i < table.rows(); ++i)
    weighted(i) = nodes.w[i] * f(nodes.x[i], nodes.y[i]);
  return table.transpose() * weighted;
}

}  // namespace slq
