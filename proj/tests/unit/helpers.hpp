#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <vector>

#include "slq/problem.hpp"
#include "slq/spectral.hpp"

namespace slq::testing {

inline Eigen::MatrixXd scalar(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

struct ScalarCoefficients {
  double mu = 0.0;
  double a1 = 0.0, b = 1.0, c = 0.0, d = 0.0, q = 0.0, r = 1.0, g = 1.0;
};

// One mode with a hooked eigenvalue and constant coefficients.
inline LQProblem scalar_problem(const ScalarCoefficients& k, double horizon = 1.0,
                                int steps = 200) {
  using CP = CoefficientProcess;
  return make_lq_problem(SpectralBasis::with_eigenvalues(1, {k.mu}), horizon, steps,
                         CP::constant(scalar(k.a1)), CP::constant(scalar(k.b)),
                         CP::constant(scalar(k.c)), CP::constant(scalar(k.d)),
                         CP::constant(scalar(k.q)), CP::constant(scalar(k.r)),
                         CP::constant(scalar(k.g)));
}

// The one-dimensional heat instance with constant coefficients.
inline LQProblem heat_problem(int modes, double q, double a2 = 0.0, double b2 = 0.0,
                              int steps = 200, double horizon = 1.0) {
  ParabolicSpec spec;
  spec.q = ParabolicCoefficient::constant(q);
  spec.a2 = ParabolicCoefficient::constant(a2);
  spec.b2 = ParabolicCoefficient::constant(b2);
  return from_parabolic_spec(spec, SpectralBasis::build(1, modes), horizon, steps);
}

// Scalar state whose drift and terminal weight read W(t).
inline LQProblem wonham_problem(int steps = 50) {
  using CP = CoefficientProcess;
  auto basis = SpectralBasis::with_eigenvalues(1, {0.0});
  return make_lq_problem(
      basis, 1.0, steps,
      CP::brownian(1, 1, [](double, double w) { return scalar(0.3 * std::tanh(w)); }),
      CP::constant(scalar(1.0)), CP::constant(scalar(0.2)), CP::constant(scalar(1.0)),
      CP::constant(scalar(1.0)), CP::constant(scalar(1.0)),
      CP::brownian(1, 1, [](double, double w) { return scalar(1.0 + 0.5 * std::tanh(w)); }));
}

inline double pi() { return std::numbers::pi; }

}  // namespace slq::testing
