#pragma once

// Backward Riccati and Lyapunov equations on the Galerkin space.
//
//   dP = -[P(A+A1) + (A+A1)'P + LC + C'L + C'PC + Q - L'K^{-1}L] dt + Lambda dW,
//   P(T) = G,  K = R + D'PD,  L = B'P + D'(PC + Lambda).
//
// Deterministic coefficients reduce this to a matrix ODE (Lambda = 0). Random
// coefficients are handled by regression Monte Carlo on a Brownian cloud,
// either directly or through the linear Lyapunov equation with a feedback
// parameter Theta iterated to the stationarity condition K Theta + L = 0.

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "slq/forward.hpp"
#include "slq/problem.hpp"
#include "slq/regression.hpp"

namespace slq {

/// Minimum eigenvalue K must keep for the feedback to be synthesized.
inline constexpr double kMinKEigenvalue = 1e-8;

enum class Representation { Deterministic, Regression };

struct RiccatiDiagnostics {
  std::string method;
  double min_eig_k = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = true;
  /// Change of Theta between consecutive fixed-point iterates.
  std::vector<double> iteration_history;
  /// sup over the cloud of |K Theta + L|_F / (1 + |L|_F) for the Theta that
  /// produced P (fixed-point solver only).
  double fixed_point_residual = 0.0;
  /// sup over the cloud of |Lambda|_F.
  double max_lambda_norm = 0.0;
  std::vector<std::string> warnings;
};

class RiccatiSolution {
 public:
  TimeGrid grid;
  Representation representation = Representation::Deterministic;
  /// P and Lambda at grid points 0..steps. For regression solutions the
  /// terminal P is read from G directly.
  std::vector<RegressionModel> p_models;
  std::vector<RegressionModel> lambda_models;
  CoefficientProcess terminal;
  RiccatiDiagnostics diagnostics;
  /// Feedback whose Lyapunov equation produced this solution (Lyapunov and
  /// fixed-point solvers); null for the Riccati solvers.
  std::shared_ptr<const Feedback> source_feedback;

  Eigen::MatrixXd p(int step, double w = 0.0) const;
  Eigen::MatrixXd lambda(int step, double w = 0.0) const;
  int modes() const { return static_cast<int>(terminal.rows()); }
};

struct KL {
  Eigen::MatrixXd k, l;
};

/// K = R + D'PD, L = B'P + D'(PC + Lambda).
KL compute_kl(const Eigen::MatrixXd& p, const Eigen::MatrixXd& lambda,
              const CoefficientSnapshot& snap);

/// Theta = -K^{-1} L via Cholesky. Throws SingularKError when the smallest
/// eigenvalue of K is below kMinKEigenvalue.
Eigen::MatrixXd synthesize_feedback(const Eigen::MatrixXd& p, const Eigen::MatrixXd& lambda,
                                    const CoefficientSnapshot& snap);

double min_eigenvalue(const Eigen::MatrixXd& symmetric);

/// Theta(t_k, w) = -K^{-1}L from the solution's P and Lambda. Deterministic
/// solutions of deterministic problems yield a precomputed per-step gain.
Feedback feedback_from(const LQProblem& problem, const RiccatiSolution& solution);

/// Deterministic Riccati ODE, integrated backward from P(T) = G with an
/// integrating-factor RK4 that applies e^{A h} exactly.
RiccatiSolution solve_riccati_ode(const LQProblem& problem, const TimeGrid& grid);

/// Deterministic Lyapunov ODE for a fixed deterministic feedback Theta, same
/// integrator; Theta between grid points is linearly interpolated.
RiccatiSolution solve_lyapunov_ode(const LQProblem& problem, const Feedback& theta,
                                   const TimeGrid& grid);

struct BsdeOptions {
  long paths = 10000;
  int feature_degree = 3;
  std::uint64_t seed = 0;
  int workers = 0;
};

/// Lyapunov BSDE with parameter Theta by regression Monte Carlo:
///   Lambda_k = E_k[(P_{k+1} - E_k P_{k+1}) dW_k] / dt,
///   P_k = e^{A dt} E_k[P_{k+1}] e^{A dt} + int_0^dt e^{As} E_k[F(P_{k+1}, Lambda_k, Theta_k)] e^{As} ds,
/// with the driver frozen over the step so the integral is an entrywise weight.
/// Throws ContractViolation if paths < 10 * (feature_degree + 1).
RiccatiSolution solve_lyapunov_bsde(const LQProblem& problem, const Feedback& theta,
                                    const TimeGrid& grid, const BsdeOptions& options);

/// Same backward sweep with the nonlinear Riccati driver.
RiccatiSolution solve_riccati_bsde_direct(const LQProblem& problem, const TimeGrid& grid,
                                          const BsdeOptions& options);

struct FixedPointOptions {
  int max_iters = 50;
  /// Non-positive: 1e-6 for deterministic problems, 1e-3 otherwise.
  double tol = 0.0;
};

/// Theta_0 = 0; solve the Lyapunov BSDE for Theta_j; Theta_{j+1} = -K^{-1}L;
/// stop once the RMS-over-cloud, max-over-grid change of Theta is below tol.
/// The same Brownian cloud is reused for every iterate.
RiccatiSolution theta_fixed_point(const LQProblem& problem, const TimeGrid& grid,
                                  const BsdeOptions& options, const FixedPointOptions& fp = {});

double default_fixed_point_tol(const LQProblem& problem);

}  // namespace slq
