#pragma once

// Monte Carlo checks of the identities that characterize the Riccati
// solution: transposition identities, value formula, optimality, cost
// decomposition and stationarity.

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "slq/forward.hpp"
#include "slq/problem.hpp"
#include "slq/riccati.hpp"
#include "slq/rng.hpp"

namespace slq {

struct IdentityReport {
  std::string name;
  double lhs = 0.0, lhs_se = 0.0;
  double rhs = 0.0, rhs_se = 0.0;
  /// |lhs - rhs| / (|lhs| + |rhs| + 1)
  double residual = 0.0;
  double tolerance = 0.05;
  bool pass = false;
  /// seed, modes, steps, paths and check-specific inputs.
  std::map<std::string, double> digest;
  /// Check-specific extra numbers (margins, eigenvalues, paired SE).
  std::map<std::string, double> details;
  std::vector<std::string> notes;

  /// Applies the pass rule: residual < tolerance or |lhs - rhs| < 3 (SE_L + SE_R).
  void finalize();
  nlohmann::ordered_json to_json() const;
  static IdentityReport from_json(const nlohmann::ordered_json& j);
};

/// Scales are the mode-1 amplitudes. They are large enough that both sides of
/// an identity are O(1) on the heat problems, so the +1 in the residual
/// denominator does not hide a mismatch.
struct TestInputParams {
  double xi_scale = 4.0;
  double u_scale = 4.0;
  double v_scale = 4.0;
  /// Mean of each input as a fraction of its per-mode scale.
  double mean_fraction = 0.5;
  /// Correlation between the first and second input sets.
  double correlation = 0.5;
  /// Forcings are constant on this many equal pieces of the horizon.
  int segments = 10;
  bool with_u = true;
  bool with_v = true;
};

/// Initial states and forcings of the two forward test equations. Per-mode
/// standard deviations follow the mode-1-normalized weights lambda_j / lambda_1
/// (states and drift forcings) and (lambda_j / g_j) / (lambda_1 / g_1)
/// (diffusion forcings).
struct TestInputSet {
  PathArray xi1, xi2;  // paths x 1 x N
  std::shared_ptr<const PathArray> u1, u2, v1, v2;  // paths x steps x N, null when absent
  TestInputParams params;
  std::uint64_t seed = 0;

  /// Swaps the roles of the two sets.
  TestInputSet swapped() const;
};

TestInputSet make_test_inputs(const SpectralBasis& basis, const TimeGrid& grid, long paths,
                              std::uint64_t seed, const TestInputParams& params = {});

/// Piecewise-constant Gaussian sequence with entry j distributed as
/// weights_j (mean_fraction + Z), used for random open-loop controls.
std::shared_ptr<PathArray> random_sequence(long paths, const TimeGrid& grid,
                                           const Eigen::VectorXd& weights, double mean_fraction,
                                           int segments, std::uint64_t seed, Stream stream,
                                           std::uint32_t salt = 0);

struct CheckOptions {
  long paths = 10000;
  std::uint64_t seed = 0;
  int start_step = 0;
  double tolerance = 0.05;
  int workers = 0;
};

IdentityReport check_transposition_identity(const LQProblem& problem,
                                            const RiccatiSolution& solution,
                                            const TestInputSet& inputs, const CheckOptions& opt);

/// (P, Lambda) must solve the Lyapunov equation of `theta`.
IdentityReport check_hlambda_transposition(const LQProblem& problem, const Feedback& theta,
                                           const RiccatiSolution& solution,
                                           const TestInputSet& inputs, const CheckOptions& opt);

IdentityReport check_value_identity(const LQProblem& problem, const Feedback& theta,
                                    const RiccatiSolution& solution, const Eigen::VectorXd& eta,
                                    const CheckOptions& opt);

struct OptimalityOptions {
  std::vector<double> deltas = {0.1, 0.5, 1.0};
  bool common_random_numbers = true;
  /// Replaces the random directions by this one (shared or per path).
  std::shared_ptr<const PathArray> fixed_direction;
};

struct OptimalityDraw {
  double delta = 0.0;
  double excess = 0.0;     // mean of J(u) - J(Theta x)
  double excess_se = 0.0;  // SE of the per-path difference
  double margin() const { return excess + 3.0 * excess_se; }
};

/// Draws u = Theta x + delta phi with phi uniform in [-1, 1]^m per path and
/// step; passes when every draw has J(u) >= J(Theta x) - 3 SE_diff.
IdentityReport check_optimality(const LQProblem& problem, const Feedback& theta,
                                const Eigen::VectorXd& eta, int perturbations,
                                const CheckOptions& opt, const OptimalityOptions& oo = {},
                                std::vector<OptimalityDraw>* draws = nullptr);

/// 2 J(u) against <P xi, xi> + sum K (u - Theta y)^2 dt along the same paths.
IdentityReport check_cost_decomposition(const LQProblem& problem, const Feedback& theta,
                                        const RiccatiSolution& solution,
                                        std::shared_ptr<const PathArray> control,
                                        const PathArray& xi, const CheckOptions& opt);

/// Worst min eig K and ||K Theta + L|| / (1 + ||L||) over sampled (t_k, w).
/// Theta is `theta` when given, otherwise synthesized from the solution.
IdentityReport check_stationarity_and_K(const LQProblem& problem,
                                        const RiccatiSolution& solution, int samples,
                                        std::uint64_t seed, double tolerance,
                                        const Feedback* theta = nullptr);

/// JSON array of reports.
nlohmann::ordered_json reports_to_json(const std::vector<IdentityReport>& reports);

/// Fixed-width table, one line per report.
std::string reports_table(const std::vector<IdentityReport>& reports);

}  // namespace slq
