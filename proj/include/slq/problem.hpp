#pragma once

// LQ problem data in eigen-coordinates: coefficient processes that depend on
// (t, W(t)), the cost weights, and sampled checks of the standing assumptions.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "slq/spectral.hpp"

namespace slq {

enum class CoefficientKind { Deterministic, BrownianFunctional };

/// A matrix-valued coefficient evaluated at (t, W(t)). Evaluation must be pure.
class CoefficientProcess {
 public:
  using Eval = std::function<Eigen::MatrixXd(double t, double w)>;

  CoefficientProcess() = default;
  CoefficientProcess(CoefficientKind kind, int rows, int cols, Eval eval,
                     std::string smoothness = "smooth");

  static CoefficientProcess constant(Eigen::MatrixXd m);
  static CoefficientProcess zero(int rows, int cols);
  static CoefficientProcess of_time(int rows, int cols, std::function<Eigen::MatrixXd(double)> f);
  static CoefficientProcess brownian(int rows, int cols, Eval f);
  /// base * multiplier(t, w); random when the multiplier reads w.
  static CoefficientProcess separable(Eigen::MatrixXd base,
                                      std::function<double(double t, double w)> multiplier,
                                      bool random);

  CoefficientKind kind() const { return kind_; }
  bool is_deterministic() const { return kind_ == CoefficientKind::Deterministic; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const std::string& smoothness() const { return smoothness_; }

  /// Returns (M + M^T) / 2 from operator() from now on.
  CoefficientProcess& make_symmetric() {
    symmetric_ = true;
    return *this;
  }
  bool symmetric() const { return symmetric_; }

  Eigen::MatrixXd operator()(double t, double w) const;

 private:
  CoefficientKind kind_ = CoefficientKind::Deterministic;
  int rows_ = 0, cols_ = 0;
  Eval eval_;
  std::string smoothness_;
  bool symmetric_ = false;
};

struct LQProblem {
  SpectralBasis basis;
  double horizon = 1.0;
  int time_steps = 100;
  int control_dim = 1;
  CoefficientProcess a1, b, c, d, q, r;
  /// Terminal weight; evaluated at (T, W(T)).
  CoefficientProcess g;
  double r_min = 1e-6;

  int modes() const { return basis.modes(); }
  bool is_deterministic() const;
};

/// Validates shapes and marks Q, R, G symmetric. Throws ContractViolation on
/// shape mismatch.
LQProblem make_lq_problem(SpectralBasis basis, double horizon, int time_steps,
                          CoefficientProcess a1, CoefficientProcess b, CoefficientProcess c,
                          CoefficientProcess d, CoefficientProcess q, CoefficientProcess r,
                          CoefficientProcess g);

struct CoefficientSnapshot {
  double t = 0.0, w = 0.0;
  Eigen::MatrixXd a1, b, c, d, q, r;
  std::optional<Eigen::MatrixXd> g;
};

/// All coefficients at one (t, w). G is included when `terminal` is set.
/// Throws ContractViolation for t outside [0, T].
CoefficientSnapshot evaluate_coefficients(const LQProblem& problem, double t, double w,
                                          bool terminal = false);

/// One coefficient alpha(x) * m(t, w) of the parabolic model.
struct ParabolicCoefficient {
  SpatialFunction spatial;
  std::function<double(double t, double w)> multiplier;  // empty: 1
  bool random = false;
  std::string label = "custom";

  static ParabolicCoefficient constant(double value);
  double multiplier_at(double t, double w) const { return multiplier ? multiplier(t, w) : 1.0; }
};

/// dy = (Laplace y + a1 y + b1 u) dt + (a2 y + b2 u) dW with weights q, r, g.
struct ParabolicSpec {
  ParabolicCoefficient a1 = ParabolicCoefficient::constant(0.0);
  ParabolicCoefficient a2 = ParabolicCoefficient::constant(0.0);
  ParabolicCoefficient b1 = ParabolicCoefficient::constant(1.0);
  ParabolicCoefficient b2 = ParabolicCoefficient::constant(0.0);
  ParabolicCoefficient q = ParabolicCoefficient::constant(0.0);
  ParabolicCoefficient r = ParabolicCoefficient::constant(1.0);
  ParabolicCoefficient g = ParabolicCoefficient::constant(1.0);
};

/// Galerkin-projects every coefficient; A1<-a1, B<-b1, C<-a2, D<-b2.
/// Throws ConfigError when q < 0, g < 0 or r < r_min somewhere on the sampled
/// (x, t, w) set.
LQProblem from_parabolic_spec(const ParabolicSpec& spec, const SpectralBasis& basis,
                              double horizon, int steps, double r_min = 1e-6);

struct AssumptionCheck {
  std::string name;
  bool passed = false;
  bool mandatory = true;
  std::map<std::string, double> witnesses;
  std::string note;
};

struct AssumptionReport {
  std::vector<AssumptionCheck> checks;
  int samples = 0;
  std::uint64_t seed = 0;
  double max_abs_w = 0.0;

  bool passed() const;
  const AssumptionCheck& at(const std::string& name) const;
  std::string summary() const;
};

/// Samples (t, w) with w ~ N(0, t) and evaluates numeric surrogates of the
/// contraction, basis, sign and weighted-boundedness assumptions.
AssumptionReport check_assumptions(const LQProblem& problem, int samples, std::uint64_t seed);

/// Throws ConfigError carrying the summary if a mandatory check failed.
void require_assumptions(const AssumptionReport& report);

}  // namespace slq
