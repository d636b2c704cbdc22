#include "slq/problem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "slq/errors.hpp"
#include "slq/rng.hpp"

namespace slq {

namespace {

double min_eigenvalue(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

void expect_shape(const CoefficientProcess& c, int rows, int cols, const char* name) {
  if (c.rows() != rows || c.cols() != cols) {
    std::ostringstream os;
    os << "coefficient " << name << " has shape " << c.rows() << "x" << c.cols() << ", expected "
       << rows << "x" << cols;
    throw ContractViolation(os.str());
  }
}

}  // namespace

CoefficientProcess::CoefficientProcess(CoefficientKind kind, int rows, int cols, Eval eval,
                                       std::string smoothness)
    : kind_(kind), rows_(rows), cols_(cols), eval_(std::move(eval)),
      smoothness_(std::move(smoothness)) {}

CoefficientProcess CoefficientProcess::constant(Eigen::MatrixXd m) {
  const int rows = static_cast<int>(m.rows()), cols = static_cast<int>(m.cols());
  return {CoefficientKind::Deterministic, rows, cols,
          [m = std::move(m)](double, double) { return m; }, "constant"};
}

CoefficientProcess CoefficientProcess::zero(int rows, int cols) {
  return constant(Eigen::MatrixXd::Zero(rows, cols));
}

CoefficientProcess CoefficientProcess::of_time(int rows, int cols,
                                               std::function<Eigen::MatrixXd(double)> f) {
  return {CoefficientKind::Deterministic, rows, cols,
          [f = std::move(f)](double t, double) { return f(t); }, "time-dependent"};
}

CoefficientProcess CoefficientProcess::brownian(int rows, int cols, Eval f) {
  return {CoefficientKind::BrownianFunctional, rows, cols, std::move(f), "brownian-functional"};
}

CoefficientProcess CoefficientProcess::separable(
    Eigen::MatrixXd base, std::function<double(double, double)> multiplier, bool random) {
  const int rows = static_cast<int>(base.rows()), cols = static_cast<int>(base.cols());
  return {random ? CoefficientKind::BrownianFunctional : CoefficientKind::Deterministic, rows,
          cols,
          [base = std::move(base), multiplier = std::move(multiplier)](double t, double w) {
            return Eigen::MatrixXd(base * multiplier(t, w));
          },
          "separable"};
}

Eigen::MatrixXd CoefficientProcess::operator()(double t, double w) const {
  if (!eval_) return Eigen::MatrixXd::Zero(rows_, cols_);
  Eigen::MatrixXd m = eval_(t, is_deterministic() ? 0.0 : w);
  if (symmetric_) m = (0.5 * (m + m.transpose())).eval();
  return m;
}

bool LQProblem::is_deterministic() const {
  return a1.is_deterministic() && b.is_deterministic() && c.is_deterministic() &&
         d.is_deterministic() && q.is_deterministic() && r.is_deterministic() &&
         g.is_deterministic();
}

LQProblem make_lq_problem(SpectralBasis basis, double horizon, int time_steps,
                          CoefficientProcess a1, CoefficientProcess b, CoefficientProcess c,
                          CoefficientProcess d, CoefficientProcess q, CoefficientProcess r,
                          CoefficientProcess g) {
  if (!(horizon > 0.0)) throw ContractViolation("horizon must be positive");
  if (time_steps < 1) throw ContractViolation("time_steps must be >= 1");
  const int n = basis.modes();
  const int m = b.cols();
  expect_shape(a1, n, n, "A1");
  expect_shape(b, n, m, "B");
  expect_shape(c, n, n, "C");
  expect_shape(d, n, m, "D");
  expect_shape(q, n, n, "Q");
  expect_shape(r, m, m, "R");
  expect_shape(g, n, n, "G");
  LQProblem p;
  p.basis = std::move(basis);
  p.horizon = horizon;
  p.time_steps = time_steps;
  p.control_dim = m;
  p.a1 = std::move(a1);
  p.b = std::move(b);
  p.c = std::move(c);
  p.d = std::move(d);
  p.q = std::move(q.make_symmetric());
  p.r = std::move(r.make_symmetric());
  p.g = std::move(g.make_symmetric());
  return p;
}

CoefficientSnapshot evaluate_coefficients(const LQProblem& problem, double t, double w,
                                          bool terminal) {
  const double slack = 1e-12 * std::max(1.0, problem.horizon);
  if (t < -slack || t > problem.horizon + slack) {
    throw ContractViolation("evaluate_coefficients: t outside [0, T]");
  }
  CoefficientSnapshot s;
  s.t = t;
  s.w = w;
  s.a1 = problem.a1(t, w);
  s.b = problem.b(t, w);
  s.c = problem.c(t, w);
  s.d = problem.d(t, w);
  s.q = problem.q(t, w);
  s.r = problem.r(t, w);
  if (terminal) s.g = problem.g(problem.horizon, w);
  return s;
}

ParabolicCoefficient ParabolicCoefficient::constant(double value) {
  ParabolicCoefficient c;
  c.spatial = [value](double, double) { return value; };
  c.label = "constant";
  return c;
}

LQProblem from_parabolic_spec(const ParabolicSpec& spec, const SpectralBasis& basis,
                              double horizon, int steps, double r_min) {
  // Pointwise sign conditions on q >= 0, g >= 0, r >= r_min over quadrature
  // nodes and a (t, w) lattice covering +-5 standard deviations of W.
  const int quad = 4 * basis.modes();
  std::vector<double> xs;
  for (int i = 0; i <= quad; ++i) xs.push_back((i + 0.5) / (quad + 1));
  const double w_span = 5.0 * std::sqrt(horizon);
  auto sign_check = [&](const ParabolicCoefficient& c, const char* name, double floor) {
    for (int it = 0; it <= 4; ++it) {
      const double t = horizon * it / 4.0;
      for (int iw = 0; iw <= (c.random ? 40 : 0); ++iw) {
        const double w = c.random ? -w_span + 2.0 * w_span * iw / 40.0 : 0.0;
        const double mult = c.multiplier_at(t, w);
        for (double x : xs) {
          for (double y : (basis.dimension() == 2 ? xs : std::vector<double>{0.0})) {
            const double v = mult * c.spatial(x, y);
            if (!(v >= floor)) {
              std::ostringstream os;
              os << "sign assumption violated: " << name << " = " << v << " < " << floor
                 << " at x=" << x << ", t=" << t << ", w=" << w;
              throw ConfigError(os.str());
            }
          }
        }
      }
    }
  };
  sign_check(spec.q, "q", 0.0);
  sign_check(spec.g, "g", 0.0);
  sign_check(spec.r, "r", r_min);

  auto project = [&](const ParabolicCoefficient& c, const char* name) {
    GalerkinMatrix gm = multiplication_matrix(c.spatial, basis, name);
    if (!c.multiplier) return CoefficientProcess::constant(std::move(gm.entries));
    return CoefficientProcess::separable(std::move(gm.entries), c.multiplier, c.random);
  };
  LQProblem p = make_lq_problem(basis, horizon, steps, project(spec.a1, "a1"),
                                project(spec.b1, "b1"), project(spec.a2, "a2"),
                                project(spec.b2, "b2"), project(spec.q, "q"),
                                project(spec.r, "r"), project(spec.g, "g"));
  p.r_min = r_min;
  return p;
}

bool AssumptionReport::passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const AssumptionCheck& c) { return c.passed || !c.mandatory; });
}

const AssumptionCheck& AssumptionReport::at(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return c;
  throw ContractViolation("no assumption check named " + name);
}

std::string AssumptionReport::summary() const {
  std::ostringstream os;
  for (const auto& c : checks) {
    os << c.name << ": " << (c.passed ? "pass" : "FAIL");
    for (const auto& [k, v] : c.witnesses) os << " " << k << "=" << v;
    if (!c.note.empty()) os << " (" << c.note << ")";
    os << "\n";
  }
  return os.str();
}

AssumptionReport check_assumptions(const LQProblem& problem, int samples, std::uint64_t seed) {
  if (samples < 1) throw ContractViolation("check_assumptions: samples must be >= 1");
  AssumptionReport report;
  report.samples = samples;
  report.seed = seed;

  const auto mu = problem.basis.eigenvalues();
  const double max_mu = *std::max_element(mu.begin(), mu.end());
  AssumptionCheck contraction{"contraction", max_mu <= 0.0, true, {{"contraction_margin", -max_mu},
                                                  {"growth_bound", problem.basis.growth_bound()}},
                      "diagonal semigroup e^{mu t}, |S(t)| <= e^{kt}"};
  AssumptionCheck eigenbasis{"eigenbasis", true, true, {{"modes", static_cast<double>(problem.modes())}},
                      "orthonormal sine eigenbasis by construction"};

  auto rng = path_stream(seed, 0, Stream::Sampling);
  std::uniform_real_distribution<double> unif(0.0, problem.horizon);
  std::normal_distribution<double> normal(0.0, 1.0);

  const double inf = std::numeric_limits<double>::infinity();
  double min_q = inf, min_r = inf, min_g = inf;
  double a1_hl = 0, c_hl = 0, q_hl = 0, g_hl = 0, a1_hlp = 0, c_hlp = 0, q_hlp = 0, g_hlp = 0;
  double b_u = 0, d_u = 0, r_u = 0;
  const SpectralBasis& basis = problem.basis;
  for (int s = 0; s < samples; ++s) {
    const double t = unif(rng);
    const double w = std::sqrt(t) * normal(rng);
    const double w_terminal = std::sqrt(problem.horizon) * normal(rng);
    report.max_abs_w = std::max({report.max_abs_w, std::abs(w), std::abs(w_terminal)});
    const CoefficientSnapshot snap = evaluate_coefficients(problem, t, w);
    const Eigen::MatrixXd g = problem.g(problem.horizon, w_terminal);
    min_q = std::min(min_q, min_eigenvalue(snap.q));
    min_r = std::min(min_r, min_eigenvalue(snap.r));
    min_g = std::min(min_g, min_eigenvalue(g));
    a1_hl = std::max(a1_hl, operator_norm_h_lambda(snap.a1, basis));
    c_hl = std::max(c_hl, operator_norm_h_lambda(snap.c, basis));
    q_hl = std::max(q_hl, operator_norm_h_lambda(snap.q, basis));
    g_hl = std::max(g_hl, operator_norm_h_lambda(g, basis));
    a1_hlp = std::max(a1_hlp, operator_norm_h_lambda_prime(snap.a1, basis));
    c_hlp = std::max(c_hlp, operator_norm_h_lambda_prime(snap.c, basis));
    q_hlp = std::max(q_hlp, operator_norm_h_lambda_prime(snap.q, basis));
    g_hlp = std::max(g_hlp, operator_norm_h_lambda_prime(g, basis));
    if (snap.b.rows() == snap.b.cols()) {
      b_u = std::max(b_u, operator_norm_h_lambda(snap.b, basis));
      d_u = std::max(d_u, operator_norm_h_lambda(snap.d, basis));
      r_u = std::max(r_u, operator_norm_h_lambda(snap.r, basis));
    } else {
      b_u = std::max(b_u, snap.b.norm());
      d_u = std::max(d_u, snap.d.norm());
      r_u = std::max(r_u, snap.r.norm());
    }
  }

  const double psd_slack = -1e-10;
  AssumptionCheck sign{"sign", min_q >= psd_slack && min_r >= problem.r_min && min_g >= psd_slack,
                      true,
                      {{"min_eig_Q", min_q}, {"min_eig_R", min_r}, {"min_eig_G", min_g},
                       {"r_min", problem.r_min}},
                      "sampled sign conditions G >= 0, R >= r_min, Q >= 0"};
  auto finite = [](std::initializer_list<double> xs) {
    return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
  };
  AssumptionCheck state_bounds{"state_coefficients_bounded", finite({a1_hl, c_hl, q_hl, g_hl, a1_hlp, c_hlp, q_hlp, g_hlp}),
                      true,
                      {{"A1_H_lambda", a1_hl},
                       {"C_H_lambda", c_hl},
                       {"Q_H_lambda", q_hl},
                       {"G_H_lambda", g_hl},
                       {"A1_H_lambda_prime", a1_hlp},
                       {"C_H_lambda_prime", c_hlp},
                       {"Q_H_lambda_prime", q_hlp},
                       {"G_H_lambda_prime", g_hlp}},
                      "sup of weighted operator norms over samples"};
  AssumptionCheck control_bounds{"control_coefficients_bounded", finite({b_u, d_u, r_u}), true,
                      {{"B_norm", b_u}, {"D_norm", d_u}, {"R_norm", r_u}},
                      "dense subspace equals U under Galerkin truncation"};
  report.checks = {contraction, eigenbasis, sign, state_bounds, control_bounds};
  return report;
}

void require_assumptions(const AssumptionReport& report) {
  if (!report.passed()) throw ConfigError("assumption check failed:\n" + report.summary());
}

}  // namespace slq
