#include "slq/riccati.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "slq/errors.hpp"
#include "slq/kernels.hpp"
#include "slq/parallel.hpp"

namespace slq {

namespace {

using Eigen::MatrixXd;

MatrixXd symmetrized(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

// E X E for diagonal E.
MatrixXd conjugated(MatrixXd x, std::span<const double> decay) {
  kernels::conjugate_diagonal({x.data(), static_cast<std::size_t>(x.size())}, decay);
  return x;
}

[[noreturn]] void throw_singular(double t, double w, double min_eig) {
  std::ostringstream os;
  os << "K = R + D'PD is not positive definite at t=" << t << ", w=" << w
     << " (min eigenvalue " << min_eig << ")";
  throw SingularKError(os.str(), t, w, min_eig);
}

MatrixXd gain_from_kl(const KL& kl, double min_eig, const CoefficientSnapshot& snap) {
  if (!(min_eig >= kMinKEigenvalue)) throw_singular(snap.t, snap.w, min_eig);
  return -kl.k.llt().solve(kl.l);
}

// Riccati right-hand side without the A terms, which the integrators apply
// through the semigroup.
MatrixXd riccati_driver(const MatrixXd& p, const MatrixXd& lambda, const CoefficientSnapshot& s,
                        double* min_eig_out) {
  const KL kl = compute_kl(p, lambda, s);
  const double min_eig = min_eigenvalue(kl.k);
  if (min_eig_out) *min_eig_out = std::min(*min_eig_out, min_eig);
  if (!(min_eig >= kMinKEigenvalue)) throw_singular(s.t, s.w, min_eig);
  const MatrixXd k_inv_l = kl.k.llt().solve(kl.l);
  const MatrixXd pa = p * s.a1;
  const MatrixXd lc = lambda * s.c;
  return symmetrized(pa + pa.transpose() + lc + lc.transpose() +
                     s.c.transpose() * p * s.c + s.q - kl.l.transpose() * k_inv_l);
}

MatrixXd lyapunov_driver(const MatrixXd& p, const MatrixXd& lambda, const CoefficientSnapshot& s,
                         const MatrixXd& theta) {
  const MatrixXd a_theta = s.a1 + s.b * theta;
  const MatrixXd c_theta = s.c + s.d * theta;
  const MatrixXd pa = p * a_theta;
  const MatrixXd lc = lambda * c_theta;
  return symmetrized(pa + pa.transpose() + c_theta.transpose() * p * c_theta + lc +
                     lc.transpose() + s.q + theta.transpose() * s.r * theta);
}

// One integrating-factor RK4 step of dP/ds = AP + PA + N(t, P) in backward
// time s = T - t, from t1 down to t1 - h.
template <class Nonlinear>
MatrixXd lawson_rk4_step(const MatrixXd& p, double t1, double h, std::span<const double> e_full,
                         std::span<const double> e_half, Nonlinear&& rhs) {
  const double tm = t1 - 0.5 * h;
  const double t0 = t1 - h;
  const MatrixXd k1 = rhs(t1, p);
  const MatrixXd k2 = rhs(tm, conjugated(p + 0.5 * h * k1, e_half));
  const MatrixXd k3 = rhs(tm, MatrixXd(conjugated(p, e_half) + 0.5 * h * k2));
  const MatrixXd k4 = rhs(t0, MatrixXd(conjugated(p, e_full) + h * conjugated(k3, e_half)));
  return symmetrized(conjugated(p + (h / 6.0) * k1, e_full) +
                     (h / 3.0) * conjugated(k2 + k3, e_half) + (h / 6.0) * k4);
}

RiccatiSolution deterministic_solution(const LQProblem& problem, const TimeGrid& grid,
                                       std::string method) {
  RiccatiSolution sol;
  sol.grid = grid;
  sol.representation = Representation::Deterministic;
  sol.terminal = problem.g;
  sol.diagnostics.method = std::move(method);
  const int n = problem.modes();
  sol.p_models.resize(static_cast<std::size_t>(grid.steps) + 1);
  sol.lambda_models.assign(static_cast<std::size_t>(grid.steps) + 1,
                           RegressionModel::constant(MatrixXd::Zero(n, n), true));
  return sol;
}

void require_deterministic(const LQProblem& problem, const char* who) {
  if (!problem.is_deterministic()) {
    throw ContractViolation(std::string(who) + " needs deterministic coefficients");
  }
}

void require_paths(const BsdeOptions& o) {
  const long features = o.feature_degree + 1;
  if (o.feature_degree < 0 || o.paths < 10 * features) {
    std::ostringstream os;
    os << "regression needs paths >= 10 x features (" << 10 * features << "), got " << o.paths;
    throw ContractViolation(os.str());
  }
}

// Driver evaluated per cloud path: (step, t, w, snapshot, P_{k+1}, Lambda_k,
// running min eigenvalue of K) -> F.
using CloudDriver = std::function<MatrixXd(int, const CoefficientSnapshot&, const MatrixXd&,
                                           const MatrixXd&, double*)>;

RiccatiSolution backward_sweep(const LQProblem& problem, const TimeGrid& grid,
                               const BrownianPaths& cloud, const BsdeOptions& options,
                               const CloudDriver& driver, std::string method) {
  const int n = problem.modes();
  const long count = cloud.paths;
  const double dt = grid.dt();
  const int steps = grid.steps;
  const std::vector<double> decay = problem.basis.decay_factors(dt);
  // The driver is frozen over the step and integrated against the semigroup:
  // P_k = E P_{k+1} E + int_0^dt e^{As} F e^{As} ds. Dividing by the
  // conjugation that follows the fit gives the weight applied before it.
  const auto mu = problem.basis.eigenvalues();
  MatrixXd forcing_weight(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double z = std::min(-(mu[i] + mu[j]) * dt, 600.0);
      forcing_weight(i, j) = std::abs(z) < 1e-12 ? dt : dt * std::expm1(z) / z;
    }

  RiccatiSolution sol;
  sol.grid = grid;
  sol.representation = Representation::Regression;
  sol.terminal = problem.g;
  sol.diagnostics.method = std::move(method);
  sol.p_models.resize(static_cast<std::size_t>(steps) + 1);
  sol.lambda_models.resize(static_cast<std::size_t>(steps) + 1);
  sol.lambda_models.back() = RegressionModel::constant(MatrixXd::Zero(n, n), true);

  std::vector<double> w_now(static_cast<std::size_t>(count));
  std::vector<MatrixXd> p_next(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i) {
    w_now[static_cast<std::size_t>(i)] = cloud.value(i, steps);
    p_next[static_cast<std::size_t>(i)] = problem.g(problem.horizon, cloud.value(i, steps));
  }
  {
    EntrySamples terminal(count, n, n, true);
    for (long i = 0; i < count; ++i) terminal.set(i, p_next[static_cast<std::size_t>(i)]);
    sol.p_models.back() = fit_regression(w_now, terminal, options.feature_degree,
                                         std::sqrt(problem.horizon));
  }

  int reduced_steps = 0;
  double min_eig_k = std::numeric_limits<double>::infinity();
  double max_lambda = 0.0;
  for (int k = steps - 1; k >= 0; --k) {
    const double t = grid.time(k);
    const double scale = t > 0.0 ? std::sqrt(t) : 1.0;
    for (long i = 0; i < count; ++i) w_now[static_cast<std::size_t>(i)] = cloud.value(i, k);

    EntrySamples next(count, n, n, true);
    for (long i = 0; i < count; ++i) next.set(i, p_next[static_cast<std::size_t>(i)]);
    const RegressionModel cond = fit_regression(w_now, next, options.feature_degree, scale);

    // Martingale increment of P_{k+1} against dW, which removes the
    // conditional mean before the product with the noise.
    EntrySamples z(count, n, n, true);
    for (long i = 0; i < count; ++i) {
      const double w = w_now[static_cast<std::size_t>(i)];
      z.set(i, (p_next[static_cast<std::size_t>(i)] - cond(w)) * (cloud.increment(i, k) / dt));
    }
    RegressionModel lambda = fit_regression(w_now, z, options.feature_degree, scale);

    const std::optional<CoefficientSnapshot> shared =
        problem.is_deterministic() ? std::optional(evaluate_coefficients(problem, t, 0.0))
                                   : std::nullopt;
    EntrySamples target(count, n, n, true);
    std::vector<double> chunk_min(static_cast<std::size_t>(count), min_eig_k);
    std::vector<double> chunk_lambda(static_cast<std::size_t>(count), 0.0);
    parallel_chunks(count, options.workers, [&](long begin, long end) {
      for (long i = begin; i < end; ++i) {
        const double w = w_now[static_cast<std::size_t>(i)];
        const CoefficientSnapshot snap = shared ? *shared : evaluate_coefficients(problem, t, w);
        const MatrixXd lam = lambda(w);
        double local_min = std::numeric_limits<double>::infinity();
        const MatrixXd f = driver(k, snap, p_next[static_cast<std::size_t>(i)], lam, &local_min);
        if (!f.allFinite()) {
          std::ostringstream os;
          os << "non-finite driver at step " << k << ", path " << i;
          throw SolverError(os.str());
        }
        chunk_min[static_cast<std::size_t>(i)] = local_min;
        chunk_lambda[static_cast<std::size_t>(i)] = lam.norm();
        target.set(i, p_next[static_cast<std::size_t>(i)] + forcing_weight.cwiseProduct(f));
      }
    });
    for (long i = 0; i < count; ++i) {
      min_eig_k = std::min(min_eig_k, chunk_min[static_cast<std::size_t>(i)]);
      max_lambda = std::max(max_lambda, chunk_lambda[static_cast<std::size_t>(i)]);
    }

    RegressionModel p_model = fit_regression(w_now, target, options.feature_degree, scale);
    p_model.conjugate(decay);
    if (k > 0 && (p_model.degree() < options.feature_degree ||
                  lambda.degree() < options.feature_degree)) {
      ++reduced_steps;
    }

    for (long i = 0; i < count; ++i)
      p_next[static_cast<std::size_t>(i)] = p_model(w_now[static_cast<std::size_t>(i)]);
    sol.p_models[static_cast<std::size_t>(k)] = std::move(p_model);
    sol.lambda_models[static_cast<std::size_t>(k)] = std::move(lambda);
  }
  if (reduced_steps > 0) {
    sol.diagnostics.warnings.push_back("regression degree reduced at " +
                                       std::to_string(reduced_steps) + " interior steps");
  }
  sol.diagnostics.min_eig_k = min_eig_k;
  sol.diagnostics.max_lambda_norm = max_lambda;
  return sol;
}

struct ThetaSweep {
  double max_change = 0.0;
  double stationarity = 0.0;
  double min_eig_k = std::numeric_limits<double>::infinity();
};

// Compares the iterate `theta` that produced `sol` with its update
// -K^{-1}L(sol) over the whole cloud.
ThetaSweep compare_on_cloud(const LQProblem& problem, const RiccatiSolution& sol,
                            const Feedback& theta,
                            const BrownianPaths& cloud, int workers) {
  const TimeGrid& grid = sol.grid;
  const long count = cloud.paths;
  ThetaSweep out;
  for (int k = 0; k < grid.steps; ++k) {
    const double t = grid.time(k);
    std::vector<double> change(static_cast<std::size_t>(count)),
        resid(static_cast<std::size_t>(count)), mins(static_cast<std::size_t>(count));
    parallel_chunks(count, workers, [&](long begin, long end) {
      for (long i = begin; i < end; ++i) {
        const double w = cloud.value(i, k);
        const CoefficientSnapshot snap = evaluate_coefficients(problem, t, w);
        const KL kl = compute_kl(sol.p(k, w), sol.lambda(k, w), snap);
        const MatrixXd th = theta(k, w);
        const double min_eig = min_eigenvalue(kl.k);
        mins[static_cast<std::size_t>(i)] = min_eig;
        resid[static_cast<std::size_t>(i)] = (kl.k * th + kl.l).norm() / (1.0 + kl.l.norm());
        // Same value as update(k, w), without evaluating the models twice.
        change[static_cast<std::size_t>(i)] = (gain_from_kl(kl, min_eig, snap) - th).squaredNorm();
      }
    });
    double sum = 0.0;
    for (long i = 0; i < count; ++i) {
      sum += change[static_cast<std::size_t>(i)];
      out.stationarity = std::max(out.stationarity, resid[static_cast<std::size_t>(i)]);
      out.min_eig_k = std::min(out.min_eig_k, mins[static_cast<std::size_t>(i)]);
    }
    out.max_change = std::max(out.max_change, std::sqrt(sum / static_cast<double>(count)));
  }
  return out;
}

}  // namespace

Eigen::MatrixXd RiccatiSolution::p(int step, double w) const {
  if (step < 0 || step > grid.steps) throw ContractViolation("RiccatiSolution::p: step off grid");
  if (representation == Representation::Regression && step == grid.steps) {
    return terminal(grid.horizon, w);
  }
  return p_models[static_cast<std::size_t>(step)](w);
}

Eigen::MatrixXd RiccatiSolution::lambda(int step, double w) const {
  if (step < 0 || step > grid.steps) {
    throw ContractViolation("RiccatiSolution::lambda: step off grid");
  }
  return lambda_models[static_cast<std::size_t>(step)](w);
}

double min_eigenvalue(const Eigen::MatrixXd& symmetric) {
  if (symmetric.rows() == 1) return symmetric(0, 0);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetric, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

KL compute_kl(const Eigen::MatrixXd& p, const Eigen::MatrixXd& lambda,
              const CoefficientSnapshot& snap) {
  KL out;
  const MatrixXd pd = p * snap.d;
  out.k = symmetrized(snap.r + snap.d.transpose() * pd);
  out.l = snap.b.transpose() * p + snap.d.transpose() * (p * snap.c + lambda);
  return out;
}

Eigen::MatrixXd synthesize_feedback(const Eigen::MatrixXd& p, const Eigen::MatrixXd& lambda,
                                    const CoefficientSnapshot& snap) {
  const KL kl = compute_kl(p, lambda, snap);
  return gain_from_kl(kl, min_eigenvalue(kl.k), snap);
}

Feedback feedback_from(const LQProblem& problem, const RiccatiSolution& solution) {
  const int m = problem.control_dim, n = problem.modes();
  if (solution.representation == Representation::Deterministic && problem.is_deterministic()) {
    std::vector<MatrixXd> gains;
    for (int k = 0; k <= solution.grid.steps; ++k) {
      const CoefficientSnapshot snap = evaluate_coefficients(problem, solution.grid.time(k), 0.0);
      gains.push_back(synthesize_feedback(solution.p(k), solution.lambda(k), snap));
    }
    return Feedback::deterministic(std::move(gains));
  }
  auto prob = std::make_shared<const LQProblem>(problem);
  auto sol = std::make_shared<const RiccatiSolution>(solution);
  return {[prob, sol](int k, double w) {
            const CoefficientSnapshot snap =
                evaluate_coefficients(*prob, sol->grid.time(k), w);
            return synthesize_feedback(sol->p(k, w), sol->lambda(k, w), snap);
          },
          true, m, n};
}

RiccatiSolution solve_riccati_ode(const LQProblem& problem, const TimeGrid& grid) {
  require_deterministic(problem, "solve_riccati_ode");
  RiccatiSolution sol = deterministic_solution(problem, grid, "riccati-ode");
  const int n = problem.modes();
  const MatrixXd zero = MatrixXd::Zero(n, n);
  const double h = grid.dt();
  const std::vector<double> e_full = problem.basis.decay_factors(h);
  const std::vector<double> e_half = problem.basis.decay_factors(0.5 * h);

  double min_eig = std::numeric_limits<double>::infinity();
  auto rhs = [&](double t, const MatrixXd& p) {
    const CoefficientSnapshot snap = evaluate_coefficients(problem, t, 0.0);
    return riccati_driver(p, zero, snap, &min_eig);
  };

  MatrixXd p = problem.g(problem.horizon, 0.0);
  sol.p_models.back() = RegressionModel::constant(p, true);
  for (int k = grid.steps - 1; k >= 0; --k) {
    p = lawson_rk4_step(p, grid.time(k + 1), h, e_full, e_half, rhs);
    sol.p_models[static_cast<std::size_t>(k)] = RegressionModel::constant(p, true);
  }
  // K along the grid itself, including t = 0.
  for (int k = 0; k <= grid.steps; ++k) {
    const CoefficientSnapshot snap = evaluate_coefficients(problem, grid.time(k), 0.0);
    min_eig = std::min(min_eig, min_eigenvalue(compute_kl(sol.p(k), zero, snap).k));
  }
  sol.diagnostics.min_eig_k = min_eig;
  return sol;
}

RiccatiSolution solve_lyapunov_ode(const LQProblem& problem, const Feedback& theta,
                                   const TimeGrid& grid) {
  require_deterministic(problem, "solve_lyapunov_ode");
  if (theta.depends_on_w) throw ContractViolation("solve_lyapunov_ode needs a deterministic Theta");
  RiccatiSolution sol = deterministic_solution(problem, grid, "lyapunov-ode");
  sol.source_feedback = std::make_shared<const Feedback>(theta);
  const int n = problem.modes();
  const MatrixXd zero = MatrixXd::Zero(n, n);
  const double h = grid.dt();
  const std::vector<double> e_full = problem.basis.decay_factors(h);
  const std::vector<double> e_half = problem.basis.decay_factors(0.5 * h);

  auto theta_at = [&](double t) {
    const double pos = std::clamp((t - grid.t0) / h, 0.0, static_cast<double>(grid.steps));
    const int k = std::min(static_cast<int>(std::floor(pos)), grid.steps - 1);
    const double frac = pos - k;
    return MatrixXd((1.0 - frac) * theta(k, 0.0) + frac * theta(k + 1, 0.0));
  };
  auto rhs = [&](double t, const MatrixXd& p) {
    const CoefficientSnapshot snap = evaluate_coefficients(problem, t, 0.0);
    return lyapunov_driver(p, zero, snap, theta_at(t));
  };

  MatrixXd p = problem.g(problem.horizon, 0.0);
  sol.p_models.back() = RegressionModel::constant(p, true);
  for (int k = grid.steps - 1; k >= 0; --k) {
    p = lawson_rk4_step(p, grid.time(k + 1), h, e_full, e_half, rhs);
    sol.p_models[static_cast<std::size_t>(k)] = RegressionModel::constant(p, true);
  }
  double min_eig = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= grid.steps; ++k) {
    const CoefficientSnapshot snap = evaluate_coefficients(problem, grid.time(k), 0.0);
    min_eig = std::min(min_eig, min_eigenvalue(compute_kl(sol.p(k), zero, snap).k));
  }
  sol.diagnostics.min_eig_k = min_eig;
  return sol;
}

RiccatiSolution solve_lyapunov_bsde(const LQProblem& problem, const Feedback& theta,
                                    const TimeGrid& grid, const BsdeOptions& options) {
  require_paths(options);
  const BrownianPaths cloud = generate_brownian(grid, options.paths, options.seed, options.workers);
  CloudDriver driver = [&theta](int k, const CoefficientSnapshot& s, const MatrixXd& p,
                                const MatrixXd& lambda, double*) {
    return lyapunov_driver(p, lambda, s, theta(k, s.w));
  };
  RiccatiSolution sol = backward_sweep(problem, grid, cloud, options, driver, "lyapunov-bsde");
  sol.source_feedback = std::make_shared<const Feedback>(theta);
  return sol;
}

RiccatiSolution solve_riccati_bsde_direct(const LQProblem& problem, const TimeGrid& grid,
                                          const BsdeOptions& options) {
  require_paths(options);
  const BrownianPaths cloud = generate_brownian(grid, options.paths, options.seed, options.workers);
  CloudDriver driver = [](int, const CoefficientSnapshot& s, const MatrixXd& p,
                          const MatrixXd& lambda, double* min_eig) {
    return riccati_driver(p, lambda, s, min_eig);
  };
  return backward_sweep(problem, grid, cloud, options, driver, "riccati-bsde-direct");
}

double default_fixed_point_tol(const LQProblem& problem) {
  return problem.is_deterministic() ? 1e-6 : 1e-3;
}

RiccatiSolution theta_fixed_point(const LQProblem& problem, const TimeGrid& grid,
                                  const BsdeOptions& options, const FixedPointOptions& fp) {
  require_paths(options);
  if (fp.max_iters < 1) throw ContractViolation("theta_fixed_point: max_iters must be >= 1");
  const double tol = fp.tol > 0.0 ? fp.tol : default_fixed_point_tol(problem);
  const BrownianPaths cloud = generate_brownian(grid, options.paths, options.seed, options.workers);

  Feedback theta = Feedback::zero(problem.control_dim, problem.modes());
  std::vector<double> history;
  std::optional<RiccatiSolution> best;
  double best_change = std::numeric_limits<double>::infinity();

  for (int iter = 1; iter <= fp.max_iters; ++iter) {
    CloudDriver driver = [&theta](int k, const CoefficientSnapshot& s, const MatrixXd& p,
                                  const MatrixXd& lambda, double*) {
      return lyapunov_driver(p, lambda, s, theta(k, s.w));
    };
    RiccatiSolution sol =
        backward_sweep(problem, grid, cloud, options, driver, "theta-fixed-point");
    const Feedback update = feedback_from(problem, sol);
    const ThetaSweep sweep = compare_on_cloud(problem, sol, theta, cloud, options.workers);
    history.push_back(sweep.max_change);

    sol.source_feedback = std::make_shared<const Feedback>(theta);
    sol.diagnostics.iterations = iter;
    sol.diagnostics.fixed_point_residual = sweep.stationarity;
    sol.diagnostics.min_eig_k = sweep.min_eig_k;
    const bool done = sweep.max_change < tol;
    if (sweep.max_change < best_change || done) {
      best_change = sweep.max_change;
      best = std::move(sol);
    }
    if (done) {
      best->diagnostics.converged = true;
      best->diagnostics.iteration_history = history;
      return std::move(*best);
    }
    theta = update;
  }
  best->diagnostics.converged = false;
  best->diagnostics.iteration_history = history;
  best->diagnostics.warnings.push_back("theta fixed point did not reach tol " +
                                       std::to_string(tol) + " in " +
                                       std::to_string(fp.max_iters) + " iterations");
  return std::move(*best);
}

}  // namespace slq
