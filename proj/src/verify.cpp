#include "slq/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "slq/errors.hpp"
#include "slq/parallel.hpp"

namespace slq {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kKFlagThreshold = 1e-4;

double finite_or_zero(double v) { return std::isfinite(v) ? v : 0.0; }

VectorXd state_weights(const SpectralBasis& basis) {
  const auto lam = basis.lambda_weights();
  VectorXd w(basis.modes());
  for (int j = 0; j < basis.modes(); ++j) w(j) = lam[j] / lam[0];
  return w;
}

VectorXd diffusion_weights(const SpectralBasis& basis) {
  const auto lam = basis.lambda_weights();
  const auto g = basis.graph_norms();
  VectorXd w(basis.modes());
  for (int j = 0; j < basis.modes(); ++j) w(j) = (lam[j] / g[j]) / (lam[0] / g[0]);
  return w;
}

int segment_of(int k, int steps, int segments) {
  return std::min(segments - 1, static_cast<int>(static_cast<long>(k) * segments / steps));
}

// Two correlated arrays with entries weights_j (mean_fraction + Z), the
// second set's Z being rho Z1 + sqrt(1 - rho^2) Z2.
std::pair<std::shared_ptr<PathArray>, std::shared_ptr<PathArray>> correlated_pair(
    long paths, int steps, int segments, const VectorXd& weights, double mean_fraction,
    double rho, std::uint64_t seed, Stream stream, std::uint32_t salt) {
  const int n = static_cast<int>(weights.size());
  auto a = std::make_shared<PathArray>(paths, steps, n);
  auto b = std::make_shared<PathArray>(paths, steps, n);
  const double rho_c = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  for (long p = 0; p < paths; ++p) {
    std::mt19937_64 gen = path_stream(seed, static_cast<std::uint64_t>(p), stream, salt);
    std::normal_distribution<double> normal;
    std::vector<double> za(static_cast<std::size_t>(segments) * n),
        zb(static_cast<std::size_t>(segments) * n);
    for (std::size_t i = 0; i < za.size(); ++i) {
      za[i] = normal(gen);
      zb[i] = rho * za[i] + rho_c * normal(gen);
    }
    for (int k = 0; k < steps; ++k) {
      const int s = segment_of(k, steps, segments);
      auto ra = a->at(p, k);
      auto rb = b->at(p, k);
      for (int j = 0; j < n; ++j) {
        ra[j] = weights(j) * (mean_fraction + za[static_cast<std::size_t>(s) * n + j]);
        rb[j] = weights(j) * (mean_fraction + zb[static_cast<std::size_t>(s) * n + j]);
      }
    }
  }
  return {a, b};
}

std::map<std::string, double> base_digest(const LQProblem& problem, const TimeGrid& grid,
                                          const CheckOptions& opt) {
  return {{"seed", static_cast<double>(opt.seed)},
          {"modes", static_cast<double>(problem.modes())},
          {"steps", static_cast<double>(grid.steps)},
          {"paths", static_cast<double>(opt.paths)},
          {"start_step", static_cast<double>(opt.start_step)}};
}

double dot(const VectorXd& a, const VectorXd& b) { return a.dot(b); }

// P, Lambda and coefficients at (t_k, w), cached per step when nothing reads w.
struct StepData {
  CoefficientSnapshot snap;
  MatrixXd p, lambda;
};

class StepSource {
 public:
  StepSource(const LQProblem& problem, const RiccatiSolution& sol)
      : problem_(problem), sol_(sol) {
    shared_ = problem.is_deterministic() && sol.representation == Representation::Deterministic;
    if (shared_)
      for (int k = 0; k <= sol.grid.steps; ++k) cache_.push_back(compute(k, 0.0));
  }
  bool shared() const { return shared_; }
  /// Cached entry, or `scratch` filled for (k, w).
  const StepData& at(int k, double w, StepData& scratch) const {
    if (shared_) return cache_[static_cast<std::size_t>(k)];
    scratch = compute(k, w);
    return scratch;
  }

 private:
  StepData compute(int k, double w) const {
    StepData d;
    d.snap = evaluate_coefficients(problem_, sol_.grid.time(k), w, k == sol_.grid.steps);
    d.p = sol_.p(k, w);
    d.lambda = sol_.lambda(k, w);
    return d;
  }
  const LQProblem& problem_;
  const RiccatiSolution& sol_;
  bool shared_ = false;
  std::vector<StepData> cache_;
};

class GainSource {
 public:
  GainSource(const Feedback& theta, int steps) : theta_(theta) {
    if (!theta.depends_on_w)
      for (int k = 0; k <= steps; ++k) cache_.push_back(theta(k, 0.0));
  }
  const MatrixXd& at(int k, double w, MatrixXd& scratch) const {
    if (!cache_.empty()) return cache_[static_cast<std::size_t>(k)];
    scratch = theta_(k, w);
    return scratch;
  }

 private:
  const Feedback& theta_;
  std::vector<MatrixXd> cache_;
};

void check_grid(const LQProblem& problem, const RiccatiSolution& sol, const CheckOptions& opt) {
  if (sol.modes() != problem.modes()) throw ContractViolation("solution and problem differ in N");
  if (opt.start_step < 0 || opt.start_step >= sol.grid.steps)
    throw ContractViolation("check start step off grid");
  if (opt.paths < 2) throw ContractViolation("checks need at least two paths");
}

// Exact integrals over one step of e^{(mu_i + mu_j) s}: the running cost of
// two states that decay under the semigroup inside the step. Left-endpoint
// sums would carry an O(|mu| dt) bias on the stiff modes.
struct StepWeights {
  MatrixXd state_state;
  StepWeights(const SpectralBasis& basis, double dt) {
    const auto mu = basis.eigenvalues();
    const int n = basis.modes();
    auto integral = [dt](double nu) {
      const double z = nu * dt;
      return std::abs(z) < 1e-12 ? dt : dt * std::expm1(z) / z;
    };
    state_state.resize(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) state_state(i, j) = integral(mu[i] + mu[j]);
  }
};

// Per-path cost with the state term integrated against the in-step decay
// (x_k' (Q o W) x_k), the same quadrature the transposition checks use. The
// plain left-endpoint sum overstates the cost of modes with |mu| dt >~ 1.
std::vector<double> semigroup_cost(const LQProblem& problem, const TrajectoryBundle& bundle,
                                   const PathArray* controls, int workers) {
  const TimeGrid& grid = bundle.grid;
  const double dt = grid.dt();
  const StepWeights weights(problem.basis, dt);
  const BrownianPaths& noise = *bundle.brownian;
  const bool shared = problem.is_deterministic();
  std::vector<MatrixXd> qw, rs;
  if (shared) {
    for (int k = 0; k < grid.steps; ++k) {
      qw.push_back(problem.q(grid.time(k), 0.0).cwiseProduct(weights.state_state));
      rs.push_back(problem.r(grid.time(k), 0.0));
    }
  }
  std::vector<double> out(static_cast<std::size_t>(bundle.path_count));
  parallel_chunks(bundle.path_count, workers, [&](long begin, long end) {
    for (long p = begin; p < end; ++p) {
      double running = 0.0;
      for (int k = bundle.start_step; k < grid.steps; ++k) {
        const VectorXd x = bundle.states.vec(p, k);
        const double w = noise.value(p, k);
        const MatrixXd q = shared ? qw[static_cast<std::size_t>(k)]
                                  : MatrixXd(problem.q(grid.time(k), w).cwiseProduct(
                                        weights.state_state));
        running += x.dot(q * x);
        if (controls) {
          const VectorXd u = controls->vec(p, k);
          const MatrixXd r = shared ? rs[static_cast<std::size_t>(k)] : problem.r(grid.time(k), w);
          running += dt * u.dot(r * u);
        }
      }
      const VectorXd xt = bundle.states.vec(p, grid.steps);
      running += xt.dot(problem.g(problem.horizon, noise.value(p, grid.steps)) * xt);
      out[static_cast<std::size_t>(p)] = 0.5 * running;
    }
  });
  return out;
}

// Shared engine of both transposition identities. Without `theta` it is the
// Riccati form with the -K^{-1}L term; with `theta` it is the closed-loop
// Lyapunov form with C replaced by C + D Theta.
IdentityReport transposition_core(const LQProblem& problem, const RiccatiSolution& sol,
                                  const TestInputSet& in, const CheckOptions& opt,
                                  const Feedback* theta, std::string name) {
  check_grid(problem, sol, opt);
  const TimeGrid& grid = sol.grid;
  const int n = problem.modes();
  const int s0 = opt.start_step;
  const double dt = grid.dt();

  SimulationOptions so;
  so.start_step = s0;
  so.workers = opt.workers;
  so.record_controls = false;
  const ControlPolicy policy = theta ? ControlPolicy::closed_loop(*theta) : ControlPolicy::zero();
  const TrajectoryBundle x1 = simulate(problem, grid, in.xi1, policy, in.u1.get(), in.v1.get(),
                                       opt.paths, opt.seed, so);
  so.noise = x1.brownian;
  const TrajectoryBundle x2 = simulate(problem, grid, in.xi2, policy, in.u2.get(), in.v2.get(),
                                       opt.paths, opt.seed, so);
  const BrownianPaths& noise = *x1.brownian;

  const StepWeights weights(problem.basis, dt);
  const StepSource steps(problem, sol);
  std::optional<GainSource> gains;
  if (theta) gains.emplace(*theta, grid.steps);
  auto gains_at = [&gains](int k, double w, MatrixXd& scratch) -> const MatrixXd& {
    return gains->at(k, w, scratch);
  };
  const std::vector<double> decay = problem.basis.decay_factors(dt);
  auto conjugated = [&decay](MatrixXd m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) *= decay[i] * decay[j];
    return m;
  };

  // Per-step matrices of both sides. The running cost carries the exact
  // in-step weights; the forcing terms use P at the step end pulled back
  // through the semigroup, the node at which the exponential Euler step
  // injects them.
  struct Terms {
    MatrixXd cost, c, p_end, lam_end;
    double min_eig_k = std::numeric_limits<double>::infinity();
  };
  auto terms_at = [&](int k, double w, double w_next, long path) {
    Terms t;
    StepData scratch, end_scratch;
    MatrixXd gain_scratch;
    const StepData& d = steps.at(k, w, scratch);
    t.c = d.snap.c;
    MatrixXd cost;
    if (theta) {
      const MatrixXd& th = gains_at(k, w, gain_scratch);
      t.c += d.snap.d * th;
      cost = d.snap.q + th.transpose() * d.snap.r * th;
    } else {
      const KL kl = compute_kl(d.p, d.lambda, d.snap);
      t.min_eig_k = min_eigenvalue(kl.k);
      if (!(t.min_eig_k >= kMinKEigenvalue)) {
        std::ostringstream os;
        os << "K not positive definite at step " << k << " on path " << path;
        throw SingularKError(os.str(), grid.time(k), w, t.min_eig_k);
      }
      cost = d.snap.q - kl.l.transpose() * kl.k.llt().solve(kl.l);
    }
    t.cost = cost.cwiseProduct(weights.state_state);
    t.p_end = conjugated(steps.at(k + 1, w_next, end_scratch).p);
    t.lam_end = conjugated(d.lambda);
    return t;
  };
  const bool shared = steps.shared() && (!theta || !theta->depends_on_w);
  std::vector<Terms> cache;
  if (shared)
    for (int k = s0; k < grid.steps; ++k) cache.push_back(terms_at(k, 0.0, 0.0, 0));

  std::vector<double> lhs(static_cast<std::size_t>(opt.paths)), rhs(lhs.size()),
      min_k(lhs.size(), std::numeric_limits<double>::infinity());
  parallel_chunks(opt.paths, opt.workers, [&](long begin, long end) {
    VectorXd zero = VectorXd::Zero(n);
    for (long p = begin; p < end; ++p) {
      StepData scratch;
      double r = dot(steps.at(s0, noise.value(p, s0), scratch).p * in.xi1.vec(p, 0),
                     VectorXd(in.xi2.vec(p, 0)));
      double l = 0.0;
      double kmin = std::numeric_limits<double>::infinity();
      Terms local;
      for (int k = s0; k < grid.steps; ++k) {
        if (!shared) local = terms_at(k, noise.value(p, k), noise.value(p, k + 1), p);
        const Terms& t = shared ? cache[static_cast<std::size_t>(k - s0)] : local;
        kmin = std::min(kmin, t.min_eig_k);
        const auto a = x1.states.vec(p, k);
        const auto b = x2.states.vec(p, k);
        auto row = [&](const std::shared_ptr<const PathArray>& f) {
          return f ? Eigen::Map<const VectorXd>(f->at(p, k).data(), n)
                   : Eigen::Map<const VectorXd>(zero.data(), n);
        };
        const auto u1 = row(in.u1), u2 = row(in.u2), v1 = row(in.v1), v2 = row(in.v2);
        l += a.dot(t.cost * b);
        r += dt * (u1.dot(t.p_end * b) + a.dot(t.p_end * u2) + (t.c * a).dot(t.p_end * v2) +
                   v1.dot(t.p_end * (t.c * b + v2)) + v1.dot(t.lam_end.transpose() * b) +
                   a.dot(t.lam_end.transpose() * v2));
      }
      const MatrixXd g = problem.g(grid.horizon, noise.value(p, grid.steps));
      l += x2.states.vec(p, grid.steps).dot(g * x1.states.vec(p, grid.steps));
      lhs[static_cast<std::size_t>(p)] = l;
      rhs[static_cast<std::size_t>(p)] = r;
      min_k[static_cast<std::size_t>(p)] = kmin;
    }
  });

  IdentityReport rep;
  rep.name = std::move(name);
  rep.tolerance = opt.tolerance;
  rep.digest = base_digest(problem, grid, opt);
  rep.digest["input_seed"] = static_cast<double>(in.seed);
  const SampleStats ls = sample_stats(lhs), rs = sample_stats(rhs);
  rep.lhs = ls.mean;
  rep.lhs_se = ls.standard_error;
  rep.rhs = rs.mean;
  rep.rhs_se = rs.standard_error;
  std::vector<double> diff(lhs.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = lhs[i] - rhs[i];
  rep.details["paired_se"] = sample_stats(diff).standard_error;
  if (!theta) {
    const double kmin = *std::min_element(min_k.begin(), min_k.end());
    rep.details["min_eig_k"] = kmin;
    if (kmin < kKFlagThreshold) rep.notes.push_back("K nearly singular; K^{-1}L term unreliable");
  }
  rep.notes.push_back("test inputs are Gaussian with finite fourth moments; L4 integrability is assumed, not tested");
  rep.finalize();
  return rep;
}

}  // namespace


void IdentityReport::finalize() {
  residual = std::abs(lhs - rhs) / (std::abs(lhs) + std::abs(rhs) + 1.0);
  pass = residual < tolerance || std::abs(lhs - rhs) < 3.0 * (lhs_se + rhs_se);
}

nlohmann::ordered_json IdentityReport::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["lhs"] = lhs;
  j["lhs_se"] = lhs_se;
  j["rhs"] = rhs;
  j["rhs_se"] = rhs_se;
  j["residual"] = residual;
  j["tolerance"] = tolerance;
  j["pass"] = pass;
  j["digest"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : digest) j["digest"][k] = v;
  j["details"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : details) j["details"][k] = finite_or_zero(v);
  j["notes"] = notes;
  return j;
}

IdentityReport IdentityReport::from_json(const nlohmann::ordered_json& j) {
  IdentityReport r;
  r.name = j.at("name").get<std::string>();
  r.lhs = j.at("lhs").get<double>();
  r.lhs_se = j.at("lhs_se").get<double>();
  r.rhs = j.at("rhs").get<double>();
  r.rhs_se = j.at("rhs_se").get<double>();
  r.residual = j.at("residual").get<double>();
  r.tolerance = j.at("tolerance").get<double>();
  r.pass = j.at("pass").get<bool>();
  for (const auto& [k, v] : j.at("digest").items()) r.digest[k] = v.get<double>();
  for (const auto& [k, v] : j.at("details").items()) r.details[k] = v.get<double>();
  r.notes = j.at("notes").get<std::vector<std::string>>();
  return r;
}

TestInputSet TestInputSet::swapped() const {
  TestInputSet s = *this;
  std::swap(s.xi1, s.xi2);
  std::swap(s.u1, s.u2);
  std::swap(s.v1, s.v2);
  return s;
}

TestInputSet make_test_inputs(const SpectralBasis& basis, const TimeGrid& grid, long paths,
                              std::uint64_t seed, const TestInputParams& params) {
  if (paths < 1 || params.segments < 1) throw ContractViolation("make_test_inputs: bad sizes");
  TestInputSet in;
  in.params = params;
  in.seed = seed;
  const VectorXd ws = state_weights(basis);
  {
    auto [a, b] = correlated_pair(paths, 1, 1, params.xi_scale * ws, params.mean_fraction,
                                  params.correlation, seed, Stream::InitialState, 0);
    in.xi1 = std::move(*a);
    in.xi2 = std::move(*b);
  }
  if (params.with_u) {
    auto [a, b] = correlated_pair(paths, grid.steps, params.segments, params.u_scale * ws,
                                  params.mean_fraction, params.correlation, seed,
                                  Stream::DriftForcing, 0);
    in.u1 = a;
    in.u2 = b;
  }
  if (params.with_v) {
    auto [a, b] = correlated_pair(paths, grid.steps, params.segments,
                                  params.v_scale * diffusion_weights(basis), params.mean_fraction,
                                  params.correlation, seed, Stream::DiffusionForcing, 0);
    in.v1 = a;
    in.v2 = b;
  }
  return in;
}

std::shared_ptr<PathArray> random_sequence(long paths, const TimeGrid& grid,
                                           const VectorXd& weights, double mean_fraction,
                                           int segments, std::uint64_t seed, Stream stream,
                                           std::uint32_t salt) {
  return correlated_pair(paths, grid.steps, segments, weights, mean_fraction, 0.0, seed, stream,
                         salt)
      .first;
}

IdentityReport check_transposition_identity(const LQProblem& problem,
                                            const RiccatiSolution& solution,
                                            const TestInputSet& inputs, const CheckOptions& opt) {
  return transposition_core(problem, solution, inputs, opt, nullptr, "transposition");
}

IdentityReport check_hlambda_transposition(const LQProblem& problem, const Feedback& theta,
                                           const RiccatiSolution& solution,
                                           const TestInputSet& inputs, const CheckOptions& opt) {
  return transposition_core(problem, solution, inputs, opt, &theta, "hlambda_transposition");
}

IdentityReport check_value_identity(const LQProblem& problem, const Feedback& theta,
                                    const RiccatiSolution& solution, const VectorXd& eta,
                                    const CheckOptions& opt) {
  check_grid(problem, solution, opt);
  SimulationOptions so;
  so.start_step = opt.start_step;
  so.workers = opt.workers;
  const TrajectoryBundle bundle = simulate(problem, solution.grid, eta,
                                           ControlPolicy::closed_loop(theta), opt.paths, opt.seed,
                                           so);
  const std::vector<double> cost = semigroup_cost(
      problem, bundle, bundle.controls ? &*bundle.controls : nullptr, opt.workers);
  std::vector<double> rhs(static_cast<std::size_t>(opt.paths));
  for (long p = 0; p < opt.paths; ++p) {
    const double w = bundle.brownian->value(p, opt.start_step);
    rhs[static_cast<std::size_t>(p)] = 0.5 * eta.dot(solution.p(opt.start_step, w) * eta);
  }
  IdentityReport rep;
  rep.name = "value";
  rep.tolerance = opt.tolerance;
  rep.digest = base_digest(problem, solution.grid, opt);
  rep.digest["eta_norm"] = eta.norm();
  const SampleStats ls = sample_stats(cost);
  rep.lhs = ls.mean;
  rep.lhs_se = ls.standard_error;
  const SampleStats rs = sample_stats(rhs);
  rep.rhs = rs.mean;
  rep.rhs_se = rs.standard_error;
  rep.finalize();
  return rep;
}

IdentityReport check_optimality(const LQProblem& problem, const Feedback& theta,
                                const VectorXd& eta, int perturbations, const CheckOptions& opt,
                                const OptimalityOptions& oo, std::vector<OptimalityDraw>* draws) {
  if (perturbations < 1) throw ContractViolation("check_optimality: perturbations must be >= 1");
  if (oo.deltas.empty()) throw ContractViolation("check_optimality: no step sizes");
  const TimeGrid grid = TimeGrid::make(problem.horizon, problem.time_steps);
  const int m = problem.control_dim;
  SimulationOptions so;
  so.start_step = opt.start_step;
  so.workers = opt.workers;
  const TrajectoryBundle base =
      simulate(problem, grid, eta, ControlPolicy::closed_loop(theta), opt.paths, opt.seed, so);
  const CostReport j_opt = evaluate_cost(problem, base);

  IdentityReport rep;
  rep.name = "optimality";
  rep.tolerance = opt.tolerance;
  rep.digest = base_digest(problem, grid, opt);
  rep.digest["perturbations"] = perturbations;
  rep.digest["common_random_numbers"] = oo.common_random_numbers ? 1.0 : 0.0;
  rep.rhs = j_opt.mean;
  rep.rhs_se = j_opt.standard_error;

  bool all_ok = true;
  double worst = std::numeric_limits<double>::infinity();
  double worst_se_ratio = std::numeric_limits<double>::infinity();
  for (int d = 0; d < perturbations; ++d) {
    const double delta = oo.deltas[static_cast<std::size_t>(d) % oo.deltas.size()];
    std::shared_ptr<const PathArray> phi = oo.fixed_direction;
    if (!phi) {
      auto a = std::make_shared<PathArray>(opt.paths, grid.steps, m);
      for (long p = 0; p < opt.paths; ++p) {
        std::mt19937_64 gen = path_stream(opt.seed, static_cast<std::uint64_t>(p),
                                          Stream::Perturbation, static_cast<std::uint32_t>(d));
        std::uniform_real_distribution<double> unif(-1.0, 1.0);
        for (int k = 0; k < grid.steps; ++k)
          for (double& v : a->at(p, k)) v = unif(gen);
      }
      phi = a;
    }
    SimulationOptions po = so;
    std::uint64_t seed = opt.seed;
    if (oo.common_random_numbers) {
      po.noise = base.brownian;
    } else {
      seed = opt.seed + 1000003ULL * static_cast<std::uint64_t>(d + 1);
    }
    const TrajectoryBundle pert = simulate(
        problem, grid, PathArray::shared_vector(eta), ControlPolicy::perturbed(theta, phi, delta),
        nullptr, nullptr, opt.paths, seed, po);
    const CostReport j = evaluate_cost(problem, pert);
    std::vector<double> diff(static_cast<std::size_t>(opt.paths));
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = j.per_path[i] - j_opt.per_path[i];
    const SampleStats ds = sample_stats(diff);
    const OptimalityDraw draw{delta, ds.mean, ds.standard_error};
    if (draws) draws->push_back(draw);
    all_ok = all_ok && draw.margin() >= 0.0;
    if (draw.margin() < worst) {
      worst = draw.margin();
      rep.lhs = j.mean;
      rep.lhs_se = j.standard_error;
    }
    if (ds.standard_error > 0.0)
      worst_se_ratio = std::min(worst_se_ratio, ds.mean / ds.standard_error);
    rep.details["draw_" + std::to_string(d) + "_excess"] = ds.mean;
    rep.details["draw_" + std::to_string(d) + "_se"] = ds.standard_error;
  }
  rep.details["min_margin"] = worst;
  rep.details["min_excess_over_se"] = worst_se_ratio;
  rep.residual = std::abs(rep.lhs - rep.rhs) / (std::abs(rep.lhs) + std::abs(rep.rhs) + 1.0);
  rep.pass = all_ok;
  return rep;
}

IdentityReport check_cost_decomposition(const LQProblem& problem, const Feedback& theta,
                                        const RiccatiSolution& solution,
                                        std::shared_ptr<const PathArray> control,
                                        const PathArray& xi, const CheckOptions& opt) {
  check_grid(problem, solution, opt);
  const TimeGrid& grid = solution.grid;
  const int s0 = opt.start_step;
  const double dt = grid.dt();
  SimulationOptions so;
  so.start_step = s0;
  so.workers = opt.workers;
  const ControlPolicy policy = control ? ControlPolicy::open_loop(control) : ControlPolicy::zero();
  const TrajectoryBundle y =
      simulate(problem, grid, xi, policy, nullptr, nullptr, opt.paths, opt.seed, so);
  const std::vector<double> cost =
      semigroup_cost(problem, y, control ? control.get() : nullptr, opt.workers);

  const StepSource steps(problem, solution);
  const GainSource gains(theta, grid.steps);
  std::vector<double> lhs(static_cast<std::size_t>(opt.paths)), rhs(lhs.size());
  const BrownianPaths& noise = *y.brownian;
  parallel_chunks(opt.paths, opt.workers, [&](long begin, long end) {
    for (long p = begin; p < end; ++p) {
      StepData scratch;
      MatrixXd gain_scratch;
      const VectorXd x0 = xi.vec(p, 0);
      double r = x0.dot(steps.at(s0, noise.value(p, s0), scratch).p * x0);
      for (int k = s0; k < grid.steps; ++k) {
        const double w = noise.value(p, k);
        const StepData& d = steps.at(k, w, scratch);
        const VectorXd u = control ? VectorXd(control->vec(p, k))
                                   : VectorXd::Zero(problem.control_dim);
        const VectorXd phi = u - gains.at(k, w, gain_scratch) * y.states.vec(p, k);
        const KL kl = compute_kl(d.p, d.lambda, d.snap);
        r += dt * phi.dot(kl.k * phi);
      }
      lhs[static_cast<std::size_t>(p)] = 2.0 * cost[static_cast<std::size_t>(p)];
      rhs[static_cast<std::size_t>(p)] = r;
    }
  });

  IdentityReport rep;
  rep.name = "cost_decomposition";
  rep.tolerance = opt.tolerance;
  rep.digest = base_digest(problem, grid, opt);
  const SampleStats ls = sample_stats(lhs), rs = sample_stats(rhs);
  rep.lhs = ls.mean;
  rep.lhs_se = ls.standard_error;
  rep.rhs = rs.mean;
  rep.rhs_se = rs.standard_error;
  std::vector<double> diff(lhs.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = lhs[i] - rhs[i];
  rep.details["paired_se"] = sample_stats(diff).standard_error;
  rep.finalize();
  return rep;
}

IdentityReport check_stationarity_and_K(const LQProblem& problem,
                                        const RiccatiSolution& solution, int samples,
                                        std::uint64_t seed, double tolerance,
                                        const Feedback* theta) {
  if (samples < 1) throw ContractViolation("check_stationarity_and_K: samples must be >= 1");
  const TimeGrid& grid = solution.grid;
  IdentityReport rep;
  rep.name = "stationarity";
  rep.tolerance = tolerance;
  rep.digest = {{"seed", static_cast<double>(seed)},
                {"modes", static_cast<double>(problem.modes())},
                {"steps", static_cast<double>(grid.steps)},
                {"samples", static_cast<double>(samples)}};

  double worst = 0.0;
  double kmin = std::numeric_limits<double>::infinity();
  // Both grid ends at w = 0, then random (t_k, w ~ N(0, t_k)).
  for (int s = -2; s < samples; ++s) {
    int k = 0;
    double w = 0.0;
    if (s == -1) {
      k = grid.steps;
    } else if (s >= 0) {
      std::mt19937_64 gen = path_stream(seed, static_cast<std::uint64_t>(s), Stream::Sampling);
      k = std::uniform_int_distribution<int>(0, grid.steps)(gen);
      w = std::sqrt(grid.time(k)) * std::normal_distribution<double>()(gen);
    }
    const CoefficientSnapshot snap = evaluate_coefficients(problem, grid.time(k), w);
    const MatrixXd p = solution.p(k, w);
    const MatrixXd lam = solution.lambda(k, w);
    const KL kl = compute_kl(p, lam, snap);
    const double me = min_eigenvalue(kl.k);
    kmin = std::min(kmin, me);
    MatrixXd th;
    if (theta) {
      th = (*theta)(k, w);
    } else if (me >= kMinKEigenvalue) {
      th = synthesize_feedback(p, lam, snap);
    } else {
      rep.notes.push_back("K singular at step " + std::to_string(k));
      worst = std::numeric_limits<double>::infinity();
      continue;
    }
    worst = std::max(worst, (kl.k * th + kl.l).norm() / (1.0 + kl.l.norm()));
  }
  rep.lhs = worst;
  rep.rhs = 0.0;
  rep.residual = worst;
  rep.details["min_eig_k"] = kmin;
  rep.details["stationarity_residual"] = worst;
  if (kmin < kKFlagThreshold) rep.notes.push_back("min eigenvalue of K below 1e-4");
  rep.pass = worst < tolerance && kmin >= -1e-8;
  return rep;
}

nlohmann::ordered_json reports_to_json(const std::vector<IdentityReport>& reports) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) arr.push_back(r.to_json());
  return arr;
}

std::string reports_table(const std::vector<IdentityReport>& reports) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %14s %12s %14s %12s %10s %6s\n", "identity", "lhs",
                "lhs_se", "rhs", "rhs_se", "residual", "pass");
  out += line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-24s %14.6e %12.4e %14.6e %12.4e %10.3e %6s\n",
                  r.name.c_str(), r.lhs, r.lhs_se, r.rhs, r.rhs_se, r.residual,
                  r.pass ? "yes" : "NO");
    out += line;
  }
  return out;
}

}  // namespace slq
