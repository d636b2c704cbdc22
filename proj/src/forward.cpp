#include "slq/forward.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "slq/errors.hpp"
#include "slq/kernels.hpp"
#include "slq/parallel.hpp"
#include "slq/rng.hpp"

namespace slq {

namespace {

std::span<double> span_of(Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}
std::span<const double> cspan_of(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

// y += M x through the dispatching kernel.
void gemv(Eigen::VectorXd& y, const Eigen::MatrixXd& m, const Eigen::VectorXd& x) {
  kernels::gemv_acc(span_of(y), m.data(), cspan_of(x));
}

double quadratic(const Eigen::MatrixXd& m, const Eigen::VectorXd& x, Eigen::VectorXd& scratch) {
  scratch.setZero();
  gemv(scratch, m, x);
  return kernels::dot(cspan_of(x), cspan_of(scratch));
}

void check_dims(const PathArray& a, long paths, int steps, int dim, const char* what) {
  if (a.dim() != dim || a.steps() < steps || (!a.shared() && a.paths() < paths)) {
    throw ContractViolation(std::string("simulate: ") + what + " has incompatible shape");
  }
}

}  // namespace

TimeGrid TimeGrid::make(double horizon, int steps, double t0) {
  if (steps < 1) throw ContractViolation("time grid needs steps >= 1");
  if (!(horizon > t0)) throw ContractViolation("time grid needs horizon > t0");
  return {t0, horizon, steps};
}

PathArray::PathArray(long paths, int steps, int dim, bool shared)
    : paths_(paths), steps_(steps), dim_(dim), shared_(shared),
      data_(static_cast<std::size_t>(shared ? 1 : paths) * steps * dim, 0.0) {}

PathArray PathArray::shared_vector(const Eigen::VectorXd& v) {
  PathArray a(1, 1, static_cast<int>(v.size()), true);
  std::copy(v.data(), v.data() + v.size(), a.at(0, 0).begin());
  return a;
}

BrownianPaths generate_brownian(const TimeGrid& grid, long paths, std::uint64_t seed,
                                int workers) {
  BrownianPaths b;
  b.paths = paths;
  b.steps = grid.steps;
  b.w.assign(static_cast<std::size_t>(paths) * (grid.steps + 1), 0.0);
  b.dw.assign(static_cast<std::size_t>(paths) * grid.steps, 0.0);
  const double sqrt_dt = std::sqrt(grid.dt());
  parallel_chunks(paths, workers, [&](long begin, long end) {
    for (long p = begin; p < end; ++p) {
      auto rng = path_stream(seed, static_cast<std::uint64_t>(p), Stream::Brownian);
      std::normal_distribution<double> normal(0.0, 1.0);
      double* w = b.w.data() + static_cast<std::size_t>(p) * (grid.steps + 1);
      double* dw = b.dw.data() + static_cast<std::size_t>(p) * grid.steps;
      w[0] = 0.0;
      for (int k = 0; k < grid.steps; ++k) {
        dw[k] = sqrt_dt * normal(rng);
        w[k + 1] = w[k] + dw[k];
      }
    }
  });
  return b;
}

Feedback Feedback::zero(int control_dim, int modes) {
  return {[control_dim, modes](int, double) { return Eigen::MatrixXd::Zero(control_dim, modes); },
          false, control_dim, modes};
}

Feedback Feedback::deterministic(std::vector<Eigen::MatrixXd> per_step) {
  if (per_step.empty()) throw ContractViolation("deterministic feedback needs at least one step");
  const int rows = static_cast<int>(per_step.front().rows());
  const int cols = static_cast<int>(per_step.front().cols());
  auto shared = std::make_shared<const std::vector<Eigen::MatrixXd>>(std::move(per_step));
  return {[shared](int k, double) {
            const auto idx = static_cast<std::size_t>(
                std::clamp<int>(k, 0, static_cast<int>(shared->size()) - 1));
            return (*shared)[idx];
          },
          false, rows, cols};
}

TrajectoryBundle simulate(const LQProblem& problem, const TimeGrid& grid, const PathArray& init,
                          const ControlPolicy& control, const PathArray* forcing_u,
                          const PathArray* forcing_v, long paths, std::uint64_t seed,
                          const SimulationOptions& options) {
  const int n = problem.modes();
  const int m = problem.control_dim;
  const int start = options.start_step;
  if (paths < 1) throw ContractViolation("simulate: paths must be >= 1");
  if (start < 0 || start > grid.steps) throw ContractViolation("simulate: start step off grid");
  check_dims(init, paths, 1, n, "initial state");
  if (forcing_u) check_dims(*forcing_u, paths, grid.steps, n, "drift forcing");
  if (forcing_v) check_dims(*forcing_v, paths, grid.steps, n, "diffusion forcing");
  if (control.offset) check_dims(*control.offset, paths, grid.steps, m, "control sequence");
  if (control.feedback && (control.feedback->rows != m || control.feedback->cols != n)) {
    throw ContractViolation("simulate: feedback has incompatible shape");
  }

  TrajectoryBundle bundle;
  bundle.grid = grid;
  bundle.start_step = start;
  bundle.modes = n;
  bundle.control_dim = m;
  bundle.path_count = paths;
  bundle.seed = seed;
  bundle.states = PathArray(paths, grid.steps + 1, n);
  if (options.noise) {
    if (options.noise->paths < paths || options.noise->steps != grid.steps) {
      throw ContractViolation("simulate: supplied noise does not cover the run");
    }
    bundle.brownian = options.noise;
  } else {
    bundle.brownian =
        std::make_shared<const BrownianPaths>(generate_brownian(grid, paths, seed, options.workers));
  }
  const BrownianPaths& noise = *bundle.brownian;
  const bool record = options.record_controls && (control.feedback || control.offset);
  if (record) bundle.controls = PathArray(paths, grid.steps, m);

  const double dt = grid.dt();
  const std::vector<double> decay = problem.basis.decay_factors(dt);

  // Coefficients and gains that do not read W are shared by all paths.
  const bool shared_coeffs = problem.is_deterministic();
  std::vector<CoefficientSnapshot> snaps;
  if (shared_coeffs)
    for (int k = start; k < grid.steps; ++k)
      snaps.push_back(evaluate_coefficients(problem, grid.time(k), 0.0));
  const bool shared_gain = control.feedback && !control.feedback->depends_on_w;
  std::vector<Eigen::MatrixXd> gains;
  if (shared_gain)
    for (int k = start; k < grid.steps; ++k) gains.push_back((*control.feedback)(k, 0.0));

  parallel_chunks(paths, options.workers, [&](long begin, long end) {
    Eigen::VectorXd x(n), u(m), drift(n), diffusion(n);
    CoefficientSnapshot local;
    Eigen::MatrixXd local_gain;
    for (long p = begin; p < end; ++p) {
      x = init.vec(p, 0);
      std::copy(x.data(), x.data() + n, bundle.states.at(p, start).begin());
      for (int k = start; k < grid.steps; ++k) {
        const double w = noise.value(p, k);
        const double dw = noise.increment(p, k);
        const CoefficientSnapshot* s = nullptr;
        if (shared_coeffs) {
          s = &snaps[static_cast<std::size_t>(k - start)];
        } else {
          local = evaluate_coefficients(problem, grid.time(k), w);
          s = &local;
        }

        u.setZero();
        if (control.feedback) {
          if (shared_gain) {
            gemv(u, gains[static_cast<std::size_t>(k - start)], x);
          } else {
            local_gain = (*control.feedback)(k, w);
            gemv(u, local_gain, x);
          }
        }
        if (control.offset)
          kernels::axpy(control.offset_scale, control.offset->at(p, k), span_of(u));
        if (record) std::copy(u.data(), u.data() + m, bundle.controls->at(p, k).begin());

        drift.setZero();
        gemv(drift, s->a1, x);
        gemv(drift, s->b, u);
        if (forcing_u) kernels::axpy(1.0, forcing_u->at(p, k), span_of(drift));
        diffusion.setZero();
        gemv(diffusion, s->c, x);
        gemv(diffusion, s->d, u);
        if (forcing_v) kernels::axpy(1.0, forcing_v->at(p, k), span_of(diffusion));

        kernels::axpy(dt, cspan_of(drift), span_of(x));
        kernels::axpy(dw, cspan_of(diffusion), span_of(x));
        kernels::scale(span_of(x), decay);

        if (!x.allFinite()) {
          std::ostringstream os;
          os << "non-finite state on path " << p << " at step " << k + 1;
          throw SimulationError(os.str(), p, k + 1);
        }
        std::copy(x.data(), x.data() + n, bundle.states.at(p, k + 1).begin());
      }
    }
  });
  return bundle;
}

TrajectoryBundle simulate(const LQProblem& problem, const TimeGrid& grid,
                          const Eigen::VectorXd& init, const ControlPolicy& control, long paths,
                          std::uint64_t seed, const SimulationOptions& options) {
  return simulate(problem, grid, PathArray::shared_vector(init), control, nullptr, nullptr, paths,
                  seed, options);
}

TrajectoryBundle flow_map(const LQProblem& problem, const Feedback& theta, const TimeGrid& grid,
                          int start_step, const PathArray& init, long paths, std::uint64_t seed,
                          int workers) {
  SimulationOptions opts;
  opts.start_step = start_step;
  opts.workers = workers;
  opts.record_controls = false;
  return simulate(problem, grid, init, ControlPolicy::closed_loop(theta), nullptr, nullptr, paths,
                  seed, opts);
}

CostReport evaluate_cost(const LQProblem& problem, const TrajectoryBundle& bundle,
                         const PathArray& controls, bool retain_per_path) {
  const TimeGrid& grid = bundle.grid;
  const int n = bundle.modes;
  const int m = problem.control_dim;
  if (n != problem.modes() || controls.dim() != m || controls.steps() < grid.steps ||
      (!controls.shared() && controls.paths() != bundle.path_count)) {
    throw ContractViolation("evaluate_cost: controls misaligned with the trajectory bundle");
  }
  const double dt = grid.dt();
  const int start = bundle.start_step;
  const BrownianPaths& noise = *bundle.brownian;

  const bool shared_coeffs = problem.is_deterministic();
  std::vector<Eigen::MatrixXd> qs, rs;
  Eigen::MatrixXd g_shared;
  if (shared_coeffs) {
    for (int k = start; k < grid.steps; ++k) {
      qs.push_back(problem.q(grid.time(k), 0.0));
      rs.push_back(problem.r(grid.time(k), 0.0));
    }
    g_shared = problem.g(problem.horizon, 0.0);
  }

  std::vector<double> costs(static_cast<std::size_t>(bundle.path_count));
  parallel_chunks(bundle.path_count, 0, [&](long begin, long end) {
    Eigen::VectorXd x(n), u(m), sx(n), su(m);
    for (long p = begin; p < end; ++p) {
      double running = 0.0;
      for (int k = start; k < grid.steps; ++k) {
        x = bundle.states.vec(p, k);
        u = controls.vec(p, k);
        if (shared_coeffs) {
          const auto idx = static_cast<std::size_t>(k - start);
          running += quadratic(qs[idx], x, sx) + quadratic(rs[idx], u, su);
        } else {
          const double w = noise.value(p, k);
          running += quadratic(problem.q(grid.time(k), w), x, sx) +
                     quadratic(problem.r(grid.time(k), w), u, su);
        }
      }
      x = bundle.states.vec(p, grid.steps);
      const double terminal = shared_coeffs
                                  ? quadratic(g_shared, x, sx)
                                  : quadratic(problem.g(problem.horizon,
                                                        noise.value(p, grid.steps)),
                                              x, sx);
      costs[static_cast<std::size_t>(p)] = 0.5 * (running * dt + terminal);
    }
  });

  const SampleStats stats = sample_stats(costs);
  CostReport report;
  report.mean = stats.mean;
  report.standard_error = stats.standard_error;
  report.paths = bundle.path_count;
  report.per_path_retained = retain_per_path;
  if (retain_per_path) report.per_path = std::move(costs);
  return report;
}

CostReport evaluate_cost(const LQProblem& problem, const TrajectoryBundle& bundle,
                         bool retain_per_path) {
  if (bundle.controls) return evaluate_cost(problem, bundle, *bundle.controls, retain_per_path);
  PathArray zero(1, bundle.grid.steps, problem.control_dim, true);
  return evaluate_cost(problem, bundle, zero, retain_per_path);
}

SampleStats sample_stats(std::span<const double> values) {
  SampleStats s;
  const auto n = static_cast<double>(values.size());
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / n;
  if (values.size() < 2) return s;
  // Identical samples: the rounded mean can differ from them in the last bit.
  if (std::adjacent_find(values.begin(), values.end(), std::not_equal_to<>()) == values.end()) {
    s.mean = values.front();
    return s;
  }
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.standard_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return s;
}

void write_trajectories_csv(const TrajectoryBundle& bundle, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "path,step,t";
  for (int j = 1; j <= bundle.modes; ++j) out << ",mode_" << j;
  out << "\n" << std::setprecision(17);
  for (long p = 0; p < bundle.path_count; ++p) {
    for (int k = bundle.start_step; k <= bundle.grid.steps; ++k) {
      out << p << "," << k << "," << bundle.grid.time(k);
      for (double v : bundle.states.at(p, k)) out << "," << v;
      out << "\n";
    }
  }
}

}  // namespace slq
