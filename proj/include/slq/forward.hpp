#pragma once

// Monte Carlo simulation of the Galerkin-truncated state equation
//   dx = [(A + A1) x + B u + f_u] dt + (C x + D u + f_v) dW
// by exponential Euler, and evaluation of the quadratic cost.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "slq/problem.hpp"

namespace slq {

struct TimeGrid {
  double t0 = 0.0;
  double horizon = 1.0;
  int steps = 1;

  /// Throws ContractViolation unless steps >= 1 and horizon > t0.
  static TimeGrid make(double horizon, int steps, double t0 = 0.0);
  double dt() const { return (horizon - t0) / steps; }
  double time(int k) const { return k == steps ? horizon : t0 + k * dt(); }
};

/// (path, step) -> vector of fixed length, stored contiguously. A shared array
/// stores one row that every path reads.
class PathArray {
 public:
  PathArray() = default;
  PathArray(long paths, int steps, int dim, bool shared = false);

  static PathArray shared_vector(const Eigen::VectorXd& v);

  long paths() const { return paths_; }
  int steps() const { return steps_; }
  int dim() const { return dim_; }
  bool shared() const { return shared_; }

  std::span<double> at(long path, int step) {
    return {data_.data() + offset(path, step), static_cast<std::size_t>(dim_)};
  }
  std::span<const double> at(long path, int step) const {
    return {data_.data() + offset(path, step), static_cast<std::size_t>(dim_)};
  }
  Eigen::Map<const Eigen::VectorXd> vec(long path, int step) const {
    return {data_.data() + offset(path, step), dim_};
  }

 private:
  std::size_t offset(long path, int step) const {
    const long p = shared_ ? 0 : path;
    return (static_cast<std::size_t>(p) * steps_ + static_cast<std::size_t>(step)) * dim_;
  }
  long paths_ = 0;
  int steps_ = 0, dim_ = 0;
  bool shared_ = false;
  std::vector<double> data_;
};

/// Brownian values W(t_k) (k = 0..steps, W(t_0) = 0) and increments per path,
/// drawn from per-path streams of `seed`.
struct BrownianPaths {
  long paths = 0;
  int steps = 0;
  std::vector<double> w;    // paths x (steps + 1)
  std::vector<double> dw;   // paths x steps
  double value(long p, int k) const { return w[static_cast<std::size_t>(p) * (steps + 1) + k]; }
  double increment(long p, int k) const { return dw[static_cast<std::size_t>(p) * steps + k]; }
};

BrownianPaths generate_brownian(const TimeGrid& grid, long paths, std::uint64_t seed,
                                int workers = 0);

/// Feedback operator Theta(t_k, W(t_k)), defined for k = 0..steps.
struct Feedback {
  std::function<Eigen::MatrixXd(int step, double w)> gain;
  bool depends_on_w = false;
  int rows = 0, cols = 0;

  static Feedback zero(int control_dim, int modes);
  static Feedback deterministic(std::vector<Eigen::MatrixXd> per_step);
  Eigen::MatrixXd operator()(int step, double w) const { return gain(step, w); }
};

/// u_k = Theta(t_k, W_k) x_k (when a feedback is set) + offset_scale * offset_k.
/// An open-loop control has no feedback; the zero control has neither.
struct ControlPolicy {
  std::optional<Feedback> feedback;
  std::shared_ptr<const PathArray> offset;
  double offset_scale = 1.0;

  static ControlPolicy zero() { return {}; }
  static ControlPolicy closed_loop(Feedback f) { return {std::move(f), nullptr, 1.0}; }
  static ControlPolicy open_loop(std::shared_ptr<const PathArray> u) {
    return {std::nullopt, std::move(u), 1.0};
  }
  static ControlPolicy perturbed(Feedback f, std::shared_ptr<const PathArray> phi, double delta) {
    return {std::move(f), std::move(phi), delta};
  }
};

struct TrajectoryBundle {
  TimeGrid grid;
  int start_step = 0;
  int modes = 0;
  int control_dim = 0;
  long path_count = 0;
  std::uint64_t seed = 0;
  PathArray states;                 // paths x (steps + 1) x modes
  std::shared_ptr<const BrownianPaths> brownian;
  std::optional<PathArray> controls;  // paths x steps x control_dim
};

struct SimulationOptions {
  int start_step = 0;
  bool record_controls = true;
  int workers = 0;
  /// Reuse this noise instead of drawing from the seed (common random numbers).
  std::shared_ptr<const BrownianPaths> noise;
};

/// Exponential-Euler simulation
///   x_{k+1} = e^{A dt}[x_k + (A1 x_k + B u_k + f_u) dt + (C x_k + D u_k + f_v) dW_k].
/// `init` holds one state per path (or a shared one). Forcings may be null.
/// Throws SimulationError naming the first (path, step) with a non-finite state.
TrajectoryBundle simulate(const LQProblem& problem, const TimeGrid& grid, const PathArray& init,
                          const ControlPolicy& control, const PathArray* forcing_u,
                          const PathArray* forcing_v, long paths, std::uint64_t seed,
                          const SimulationOptions& options = {});

TrajectoryBundle simulate(const LQProblem& problem, const TimeGrid& grid,
                          const Eigen::VectorXd& init, const ControlPolicy& control, long paths,
                          std::uint64_t seed, const SimulationOptions& options = {});

/// Solution map of the closed-loop equation with zero forcing, started at
/// grid index `start_step`.
TrajectoryBundle flow_map(const LQProblem& problem, const Feedback& theta, const TimeGrid& grid,
                          int start_step, const PathArray& init, long paths, std::uint64_t seed,
                          int workers = 0);

struct CostReport {
  double mean = 0.0;
  double standard_error = 0.0;
  long paths = 0;
  bool per_path_retained = false;
  std::vector<double> per_path;
};

/// J = 1/2 [ sum_k (<Q x_k, x_k> + <R u_k, u_k>) dt + <G x_T, x_T> ], left
/// endpoint in time, from the bundle's start step.
CostReport evaluate_cost(const LQProblem& problem, const TrajectoryBundle& bundle,
                         const PathArray& controls, bool retain_per_path = true);
CostReport evaluate_cost(const LQProblem& problem, const TrajectoryBundle& bundle,
                         bool retain_per_path = true);

struct SampleStats {
  double mean = 0.0;
  double standard_error = 0.0;
};
SampleStats sample_stats(std::span<const double> values);

/// CSV with columns path,step,t,mode_1..mode_N.
void write_trajectories_csv(const TrajectoryBundle& bundle, const std::filesystem::path& file);

}  // namespace slq
