#include <doctest.h>

#include <unsupported/Eigen/MatrixFunctions>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "slq/errors.hpp"
#include "slq/forward.hpp"

using namespace slq;
using slq::testing::pi;
using slq::testing::scalar;

namespace {

LQProblem decay_problem(int modes, int steps, double horizon = 1.0) {
  using CP = CoefficientProcess;
  const Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(modes, modes);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(modes, modes);
  return make_lq_problem(SpectralBasis::build(1, modes), horizon, steps, CP::constant(Z),
                         CP::constant(Z), CP::constant(Z), CP::constant(Z), CP::constant(Z),
                         CP::constant(I), CP::constant(I));
}

bool same_bundle(const TrajectoryBundle& a, const TrajectoryBundle& b) {
  for (long p = 0; p < a.path_count; ++p)
    for (int k = 0; k <= a.grid.steps; ++k)
      if (a.states.vec(p, k) != b.states.vec(p, k)) return false;
  return a.brownian->dw == b.brownian->dw;
}

}  // namespace

TEST_SUITE("forward") {
TEST_CASE("pure heat decay is exact and path independent") {
  const auto p = decay_problem(3, 50);
  const auto grid = TimeGrid::make(1.0, 50);
  const auto b = simulate(p, grid, Eigen::VectorXd::Unit(3, 0), ControlPolicy::zero(), 20, 1);
  for (long i = 0; i < 20; ++i) {
    CHECK(b.states.vec(i, 50)(0) == doctest::Approx(std::exp(-pi() * pi())).epsilon(1e-12));
    CHECK(b.states.vec(i, 50)(1) == 0.0);
    CHECK(b.states.vec(i, 50) == b.states.vec(0, 50));
    CHECK(b.states.vec(i, 0) == Eigen::VectorXd::Unit(3, 0));
  }
}

TEST_CASE("stochastic exponential keeps its mean") {
  testing::ScalarCoefficients k;
  k.c = 1.0;
  const auto p = testing::scalar_problem(k, 1.0, 100);
  const auto grid = TimeGrid::make(1.0, 100);
  const auto b = simulate(p, grid, Eigen::VectorXd::Ones(1), ControlPolicy::zero(), 10000, 3);
  std::vector<double> xt(10000);
  for (long i = 0; i < 10000; ++i) xt[i] = b.states.vec(i, 100)(0);
  const auto s = sample_stats(xt);
  CHECK(std::abs(s.mean - 1.0) < 3.0 * s.standard_error);
}

TEST_CASE("Brownian increments have the right first two moments") {
  const auto grid = TimeGrid::make(1.0, 10);
  const auto bp = generate_brownian(grid, 5000, 17);
  std::vector<double> inc(bp.dw.begin(), bp.dw.end());
  const auto s = sample_stats(inc);
  CHECK(std::abs(s.mean) < 5.0 * s.standard_error);
  double ss = 0.0;
  for (double v : inc) ss += v * v;
  const double var = ss / inc.size();
  const double var_se = grid.dt() * std::sqrt(2.0 / inc.size());
  CHECK(std::abs(var - grid.dt()) < 5.0 * var_se);
  CHECK(bp.value(3, 0) == 0.0);
  CHECK(bp.value(3, 4) == doctest::Approx(bp.increment(3, 0) + bp.increment(3, 1) +
                                          bp.increment(3, 2) + bp.increment(3, 3)));
}

TEST_CASE("constant forcing converges at first order") {
  const double mu = -pi() * pi(), c = 2.0;
  const double exact = std::exp(mu) + c * (1.0 - std::exp(mu)) / (-mu);
  std::vector<double> errs;
  for (int steps : {50, 100, 200, 400}) {
    const auto p = decay_problem(1, steps);
    const auto grid = TimeGrid::make(1.0, steps);
    PathArray f(1, steps, 1, true);
    for (int k = 0; k < steps; ++k) f.at(0, k)[0] = c;
    const auto b = simulate(p, grid, PathArray::shared_vector(Eigen::VectorXd::Ones(1)),
                            ControlPolicy::zero(), &f, nullptr, 2, 4);
    errs.push_back(std::abs(b.states.vec(0, steps)(0) - exact));
  }
  CHECK(errs[0] < 0.1 * exact);
  for (std::size_t i = 1; i < errs.size(); ++i) {
    const double ratio = errs[i - 1] / errs[i];
    CHECK(ratio > 2.0 * 0.7);
    CHECK(ratio < 2.0 * 1.3);
  }
}

TEST_CASE("flow map is linear and matches the deterministic transition matrix") {
  ParabolicSpec spec;
  spec.a1.spatial = [](double x, double) { return 3.0 * x; };
  const double horizon = 0.1;
  const auto basis = SpectralBasis::build(1, 3);
  const Eigen::MatrixXd gen = [&] {
    const auto p = from_parabolic_spec(spec, basis, horizon, 10);
    Eigen::MatrixXd a = p.a1(0.0, 0.0);
    for (int j = 0; j < 3; ++j) a(j, j) += basis.eigenvalues()[j];
    return Eigen::MatrixXd((a * horizon).exp());
  }();
  std::vector<double> errs;
  for (int steps : {200, 400}) {
    const auto p = from_parabolic_spec(spec, basis, horizon, steps);
    const auto grid = TimeGrid::make(horizon, steps);
    Eigen::MatrixXd phi(3, 3);
    for (int j = 0; j < 3; ++j) {
      PathArray init(1, 1, 3);
      init.at(0, 0)[j] = 1.0;
      const auto b = flow_map(p, Feedback::zero(3, 3), grid, 0, init, 1, 1);
      phi.col(j) = b.states.vec(0, steps);
    }
    errs.push_back((phi - gen).norm() / gen.norm());
  }
  CHECK(errs[0] < 0.05);
  CHECK(errs[1] < 0.6 * errs[0]);

  // Superposition on random initial states with common noise.
  const auto p = testing::heat_problem(3, 1.0, 0.4, 0.0, 40);
  const auto grid = TimeGrid::make(1.0, 40);
  const Feedback theta = Feedback::deterministic(
      std::vector<Eigen::MatrixXd>(41, -0.3 * Eigen::MatrixXd::Identity(3, 3)));
  PathArray x1(5, 1, 3), x2(5, 1, 3), mix(5, 1, 3);
  for (long i = 0; i < 5; ++i)
    for (int j = 0; j < 3; ++j) {
      x1.at(i, 0)[j] = std::sin(1.0 + i + 2 * j);
      x2.at(i, 0)[j] = std::cos(2.0 * i - j);
      mix.at(i, 0)[j] = 2.0 * x1.at(i, 0)[j] - 0.5 * x2.at(i, 0)[j];
    }
  const auto b1 = flow_map(p, theta, grid, 0, x1, 5, 8);
  const auto b2 = flow_map(p, theta, grid, 0, x2, 5, 8);
  const auto bm = flow_map(p, theta, grid, 0, mix, 5, 8);
  for (long i = 0; i < 5; ++i)
    for (int k = 0; k <= 40; ++k)
      CHECK((bm.states.vec(i, k) - 2.0 * b1.states.vec(i, k) + 0.5 * b2.states.vec(i, k)).norm() < 1e-12);
  const auto zero = flow_map(p, theta, grid, 10, PathArray(5, 1, 3), 5, 8);
  for (long i = 0; i < 5; ++i) CHECK(zero.states.vec(i, 40).norm() == 0.0);
}

TEST_CASE("cost evaluation") {
  const auto p = decay_problem(1, 100);
  const auto grid = TimeGrid::make(1.0, 100);
  const auto zero = simulate(p, grid, Eigen::VectorXd::Zero(1), ControlPolicy::zero(), 4, 1);
  CHECK(evaluate_cost(p, zero).mean == 0.0);

  // Q = 0, R = 1, G = 1 on a state that starts at 0 and stays there when B = 0.
  testing::ScalarCoefficients k;
  k.b = 0.0;
  const auto pb = testing::scalar_problem(k, 2.0, 100);
  const auto g2 = TimeGrid::make(2.0, 100);
  auto u = std::make_shared<PathArray>(1, 100, 1, true);
  for (int s = 0; s < 100; ++s) u->at(0, s)[0] = 1.5;
  const auto ub = simulate(pb, g2, Eigen::VectorXd::Zero(1), ControlPolicy::open_loop(u), 3, 1);
  CHECK(evaluate_cost(pb, ub).mean == doctest::Approx(0.5 * 1.5 * 1.5 * 2.0).epsilon(1e-13));

  const auto db = simulate(p, grid, Eigen::VectorXd::Ones(1), ControlPolicy::zero(), 3, 1);
  const auto dc = evaluate_cost(p, db);
  CHECK(dc.mean == doctest::Approx(0.5 * std::exp(-2.0 * pi() * pi())).epsilon(1e-12));
  CHECK(dc.standard_error == 0.0);

  PathArray wrong(3, 100, 2);
  CHECK_THROWS_AS(evaluate_cost(p, db, wrong), ContractViolation);
}

TEST_CASE("standard error is the sample deviation over root n") {
  const std::vector<double> v = {1, 2, 3, 4};
  const auto s = sample_stats(v);
  CHECK(s.mean == 2.5);
  CHECK(s.standard_error == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
}

TEST_CASE("results do not depend on the worker count") {
  const auto p = testing::wonham_problem(30);
  const auto grid = TimeGrid::make(1.0, 30);
  const Feedback theta{[](int, double w) { return scalar(-0.5 - 0.1 * w); }, true, 1, 1};
  SimulationOptions o1, o3;
  o1.workers = 1;
  o3.workers = 3;
  const auto a = simulate(p, grid, Eigen::VectorXd::Ones(1), ControlPolicy::closed_loop(theta), 101, 42, o1);
  const auto b = simulate(p, grid, Eigen::VectorXd::Ones(1), ControlPolicy::closed_loop(theta), 101, 42, o3);
  CHECK(same_bundle(a, b));
  CHECK(evaluate_cost(p, a).mean == evaluate_cost(p, b).mean);
}

TEST_CASE("re-feeding recorded controls reproduces the closed loop") {
  const auto p = testing::heat_problem(4, 1.0, 0.3, 0.2, 50);
  const auto grid = TimeGrid::make(1.0, 50);
  const Feedback theta = Feedback::deterministic(
      std::vector<Eigen::MatrixXd>(51, -0.7 * Eigen::MatrixXd::Identity(4, 4)));
  const Eigen::VectorXd x0 = Eigen::VectorXd::LinSpaced(4, 1.0, 0.25);
  const auto closed = simulate(p, grid, x0, ControlPolicy::closed_loop(theta), 64, 5);
  auto recorded = std::make_shared<const PathArray>(*closed.controls);
  SimulationOptions o;
  o.noise = closed.brownian;
  const auto open = simulate(p, grid, x0, ControlPolicy::open_loop(recorded), 64, 999, o);
  double worst = 0.0;
  for (long i = 0; i < 64; ++i)
    for (int k = 0; k <= 50; ++k)
      worst = std::max(worst, (open.states.vec(i, k) - closed.states.vec(i, k)).norm());
  CHECK(worst < 1e-12);
  const auto cost = evaluate_cost(p, closed);
  for (double c : cost.per_path) CHECK(c >= 0.0);
}

TEST_CASE("blow-up names the path and step") {
  testing::ScalarCoefficients k;
  k.a1 = 1e200;
  const auto p = testing::scalar_problem(k, 1.0, 10);
  const auto grid = TimeGrid::make(1.0, 10);
  try {
    simulate(p, grid, Eigen::VectorXd::Ones(1), ControlPolicy::zero(), 2, 1);
    FAIL("expected SimulationError");
  } catch (const SimulationError& e) {
    CHECK(e.path() == 0);
    CHECK(e.step() == 2);
  }
}

TEST_CASE("grid contract") {
  CHECK_THROWS_AS(TimeGrid::make(1.0, 0), ContractViolation);
  CHECK_THROWS_AS(TimeGrid::make(0.0, 5), ContractViolation);
  const auto g = TimeGrid::make(2.0, 4, 1.0);
  CHECK(g.dt() == 0.25);
  CHECK(g.time(4) == 2.0);
}

TEST_CASE("trajectory dump") {
  const auto p = decay_problem(2, 3);
  const auto grid = TimeGrid::make(1.0, 3);
  const auto b = simulate(p, grid, Eigen::VectorXd::Ones(2), ControlPolicy::zero(), 2, 1);
  const auto file = std::filesystem::temp_directory_path() / "slq_traj_test.csv";
  write_trajectories_csv(b, file);
  std::ifstream in(file);
  std::string header;
  std::getline(in, header);
  CHECK(header == "path,step,t,mode_1,mode_2");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == 2 * 4);
  std::filesystem::remove(file);
}
}
