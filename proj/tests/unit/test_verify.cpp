#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "slq/verify.hpp"

using namespace slq;
using slq::testing::scalar;

namespace {

LQProblem null_problem(int modes, int steps) {
  using CP = CoefficientProcess;
  const Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(modes, modes);
  return make_lq_problem(SpectralBasis::build(1, modes), 1.0, steps, CP::constant(Z),
                         CP::constant(Z), CP::constant(Z), CP::constant(Z), CP::constant(Z),
                         CP::constant(Eigen::MatrixXd::Identity(modes, modes)), CP::constant(Z));
}

CheckOptions options(long paths, std::uint64_t seed = 5) {
  CheckOptions o;
  o.paths = paths;
  o.seed = seed;
  return o;
}

}  // namespace

TEST_SUITE("verify") {
TEST_CASE("every identity is exact on the null problem") {
  const auto p = null_problem(3, 20);
  const auto grid = TimeGrid::make(1.0, 20);
  const auto sol = solve_riccati_ode(p, grid);
  const auto theta = feedback_from(p, sol);
  const auto in = make_test_inputs(p.basis, grid, 200, 3);
  const Eigen::VectorXd eta = Eigen::VectorXd::Ones(3);
  std::vector<IdentityReport> reps = {
      check_transposition_identity(p, sol, in, options(200)),
      check_hlambda_transposition(p, theta, sol, in, options(200)),
      check_value_identity(p, theta, sol, eta, options(200)),
      check_cost_decomposition(p, theta, sol, nullptr, in.xi1, options(200)),
      check_stationarity_and_K(p, sol, 50, 1, 1e-10)};
  for (const auto& r : reps) {
    CAPTURE(r.name);
    CHECK(r.pass);
    CHECK(r.residual == 0.0);
    CHECK(r.lhs == 0.0);
    CHECK(r.rhs == 0.0);
  }
}

TEST_CASE("pass rule") {
  IdentityReport r;
  r.lhs = 1.0;
  r.rhs = 1.2;
  r.tolerance = 0.05;
  r.finalize();
  CHECK(r.residual == doctest::Approx(0.2 / 3.2));
  CHECK_FALSE(r.pass);
  r.lhs_se = 0.05;
  r.rhs_se = 0.02;
  r.finalize();
  CHECK(r.pass);
  r.lhs_se = r.rhs_se = 0.0;
  r.rhs = 1.1;
  r.finalize();
  CHECK(r.pass);
}

TEST_CASE("reports round-trip through JSON") {
  IdentityReport r;
  r.name = "value";
  r.lhs = 0.1 + 0.2;
  r.lhs_se = 1e-17;
  r.rhs = 1.0 / 3.0;
  r.digest["seed"] = 7;
  r.details["paired_se"] = 2.5e-3;
  r.notes = {"a", "b"};
  r.finalize();
  const auto back = IdentityReport::from_json(r.to_json());
  CHECK(back.to_json().dump() == r.to_json().dump());
  CHECK(back.lhs == r.lhs);
  CHECK(back.rhs == r.rhs);
  CHECK(reports_to_json({r, back}).size() == 2);
  CHECK(reports_table({r}).find("value") != std::string::npos);
}

TEST_CASE("swapping the input sets leaves the identity unchanged") {
  const auto p = testing::heat_problem(3, 1.0, 0.3, 0.2, 60);
  const auto grid = TimeGrid::make(1.0, 60);
  const auto sol = solve_riccati_ode(p, grid);
  const auto in = make_test_inputs(p.basis, grid, 500, 9);
  const auto a = check_transposition_identity(p, sol, in, options(500));
  const auto b = check_transposition_identity(p, sol, in.swapped(), options(500));
  CHECK(std::abs(a.lhs - b.lhs) <= 1e-10 * (1 + std::abs(a.lhs)));
  CHECK(std::abs(a.rhs - b.rhs) <= 1e-10 * (1 + std::abs(a.rhs)));
}

TEST_CASE("transposition without forcing reduces to the value pairing") {
  testing::ScalarCoefficients k;
  k.q = 0.5;
  const auto p = testing::scalar_problem(k, 1.0, 400);
  const auto grid = TimeGrid::make(1.0, 400);
  const auto sol = solve_riccati_ode(p, grid);
  TestInputParams ip;
  ip.with_u = ip.with_v = false;
  const auto in = make_test_inputs(p.basis, grid, 2000, 4, ip);
  const auto r = check_transposition_identity(p, sol, in, options(2000));
  double oracle = 0.0;
  for (long i = 0; i < 2000; ++i) oracle += in.xi1.vec(i, 0)(0) * sol.p(0)(0, 0) * in.xi2.vec(i, 0)(0);
  oracle /= 2000.0;
  CHECK(r.rhs == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(r.residual < 0.01);
  CHECK(r.pass);
}

TEST_CASE("full forcing set on the heat instance") {
  const auto p = testing::heat_problem(4, 1.0, 0.5, 0.3, 200);
  const auto grid = TimeGrid::make(1.0, 200);
  const auto sol = solve_riccati_ode(p, grid);
  const auto theta = feedback_from(p, sol);
  const auto in = make_test_inputs(p.basis, grid, 2000, 21);
  const auto r = check_transposition_identity(p, sol, in, options(2000));
  CHECK(r.pass);
  CHECK(r.residual < 0.05);
  CHECK(std::abs(r.lhs) > 0.5);
  const auto h = check_hlambda_transposition(p, theta, sol, in, options(2000));
  CHECK(h.pass);
  CHECK(h.residual < 0.05);
  bool noted = false;
  for (const auto& n : r.notes) noted |= n.find("fourth moments") != std::string::npos;
  CHECK(noted);

  TestInputParams no_v;
  no_v.with_v = false;
  const auto in2 = make_test_inputs(p.basis, grid, 2000, 22, no_v);
  CHECK(check_hlambda_transposition(p, theta, sol, in2, options(2000)).pass);
}

TEST_CASE("uncontrolled Lyapunov identity with zero feedback") {
  const auto p = testing::heat_problem(3, 1.0, 0.4, 0.0, 200);
  const auto grid = TimeGrid::make(1.0, 200);
  const Feedback zero = Feedback::zero(3, 3);
  const auto sol = solve_lyapunov_ode(p, zero, grid);
  const auto in = make_test_inputs(p.basis, grid, 2000, 2);
  const auto r = check_hlambda_transposition(p, zero, sol, in, options(2000));
  CHECK(r.pass);
  CHECK(r.residual < 0.05);
}

TEST_CASE("value identity") {
  const auto p = testing::scalar_problem({}, 1.0, 200);
  const auto grid = TimeGrid::make(1.0, 200);
  const auto sol = solve_riccati_ode(p, grid);
  const auto theta = feedback_from(p, sol);
  const auto z = check_value_identity(p, theta, sol, Eigen::VectorXd::Zero(1), options(100));
  CHECK(z.lhs == 0.0);
  CHECK(z.rhs == 0.0);
  const auto r = check_value_identity(p, theta, sol, Eigen::VectorXd::Ones(1), options(1000));
  CHECK(r.rhs == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(std::abs(r.lhs - r.rhs) <= 3.0 * (r.lhs_se + r.rhs_se) + 1e-6);

  const auto heat = testing::heat_problem(8, 1.0, 0.0, 0.0, 200);
  const auto hs = solve_riccati_ode(heat, grid);
  Eigen::VectorXd eta(8);
  for (int j = 0; j < 8; ++j) eta(j) = 1.0 / (j + 1);
  const auto hr = check_value_identity(heat, feedback_from(heat, hs), hs, eta, options(10000));
  CHECK(hr.residual < 0.02);
}

TEST_CASE("optimality") {
  const auto p = testing::scalar_problem({}, 1.0, 200);
  const auto grid = TimeGrid::make(1.0, 200);
  const auto sol = solve_riccati_ode(p, grid);
  const auto theta = feedback_from(p, sol);
  const Eigen::VectorXd eta = Eigen::VectorXd::Ones(1);

  OptimalityOptions same;
  same.deltas = {0.0};
  std::vector<OptimalityDraw> draws;
  check_optimality(p, theta, eta, 2, options(200), same, &draws);
  for (const auto& d : draws) CHECK(d.excess == 0.0);

  // phi = 1: the excess is 1/2 int K dt = T / 2 with K = R = 1.
  OptimalityOptions ones;
  ones.deltas = {1.0};
  auto phi = std::make_shared<PathArray>(1, 200, 1, true);
  for (int k = 0; k < 200; ++k) phi->at(0, k)[0] = 1.0;
  ones.fixed_direction = phi;
  draws.clear();
  const auto r = check_optimality(p, theta, eta, 1, options(500), ones, &draws);
  CHECK(draws[0].excess == doctest::Approx(0.5).epsilon(0.01));
  CHECK(r.pass);

  OptimalityOptions crn, indep;
  indep.common_random_numbers = false;
  testing::ScalarCoefficients k;
  k.c = 0.5;
  k.q = 1.0;
  const auto noisy = testing::scalar_problem(k, 1.0, 100);
  const auto ns = solve_riccati_ode(noisy, TimeGrid::make(1.0, 100));
  const auto nt = feedback_from(noisy, ns);
  std::vector<OptimalityDraw> dc, di;
  check_optimality(noisy, nt, eta, 3, options(2000), crn, &dc);
  check_optimality(noisy, nt, eta, 3, options(2000), indep, &di);
  for (int i = 0; i < 3; ++i) CHECK(dc[i].excess_se < di[i].excess_se);
}

TEST_CASE("cost decomposition") {
  const auto p = testing::scalar_problem({}, 1.0, 400);
  const auto grid = TimeGrid::make(1.0, 400);
  const auto sol = solve_riccati_ode(p, grid);
  const auto theta = feedback_from(p, sol);
  const PathArray xi = PathArray::shared_vector(Eigen::VectorXd::Constant(1, 2.0));
  // u = 0: the state stays at xi, so 2J = G xi^2 = 4 and the right side is
  // P(0) xi^2 + xi^2 int_0^1 (2 - t)^{-2} dt = 2 + 2.
  const auto r = check_cost_decomposition(p, theta, sol, nullptr, xi, options(10));
  CHECK(r.lhs == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(std::abs(r.rhs - 4.0) < 0.01);
  CHECK(r.pass);

  // Re-fed closed-loop control: the remainder vanishes.
  const auto closed = simulate(p, grid, Eigen::VectorXd::Constant(1, 2.0),
                               ControlPolicy::closed_loop(theta), 10, 5);
  auto u = std::make_shared<const PathArray>(*closed.controls);
  const auto rc = check_cost_decomposition(p, theta, sol, u, xi, options(10));
  CHECK(rc.rhs == doctest::Approx(sol.p(0)(0, 0) * 4.0).epsilon(1e-12));
  CHECK(rc.residual < 1e-2);

  const auto heat = testing::heat_problem(4, 1.0, 0.5, 0.3, 200);
  const auto hs = solve_riccati_ode(heat, grid.horizon == 1.0 ? TimeGrid::make(1.0, 200) : grid);
  const auto in = make_test_inputs(heat.basis, TimeGrid::make(1.0, 200), 2000, 8);
  Eigen::VectorXd w(4);
  for (int j = 0; j < 4; ++j) w(j) = 1.0 / (j + 1);
  auto ru = random_sequence(2000, TimeGrid::make(1.0, 200), w, 0.5, 10, 8, Stream::Perturbation);
  const auto rr = check_cost_decomposition(heat, feedback_from(heat, hs), hs, ru, in.xi1, options(2000));
  CHECK(rr.residual < 0.05);
}

TEST_CASE("stationarity") {
  const auto p = testing::heat_problem(3, 1.0, 0.3, 0.5, 50);
  const auto sol = solve_riccati_ode(p, TimeGrid::make(1.0, 50));
  const auto r = check_stationarity_and_K(p, sol, 100, 3, 1e-10);
  CHECK(r.pass);
  CHECK(r.lhs < 1e-10);
  CHECK(r.details.at("min_eig_k") > 0.0);

  const auto theta = feedback_from(p, sol);
  const double eps = 1e-3;
  Feedback shifted{[theta, eps](int k, double w) {
                     return Eigen::MatrixXd(theta(k, w) + eps * Eigen::MatrixXd::Identity(3, 3));
                   },
                   false, 3, 3};
  const auto bad = check_stationarity_and_K(p, sol, 100, 3, 1e-10, &shifted);
  CHECK_FALSE(bad.pass);
  const auto kl = compute_kl(sol.p(0), sol.lambda(0), evaluate_coefficients(p, 0.0, 0.0));
  CHECK(bad.lhs == doctest::Approx(eps * kl.k.norm() / (1.0 + kl.l.norm())).epsilon(0.5));
}

TEST_CASE("standard errors shrink with paths") {
  testing::ScalarCoefficients k;
  k.c = 0.6;
  k.q = 1.0;
  const auto p = testing::scalar_problem(k, 1.0, 100);
  const auto grid = TimeGrid::make(1.0, 100);
  const auto sol = solve_riccati_ode(p, grid);
  const auto theta = feedback_from(p, sol);
  const Eigen::VectorXd eta = Eigen::VectorXd::Ones(1);
  const auto a = check_value_identity(p, theta, sol, eta, options(2500));
  const auto b = check_value_identity(p, theta, sol, eta, options(10000));
  const double ratio = b.lhs_se / a.lhs_se;
  CHECK(ratio > 0.5 * 0.6);
  CHECK(ratio < 0.5 * 1.4);
}

TEST_CASE("test inputs") {
  const auto basis = SpectralBasis::build(1, 4);
  const auto grid = TimeGrid::make(1.0, 20);
  const auto a = make_test_inputs(basis, grid, 50, 1), b = make_test_inputs(basis, grid, 50, 1);
  CHECK(a.xi1.vec(7, 0) == b.xi1.vec(7, 0));
  CHECK(a.v2->vec(3, 11) == b.v2->vec(3, 11));
  // Piecewise constant over ten pieces of two steps.
  CHECK(a.u1->vec(4, 2) == a.u1->vec(4, 3));
  TestInputParams none;
  none.with_u = none.with_v = false;
  const auto c = make_test_inputs(basis, grid, 5, 1, none);
  CHECK_FALSE(c.u1);
  CHECK_FALSE(c.v1);
}
}

TEST_CASE("a nearly singular K is flagged" * doctest::test_suite("verify")) {
  testing::ScalarCoefficients k;
  k.r = 5e-5;
  k.b = 0.01;
  const auto p = testing::scalar_problem(k, 1.0, 20);
  const auto sol = solve_riccati_ode(p, TimeGrid::make(1.0, 20));
  const auto r = check_stationarity_and_K(p, sol, 10, 1, 1e-10);
  CHECK(r.details.at("min_eig_k") == doctest::Approx(5e-5));
  bool flagged = false;
  for (const auto& n : r.notes) flagged |= n.find("below 1e-4") != std::string::npos;
  CHECK(flagged);
}
