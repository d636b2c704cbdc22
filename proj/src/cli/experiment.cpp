#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "slq/cli.hpp"
#include "slq/parallel.hpp"

namespace slq::cli {

namespace {

using Clock = std::chrono::steady_clock;
using nlohmann::ordered_json;

// Raised inside a stage to stop the pipeline with a given exit status.
struct StageFailure {
  std::string status;
  int exit_code;
  std::string message;
};

struct Pipeline {
  const ExperimentConfig& cfg;
  std::filesystem::path dir;
  RunManifest manifest;
  std::vector<std::filesystem::path> files;

  template <class Body>
  void stage(const std::string& name, Body&& body) {
    StageRecord rec{name, 0.0, "ok", ""};
    const auto start = Clock::now();
    auto finish = [&](const StageFailure* f) {
      rec.seconds = std::chrono::duration<double>(Clock::now() - start).count();
      if (f) {
        rec.status = "failed";
        rec.message = f->message;
      }
      manifest.stages.push_back(rec);
    };
    try {
      body();
    } catch (const StageFailure& f) {
      finish(&f);
      throw;
    } catch (const SingularKError& e) {
      StageFailure f{"solver_error", kExitSolver, e.what()};
      finish(&f);
      throw f;
    } catch (const ConfigError& e) {
      StageFailure f{"config_error", kExitConfig, e.what()};
      finish(&f);
      throw f;
    } catch (const ContractViolation& e) {
      // Preconditions the configuration failed to meet (too few paths for the
      // regression basis and the like).
      StageFailure f{"config_error", kExitConfig, e.what()};
      finish(&f);
      throw f;
    } catch (const std::filesystem::filesystem_error& e) {
      StageFailure f{"io_error", kExitConfig, e.what()};
      finish(&f);
      throw f;
    } catch (const std::exception& e) {
      StageFailure f{"solver_error", kExitSolver, e.what()};
      finish(&f);
      throw f;
    }
    finish(nullptr);
  }

  void write(const std::string& name, const std::string& text) {
    std::filesystem::create_directories(dir);
    const auto file = dir / name;
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) {
      throw std::filesystem::filesystem_error("cannot write", file,
                                              std::make_error_code(std::errc::io_error));
    }
    files.push_back(file);
  }
};

ordered_json matrix_json(const Eigen::MatrixXd& m) {
  ordered_json rows = ordered_json::array();
  for (int i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

ordered_json spectrum_json(const SpectralBasis& basis) {
  ordered_json j;
  j["dimension"] = basis.dimension();
  j["modes"] = basis.modes();
  j["eigenvalues_overridden"] = basis.eigenvalues_overridden();
  ordered_json rows = ordered_json::array();
  for (int k = 0; k < basis.modes(); ++k) {
    const auto waves = basis.wave_numbers(k);
    rows.push_back({{"mode", k},
                    {"wave_numbers", {waves[0], waves[1]}},
                    {"eigenvalue", basis.eigenvalues()[k]},
                    {"graph_norm", basis.graph_norms()[k]},
                    {"weight", basis.lambda_weights()[k]},
                    {"hs_partial_sum", hs_embedding_partial_sum(basis, k + 1)}});
  }
  j["modes_table"] = rows;
  return j;
}

Eigen::VectorXd initial_state(const SpectralBasis& basis, double scale) {
  const auto lam = basis.lambda_weights();
  Eigen::VectorXd eta(basis.modes());
  for (int j = 0; j < basis.modes(); ++j) eta(j) = scale * lam[j] / lam[0];
  return eta;
}

// Verification noise must not reuse the Brownian cloud the solver regressed on.
std::uint64_t verification_seed(std::uint64_t seed) { return seed ^ 0x5bd1e9955bd1e995ULL; }

}  // namespace

std::string to_string(Command c) {
  switch (c) {
    case Command::Spectrum: return "spectrum";
    case Command::Solve: return "solve";
    case Command::Simulate: return "simulate";
    case Command::Verify: return "verify";
    case Command::Run: return "run";
  }
  return "unknown";
}

ordered_json RunManifest::to_json() const {
  ordered_json j;
  j["version"] = version;
  j["command"] = command;
  j["config_digest"] = config_digest;
  j["seed"] = seed;
  j["regime"] = regime;
  j["regression_used"] = regression_used;
  j["status"] = status;
  j["failure_stage"] = failure_stage;
  j["exit_code"] = exit_code;
  ordered_json st = ordered_json::array();
  for (const auto& s : stages)
    st.push_back({{"name", s.name}, {"seconds", s.seconds}, {"status", s.status},
                  {"message", s.message}});
  j["stages"] = st;
  ordered_json fs = ordered_json::array();
  for (const auto& f : files)
    fs.push_back({{"name", f.name}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  j["files"] = fs;
  return j;
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg) {
  if (!cfg.output.directory.empty()) return cfg.output.directory;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return "slq-out";
}

RunManifest run_experiment(const ExperimentConfig& cfg, Command command) {
  Pipeline pl{cfg, resolve_output_dir(cfg), {}, {}};
  RunManifest& m = pl.manifest;
  m.command = to_string(command);
  m.config_digest = sha256_hex(canonical_config(cfg).dump());
  m.seed = cfg.seed.value_or(0);
  set_default_workers(cfg.workers);
  const int workers = cfg.workers;

  std::optional<LQProblem> problem;
  std::optional<RiccatiSolution> solution;
  std::optional<Feedback> theta;
  std::vector<IdentityReport> reports;

  try {
    pl.stage("config", [&] {
      if (command != Command::Spectrum && !cfg.seed)
        throw ConfigErrors({"seed: required for stochastic runs"});
      std::filesystem::create_directories(pl.dir);
      pl.write("config.json", canonical_config(cfg).dump(2) + "\n");
    });

    if (command == Command::Spectrum) {
      pl.stage("spectrum", [&] {
        const ProblemConfig& p = cfg.problem;
        const SpectralBasis basis = p.eigenvalues
                                        ? SpectralBasis::with_eigenvalues(p.dimension, *p.eigenvalues)
                                        : SpectralBasis::build(p.dimension, p.modes);
        const ordered_json j = spectrum_json(basis);
        pl.write("spectrum.json", j.dump(2) + "\n");
        std::cout << "mode  eigenvalue        graph_norm        weight\n";
        for (const auto& row : j["modes_table"]) {
          char line[160];
          std::snprintf(line, sizeof line, "%4d  %16.8e  %16.8e  %16.8e\n",
                        row["mode"].get<int>(), row["eigenvalue"].get<double>(),
                        row["graph_norm"].get<double>(), row["weight"].get<double>());
          std::cout << line;
        }
      });
    } else {
      const std::uint64_t seed = *cfg.seed;
      pl.stage("build", [&] {
        problem = build_problem(cfg);
        require_assumptions(check_assumptions(*problem, 200, seed));
      });

      const TimeGrid grid = TimeGrid::make(problem->horizon, problem->time_steps);
      std::string regime = cfg.solver.regime;
      if (regime == "auto") regime = problem->is_deterministic() ? "ode" : "fixed-point";
      m.regime = regime;

      pl.stage("solve", [&] {
        BsdeOptions bo;
        bo.paths = cfg.solver.paths;
        bo.feature_degree = cfg.solver.feature_degree;
        bo.seed = seed;
        bo.workers = workers;
        if (regime == "ode") {
          if (!problem->is_deterministic())
            throw ConfigErrors({"solver.regime: ode requires deterministic coefficients"});
          solution = solve_riccati_ode(*problem, grid);
        } else if (regime == "bsde") {
          m.regression_used = true;
          solution = solve_riccati_bsde_direct(*problem, grid, bo);
        } else {
          m.regression_used = true;
          FixedPointOptions fp;
          fp.max_iters = cfg.solver.max_iters;
          fp.tol = cfg.solver.tol;
          solution = theta_fixed_point(*problem, grid, bo, fp);
        }
        write_p_diagnostics_csv(*solution, pl.dir / "p_diagnostics.csv");
        pl.files.push_back(pl.dir / "p_diagnostics.csv");
      });

      pl.stage("synthesize", [&] {
        theta = feedback_from(*problem, *solution);
        const RiccatiDiagnostics& d = solution->diagnostics;
        ordered_json j;
        j["regime"] = regime;
        j["method"] = d.method;
        j["modes"] = problem->modes();
        j["steps"] = grid.steps;
        j["p0"] = matrix_json(solution->p(0, 0.0));
        j["theta0"] = matrix_json((*theta)(0, 0.0));
        j["min_eig_k"] = d.min_eig_k;
        j["iterations"] = d.iterations;
        j["converged"] = d.converged;
        j["iteration_history"] = d.iteration_history;
        j["fixed_point_residual"] = d.fixed_point_residual;
        j["max_lambda_norm"] = d.max_lambda_norm;
        j["warnings"] = d.warnings;
        pl.write("solution.json", j.dump(2) + "\n");
      });

      const std::uint64_t vseed = verification_seed(seed);
      const Eigen::VectorXd eta = initial_state(problem->basis, cfg.verify.eta_scale);

      if (command == Command::Simulate || command == Command::Run) {
        pl.stage("simulate", [&] {
          SimulationOptions so;
          so.workers = workers;
          so.record_controls = true;
          const TrajectoryBundle bundle = simulate(*problem, grid, eta, ControlPolicy::closed_loop(*theta),
                                                   cfg.verify.paths, vseed, so);
          const CostReport cost = evaluate_cost(*problem, bundle, false);
          ordered_json j;
          j["paths"] = cfg.verify.paths;
          j["steps"] = grid.steps;
          j["initial_state"] = std::vector<double>(eta.data(), eta.data() + eta.size());
          j["cost_mean"] = cost.mean;
          j["cost_se"] = cost.standard_error;
          j["predicted_cost"] = 0.5 * eta.dot(solution->p(0, 0.0) * eta);
          pl.write("simulation.json", j.dump(2) + "\n");
          if (cfg.output.dump_trajectories) {
            write_trajectories_csv(bundle, pl.dir / "trajectories.csv");
            pl.files.push_back(pl.dir / "trajectories.csv");
          }
        });
      }

      if (command == Command::Verify || command == Command::Run) {
        pl.stage("verify", [&] {
          const VerifyConfig& v = cfg.verify;
          CheckOptions co;
          co.paths = v.paths;
          co.seed = vseed;
          co.tolerance = v.tolerance;
          co.workers = workers;
          std::optional<TestInputSet> inputs;
          auto test_inputs = [&]() -> const TestInputSet& {
            if (!inputs) inputs = make_test_inputs(problem->basis, grid, v.paths, vseed);
            return *inputs;
          };
          // The pair (P, Lambda) solves the Lyapunov equation of the feedback
          // that generated it; for the Riccati solvers that is Theta itself.
          const Feedback& lyapunov_theta =
              solution->source_feedback ? *solution->source_feedback : *theta;
          for (const auto& check : v.checks) {
            if (check == "stationarity") {
              IdentityReport r = check_stationarity_and_K(*problem, *solution,
                                                          v.stationarity_samples, vseed,
                                                          v.stationarity_tolerance);
              reports.push_back(r);
              if (solution->source_feedback) {
                IdentityReport f = check_stationarity_and_K(
                    *problem, *solution, v.stationarity_samples, vseed,
                    v.fixed_point_tolerance, solution->source_feedback.get());
                f.name = "fixed_point_stationarity";
                reports.push_back(f);
              }
            } else if (check == "value") {
              reports.push_back(check_value_identity(*problem, *theta, *solution, eta, co));
            } else if (check == "optimality") {
              reports.push_back(check_optimality(*problem, *theta, eta, v.perturbations, co));
            } else if (check == "transposition") {
              reports.push_back(
                  check_transposition_identity(*problem, *solution, test_inputs(), co));
            } else if (check == "hlambda_transposition") {
              reports.push_back(check_hlambda_transposition(*problem, lyapunov_theta, *solution,
                                                            test_inputs(), co));
            } else if (check == "cost_decomposition") {
              const PathArray& xi = test_inputs().xi1;
              IdentityReport z = check_cost_decomposition(*problem, *theta, *solution, nullptr, xi, co);
              z.name = "cost_decomposition/zero";
              reports.push_back(z);
              Eigen::VectorXd w = Eigen::VectorXd::Ones(problem->control_dim);
              if (problem->control_dim == problem->modes()) w = initial_state(problem->basis, 1.0);
              for (int i = 0; i < v.random_controls; ++i) {
                auto u = random_sequence(v.paths, grid, w, 0.5, 10, vseed, Stream::Perturbation,
                                         0x10000u + static_cast<std::uint32_t>(i));
                IdentityReport r = check_cost_decomposition(*problem, *theta, *solution, u, xi, co);
                r.name = "cost_decomposition/random_" + std::to_string(i + 1);
                reports.push_back(r);
              }
            }
          }
          if (!reports.empty()) {
            for (const auto& f : emit_report(reports, cfg.output.formats, pl.dir))
              pl.files.push_back(f);
            std::cout << reports_table(reports);
          }
          for (const auto& r : reports)
            if (!r.pass)
              throw StageFailure{"verification_failed", kExitVerification,
                                 "check " + r.name + " failed"};
        });
      }
    }
  } catch (const StageFailure& f) {
    m.status = f.status;
    m.exit_code = f.exit_code;
    m.failure_stage = m.stages.empty() ? "config" : m.stages.back().name;
  }

  for (const auto& file : pl.files) {
    std::error_code ec;
    if (!std::filesystem::exists(file, ec)) continue;
    m.files.push_back(
        {file.filename().string(), sha256_file(file), std::filesystem::file_size(file)});
  }
  try {
    std::filesystem::create_directories(pl.dir);
    std::ofstream out(pl.dir / "manifest.json", std::ios::binary | std::ios::trunc);
    out << m.to_json().dump(2) << "\n";
    if (!out) throw std::runtime_error("cannot write manifest");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (m.exit_code == kExitOk) {
      m.status = "io_error";
      m.exit_code = kExitConfig;
      m.failure_stage = "manifest";
    }
  }
  return m;
}

}  // namespace slq::cli
