#pragma once

// Experiment configuration, orchestration (solve -> synthesize -> simulate ->
// verify) and report emission for the command-line tool.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "slq/errors.hpp"
#include "slq/problem.hpp"
#include "slq/riccati.hpp"
#include "slq/verify.hpp"

namespace slq::cli {

inline constexpr const char* kToolkitVersion = "0.1.0";
/// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "SLQ_OUTPUT_DIR";

/// value(x, t, w) = spatial(x) * (base + scale * noise(w)), with
///   spatial: constant c0 | affine c0 + c1 x | cosine c0 + c1 cos(frequency pi x)
///   noise:   none | affine_w (w) | sin_w | cos_w | tanh_w | clip_w2 (clip(w^2, 0, 4)).
/// In two dimensions the spatial part is applied to x and y as a product.
struct CoefficientConfig {
  std::string spatial = "constant";
  double c0 = 0.0;
  double c1 = 0.0;
  double frequency = 1.0;
  std::string noise = "none";
  double base = 1.0;
  double scale = 0.0;

  static CoefficientConfig constant(double v) {
    CoefficientConfig c;
    c.c0 = v;
    return c;
  }
};

struct ProblemConfig {
  std::string preset = "custom";
  int dimension = 1;
  int modes = 8;
  double horizon = 1.0;
  /// Replaces the Laplacian eigenvalues (test hook); length sets the modes.
  std::optional<std::vector<double>> eigenvalues;
  /// Keys a1, a2, b1, b2, q, r, g.
  std::map<std::string, CoefficientConfig> coefficients;
  double r_min = 1e-6;
};

struct SolverConfig {
  std::string regime = "auto";  // auto | ode | bsde | fixed-point
  int steps = 200;
  long paths = 10000;
  int feature_degree = 3;
  double tol = 0.0;  // 0: solver default
  int max_iters = 50;
};

struct VerifyConfig {
  std::vector<std::string> checks;
  long paths = 10000;
  double tolerance = 0.05;
  int perturbations = 20;
  int random_controls = 5;
  int stationarity_samples = 200;
  double stationarity_tolerance = 1e-10;
  double fixed_point_tolerance = 1e-3;
  double eta_scale = 1.0;
};

struct OutputConfig {
  std::string directory;  // empty: flag, then environment, then "slq-out"
  std::vector<std::string> formats = {"json", "csv"};
  bool dump_trajectories = false;
};

struct ExperimentConfig {
  ProblemConfig problem;
  SolverConfig solver;
  VerifyConfig verify;
  OutputConfig output;
  std::optional<std::uint64_t> seed;
  int workers = 1;
};

/// Every check name the verifier stage understands.
const std::vector<std::string>& known_checks();
const std::vector<std::string>& known_presets();

/// Schema violations, each message prefixed with its key path.
class ConfigErrors : public ConfigError {
 public:
  explicit ConfigErrors(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

/// JSON when the text starts with '{', the nested YAML form otherwise.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::filesystem::path& file);

/// Validates a JSON document and fills defaults (preset values first, then
/// explicit keys). Throws ConfigErrors listing every violation.
ExperimentConfig config_from_json(const nlohmann::json& doc);

/// Canonical JSON of the resolved configuration (deterministic key order).
nlohmann::ordered_json canonical_config(const ExperimentConfig& cfg);

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<long> paths;
  std::optional<int> steps;
  std::optional<int> workers;
  bool dump_trajectories = false;
};
void apply_overrides(ExperimentConfig& cfg, const Overrides& o);

/// Throws ConfigError when a coefficient violates the sign assumptions.
LQProblem build_problem(const ExperimentConfig& cfg);

enum class Command { Spectrum, Solve, Simulate, Verify, Run };
std::string to_string(Command c);

struct StageRecord {
  std::string name;
  double seconds = 0.0;
  std::string status;  // ok | failed
  std::string message;
};

struct FileRecord {
  std::string name;
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunManifest {
  std::string version = kToolkitVersion;
  std::string command;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::string regime;
  bool regression_used = false;
  std::vector<StageRecord> stages;
  std::vector<FileRecord> files;
  std::string status = "ok";  // ok | config_error | solver_error | verification_failed
  std::string failure_stage;
  int exit_code = 0;

  nlohmann::ordered_json to_json() const;
};

/// Exit codes of the tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitSolver = 3;
inline constexpr int kExitVerification = 4;

/// Runs the stages of `command`, writes every output plus manifest.json into
/// the output directory and returns the manifest. Stage failures are recorded
/// in the manifest (partial outputs are kept) rather than thrown.
RunManifest run_experiment(const ExperimentConfig& cfg, Command command);

std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg);

/// Writes reports.json and/or reports.csv; returns the written files.
std::vector<std::filesystem::path> emit_report(const std::vector<IdentityReport>& reports,
                                               const std::vector<std::string>& formats,
                                               const std::filesystem::path& dir);

/// Columns step,t,i,j,value for matrix solutions, step,t,i,j,coef_0..coef_d
/// for regression solutions; one row per upper-triangle entry and grid point.
void write_p_diagnostics_csv(const RiccatiSolution& solution, const std::filesystem::path& file);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& file);

}  // namespace slq::cli
