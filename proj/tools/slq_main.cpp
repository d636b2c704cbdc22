#include <CLI11.hpp>

#include <iostream>

#include "slq/cli.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<long> paths;
  std::optional<int> steps;
  std::optional<int> workers;
  bool dump_trajectories = false;
};

void add_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "Experiment configuration (JSON or YAML)")->required();
  sub->add_option("--seed", f.seed, "Master seed");
  sub->add_option("--out", f.out, "Output directory");
  sub->add_option("--paths", f.paths, "Monte Carlo paths for solver and checks");
  sub->add_option("--steps", f.steps, "Time steps");
  sub->add_option("--workers", f.workers, "Worker threads");
  sub->add_flag("--dump-trajectories", f.dump_trajectories, "Write trajectories.csv");
}

}  // namespace

int main(int argc, char** argv) {
  using namespace slq::cli;
  CLI::App app{"Stochastic LQ control of parabolic equations: Riccati solvers and checks"};
  app.set_version_flag("--version", kToolkitVersion);
  app.require_subcommand(1);

  Flags flags;
  const std::vector<std::pair<Command, std::string>> commands = {
      {Command::Spectrum, "Eigenbasis diagnostics"},
      {Command::Solve, "Solve the Riccati equation and synthesize the feedback"},
      {Command::Simulate, "Solve, then simulate the closed loop"},
      {Command::Verify, "Solve, then run the configured checks"},
      {Command::Run, "Full pipeline"}};
  std::vector<std::pair<Command, CLI::App*>> subs;
  for (const auto& [cmd, help] : commands) {
    CLI::App* sub = app.add_subcommand(to_string(cmd), help);
    add_flags(sub, flags);
    subs.emplace_back(cmd, sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  Command command = Command::Run;
  for (const auto& [cmd, sub] : subs)
    if (sub->parsed()) command = cmd;

  ExperimentConfig cfg;
  try {
    cfg = parse_config(flags.config);
    Overrides o;
    o.seed = flags.seed;
    o.out = flags.out;
    o.paths = flags.paths;
    o.steps = flags.steps;
    o.workers = flags.workers;
    o.dump_trajectories = flags.dump_trajectories;
    apply_overrides(cfg, o);
  } catch (const slq::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  }

  const RunManifest m = run_experiment(cfg, command);
  if (m.exit_code != kExitOk) {
    std::cerr << m.status << " in stage " << m.failure_stage;
    for (const auto& s : m.stages)
      if (s.status == "failed") std::cerr << ": " << s.message;
    std::cerr << "\n";
  }
  return m.exit_code;
}
