#pragma once

#include <stdexcept>
#include <string>

namespace slq {

// Broken caller contract: bad sizes, time outside the horizon, negative step.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid user configuration, including coefficient data that violates the
// sign conditions on Q, R, G.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// K = R + D'PD lost positive definiteness; the feedback does not exist.
class SingularKError : public SolverError {
 public:
  SingularKError(const std::string& what, double t, double w, double min_eig)
      : SolverError(what), t_(t), w_(w), min_eig_(min_eig) {}
  double time() const { return t_; }
  double brownian_value() const { return w_; }
  double min_eigenvalue() const { return min_eig_; }

 private:
  double t_, w_, min_eig_;
};

class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, long path, int step)
      : std::runtime_error(what), path_(path), step_(step) {}
  long path() const { return path_; }
  int step() const { return step_; }

 private:
  long path_;
  int step_;
};

}  // namespace slq
