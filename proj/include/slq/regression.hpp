#pragma once

// Least-squares conditional expectations E[Y | W(t) = w] for matrix-valued Y,
// projected on monomials of the standardized Brownian value w / sqrt(t).

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

namespace slq {

/// Per-path samples of a rows x cols matrix, stored entry-major so that each
/// entry is one contiguous column over paths. Symmetric samples store the
/// upper triangle only.
class EntrySamples {
 public:
  EntrySamples(long count, int rows, int cols, bool symmetric);

  long count() const { return count_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool symmetric() const { return symmetric_; }
  int entries() const { return static_cast<int>(index_.size()); }

  void set(long sample, const Eigen::MatrixXd& m);
  Eigen::MatrixXd get(long sample) const;
  std::span<const double> entry(int e) const {
    return {data_.data() + static_cast<std::size_t>(e) * count_, static_cast<std::size_t>(count_)};
  }
  std::span<double> entry(int e) {
    return {data_.data() + static_cast<std::size_t>(e) * count_, static_cast<std::size_t>(count_)};
  }
  std::pair<int, int> position(int e) const { return index_[static_cast<std::size_t>(e)]; }

 private:
  long count_;
  int rows_, cols_;
  bool symmetric_;
  std::vector<std::pair<int, int>> index_;
  std::vector<double> data_;
};

class RegressionModel {
 public:
  RegressionModel() = default;
  /// Degree-0 model returning `m` everywhere.
  static RegressionModel constant(Eigen::MatrixXd m, bool symmetric);

  int degree() const { return static_cast<int>(coefficients_.size()) - 1; }
  int requested_degree() const { return requested_degree_; }
  double scale() const { return scale_; }
  bool symmetric() const { return symmetric_; }
  double condition_number() const { return condition_; }
  const std::vector<Eigen::MatrixXd>& coefficients() const { return coefficients_; }
  const std::string& warning() const { return warning_; }

  Eigen::MatrixXd operator()(double w) const;

  /// Replaces every coefficient c by D c D (D diagonal). Linear in the
  /// coefficients, so the model of D Y D is D (model of Y) D.
  void conjugate(std::span<const double> diagonal);

  /// sqrt of sum of squared Frobenius norms of the coefficients.
  double coefficient_norm() const;

  friend RegressionModel fit_regression(std::span<const double>, const EntrySamples&, int, double);

 private:
  std::vector<Eigen::MatrixXd> coefficients_;
  double scale_ = 1.0;
  bool symmetric_ = false;
  int requested_degree_ = 0;
  double condition_ = 1.0;
  std::string warning_;
};

/// Fits each entry of `samples` on {1, z, ..., z^degree}, z = w / scale. The
/// degree drops until the normalized Gram matrix has condition below 1e10;
/// the model records the reduction as a warning.
RegressionModel fit_regression(std::span<const double> w, const EntrySamples& samples, int degree,
                               double scale);

}  // namespace slq
