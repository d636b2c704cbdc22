#include "slq/regression.hpp"

#include <cmath>
#include <limits>

#include "slq/errors.hpp"
#include "slq/kernels.hpp"

namespace slq {

namespace {

constexpr double kMaxCondition = 1e10;

// Condition number of the Gram matrix after unit-diagonal scaling; infinite
// when a feature is identically zero.
double normalized_condition(const Eigen::MatrixXd& gram) {
  const Eigen::Index f = gram.rows();
  Eigen::VectorXd inv_sqrt(f);
  for (Eigen::Index i = 0; i < f; ++i) {
    if (!(gram(i, i) > 1e-300)) return std::numeric_limits<double>::infinity();
    inv_sqrt(i) = 1.0 / std::sqrt(gram(i, i));
  }
  const Eigen::MatrixXd scaled = inv_sqrt.asDiagonal() * gram * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(scaled, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues()(0), hi = es.eigenvalues()(f - 1);
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

}  // namespace

EntrySamples::EntrySamples(long count, int rows, int cols, bool symmetric)
    : count_(count), rows_(rows), cols_(cols), symmetric_(symmetric) {
  if (symmetric && rows != cols) throw ContractViolation("symmetric samples must be square");
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < (symmetric ? j + 1 : rows); ++i) index_.emplace_back(i, j);
  data_.assign(index_.size() * static_cast<std::size_t>(count), 0.0);
}

void EntrySamples::set(long sample, const Eigen::MatrixXd& m) {
  for (std::size_t e = 0; e < index_.size(); ++e) {
    const auto [i, j] = index_[e];
    data_[e * count_ + sample] = m(i, j);
  }
}

Eigen::MatrixXd EntrySamples::get(long sample) const {
  Eigen::MatrixXd m(rows_, cols_);
  for (std::size_t e = 0; e < index_.size(); ++e) {
    const auto [i, j] = index_[e];
    m(i, j) = data_[e * count_ + sample];
    if (symmetric_) m(j, i) = m(i, j);
  }
  return m;
}

RegressionModel RegressionModel::constant(Eigen::MatrixXd m, bool symmetric) {
  RegressionModel model;
  if (symmetric) m = (0.5 * (m + m.transpose())).eval();
  model.coefficients_.push_back(std::move(m));
  model.symmetric_ = symmetric;
  return model;
}

Eigen::MatrixXd RegressionModel::operator()(double w) const {
  const double z = w / scale_;
  Eigen::MatrixXd out = coefficients_.back();
  for (int p = degree() - 1; p >= 0; --p) out = (out * z + coefficients_[p]).eval();
  return out;
}

void RegressionModel::conjugate(std::span<const double> diagonal) {
  for (auto& c : coefficients_) {
    if (c.rows() != c.cols() || c.rows() != static_cast<Eigen::Index>(diagonal.size())) {
      throw ContractViolation("RegressionModel::conjugate: size mismatch");
    }
    kernels::conjugate_diagonal({c.data(), static_cast<std::size_t>(c.size())}, diagonal);
  }
}

double RegressionModel::coefficient_norm() const {
  double s = 0.0;
  for (const auto& c : coefficients_) s += c.squaredNorm();
  return std::sqrt(s);
}

RegressionModel fit_regression(std::span<const double> w, const EntrySamples& samples, int degree,
                               double scale) {
  const long count = samples.count();
  if (static_cast<long>(w.size()) != count) {
    throw ContractViolation("fit_regression: sample count mismatch");
  }
  if (degree < 0 || !(scale > 0.0)) throw ContractViolation("fit_regression: bad degree or scale");

  // Feature columns z^p, p = 0..degree.
  std::vector<std::vector<double>> features(static_cast<std::size_t>(degree) + 1,
                                            std::vector<double>(static_cast<std::size_t>(count)));
  for (long i = 0; i < count; ++i) {
    const double z = w[static_cast<std::size_t>(i)] / scale;
    double power = 1.0;
    for (int p = 0; p <= degree; ++p) {
      features[static_cast<std::size_t>(p)][static_cast<std::size_t>(i)] = power;
      power *= z;
    }
  }
  const double inv_count = 1.0 / static_cast<double>(count);
  Eigen::MatrixXd full_gram(degree + 1, degree + 1);
  for (int p = 0; p <= degree; ++p)
    for (int q = p; q <= degree; ++q)
      full_gram(p, q) = full_gram(q, p) =
          kernels::dot(features[static_cast<std::size_t>(p)], features[static_cast<std::size_t>(q)]) *
          inv_count;

  RegressionModel model;
  model.scale_ = scale;
  model.symmetric_ = samples.symmetric();
  model.requested_degree_ = degree;

  int used = degree;
  double cond = normalized_condition(full_gram);
  while (used > 0 && !(cond < kMaxCondition)) {
    --used;
    cond = normalized_condition(full_gram.topLeftCorner(used + 1, used + 1));
  }
  model.condition_ = cond;
  if (used < degree) {
    model.warning_ = "regression degree reduced from " + std::to_string(degree) + " to " +
                     std::to_string(used);
  }

  const Eigen::MatrixXd gram = full_gram.topLeftCorner(used + 1, used + 1);
  Eigen::MatrixXd rhs(used + 1, samples.entries());
  for (int e = 0; e < samples.entries(); ++e)
    for (int p = 0; p <= used; ++p)
      rhs(p, e) = kernels::dot(features[static_cast<std::size_t>(p)], samples.entry(e)) * inv_count;
  const Eigen::MatrixXd solved = gram.ldlt().solve(rhs);

  model.coefficients_.assign(static_cast<std::size_t>(used) + 1,
                             Eigen::MatrixXd::Zero(samples.rows(), samples.cols()));
  for (int e = 0; e < samples.entries(); ++e) {
    const auto [i, j] = samples.position(e);
    for (int p = 0; p <= used; ++p) {
      model.coefficients_[static_cast<std::size_t>(p)](i, j) = solved(p, e);
      if (samples.symmetric()) model.coefficients_[static_cast<std::size_t>(p)](j, i) = solved(p, e);
    }
  }
  return model;
}

}  // namespace slq
