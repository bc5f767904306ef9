#include "mlda/observation.hpp"

#include <algorithm>
#include <cmath>

#include "mlda/rng.hpp"

namespace mlda {

MeasurementOperator::MeasurementOperator(std::size_t state_dim, std::vector<std::size_t> indices)
    : state_dim_(state_dim), indices_(std::move(indices)) {
  if (indices_.empty()) throw ConfigError("measurement operator must select at least one component");
  std::vector<std::size_t> sorted = indices_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ConfigError("measurement operator selects a component twice");
  if (sorted.back() >= state_dim_) throw ConfigError("measurement index out of range");
}

std::vector<std::size_t> MeasurementOperator::unmeasured() const {
  std::vector<bool> seen(state_dim_, false);
  for (auto i : indices_) seen[i] = true;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < state_dim_; ++i)
    if (!seen[i]) out.push_back(i);
  return out;
}

Matrix MeasurementOperator::matrix() const {
  Matrix h = Matrix::Zero(static_cast<Eigen::Index>(indices_.size()), static_cast<Eigen::Index>(state_dim_));
  for (std::size_t r = 0; r < indices_.size(); ++r) h(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(indices_[r])) = 1.0;
  return h;
}

Vector MeasurementOperator::apply(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != state_dim_) throw ConfigError("H: state dimension mismatch");
  Vector y(static_cast<Eigen::Index>(indices_.size()));
  for (std::size_t r = 0; r < indices_.size(); ++r) y[static_cast<Eigen::Index>(r)] = x[static_cast<Eigen::Index>(indices_[r])];
  return y;
}

Matrix MeasurementOperator::apply(const Matrix& x) const {
  if (static_cast<std::size_t>(x.rows()) != state_dim_) throw ConfigError("H: state dimension mismatch");
  Matrix y(static_cast<Eigen::Index>(indices_.size()), x.cols());
  for (std::size_t r = 0; r < indices_.size(); ++r) y.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(indices_[r]));
  return y;
}

MeasurementOperator uniform_selector(std::size_t q, std::size_t theta) {
  if (theta == 0 || q % theta != 0) throw ConfigError("uniform_selector: Theta must divide Q");
  const std::size_t stride = q / theta;
  std::vector<std::size_t> idx(theta);
  for (std::size_t i = 0; i < theta; ++i) idx[i] = i * stride;
  return MeasurementOperator(q, std::move(idx));
}

void NoiseModel::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("noise sigma must be finite and nonnegative");
}

Matrix NoiseModel::covariance(std::size_t m) const {
  return Matrix::Identity(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m)) * (sigma * sigma);
}

std::vector<MeasurementRecord> observe_series(const StateSeries& truth, const MeasurementOperator& h,
                                              const NoiseModel& noise, std::uint64_t seed, long first_index) {
  noise.validate();
  if (truth.empty()) throw ConfigError("observe_series: empty truth series");
  Rng rng(seed);
  std::vector<MeasurementRecord> out;
  out.reserve(truth.size());
  for (std::size_t j = 0; j < truth.size(); ++j) {
    Vector y = h.apply(truth[j]);
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += noise.sigma * rng.normal();
    out.push_back({first_index + static_cast<long>(j), std::move(y)});
  }
  return out;
}

}  // namespace mlda
