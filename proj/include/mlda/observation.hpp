#pragma once

#include <cstdint>
#include <vector>

#include "mlda/common.hpp"

namespace mlda {

/// Linear selection operator: row i picks state component indices()[i].
class MeasurementOperator {
 public:
  MeasurementOperator(std::size_t state_dim, std::vector<std::size_t> indices);

  std::size_t state_dim() const { return state_dim_; }
  std::size_t measured_dim() const { return indices_.size(); }
  const std::vector<std::size_t>& indices() const { return indices_; }
  /// Complement of indices(), ascending.
  std::vector<std::size_t> unmeasured() const;

  Matrix matrix() const;
  Vector apply(const Vector& x) const;
  /// Applies H to every column.
  Matrix apply(const Matrix& x) const;

 private:
  std::size_t state_dim_;
  std::vector<std::size_t> indices_;
};

/// Theta evenly spaced grid points starting at index 0.
MeasurementOperator uniform_selector(std::size_t q, std::size_t theta);

/// Independent Gaussian noise of standard deviation sigma on every measured
/// component, R = sigma^2 I.
struct NoiseModel {
  double sigma = 0.1;

  Matrix covariance(std::size_t m) const;
  void validate() const;
};

struct MeasurementRecord {
  long index = 0;
  Vector y;
};

/// y_j = H x_j + eta_j, eta_j ~ N(0, sigma^2 I). Record j carries time
/// index first_index + j.
std::vector<MeasurementRecord> observe_series(const StateSeries& truth, const MeasurementOperator& h,
                                              const NoiseModel& noise, std::uint64_t seed,
                                              long first_index = 0);

}  // namespace mlda
