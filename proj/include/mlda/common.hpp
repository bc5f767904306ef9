#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace mlda {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Time-ordered sequence of model states sampled every delta_t.
using StateSeries = std::vector<Vector>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, dimensions or arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure failed (singular system, non-convergence, ...).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A time integrator produced a non-finite or blown-up state.
class IntegrationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }

/// Stacks a series as the columns of a matrix.
Matrix to_columns(const StateSeries& series);
StateSeries from_columns(const Matrix& m);

}  // namespace mlda
