#pragma once

#include <Eigen/Sparse>

#include <cstdint>
#include <vector>

#include "mlda/common.hpp"

namespace mlda {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct ReservoirSpec {
  std::size_t nodes = 1000;
  double mean_degree = 3.0;
  double spectral_radius = 0.9;
  double input_scale = 0.1;
  std::size_t input_dim = 3;

  void validate() const;

  static ReservoirSpec lorenz() { return {1000, 3.0, 0.9, 0.1, 3}; }
  static ReservoirSpec ks(std::size_t grid = 64) { return {2000, 3.0, 0.6, 1.0, grid}; }
};

/// Sparse adjacency A (nodes x nodes) and the input coupling W_in
/// (nodes x input_dim, one nonzero per row).
struct ReservoirMatrices {
  SparseMatrix adjacency;
  /// Input variable feeding each node.
  std::vector<std::size_t> input_index;
  /// The nonzero of each W_in row.
  Vector input_weight;
  std::size_t input_dim = 0;

  std::size_t nodes() const { return static_cast<std::size_t>(adjacency.rows()); }
  /// W_in u.
  Vector drive_input(const Vector& u) const;
  /// W_in U, column by column.
  Matrix drive_input(const Matrix& u) const;
  Matrix input_matrix() const;
};

/// Largest eigenvalue magnitude by power iteration.
double spectral_radius(const SparseMatrix& a, double tol = 1e-9, int max_iter = 10000);

/// Builds A with exactly round(mean_degree) distinct in-edges per node,
/// weights uniform on [0,1] rescaled to the target spectral radius, and a
/// balanced W_in. A degenerate draw (zero spectral radius) is retried with
/// the next substream, at most five attempts.
ReservoirMatrices build_reservoir(const ReservoirSpec& spec, std::uint64_t seed);

/// tanh(A r + W_in u)
Vector reservoir_step(const Vector& r, const Vector& u, const ReservoirMatrices& mats);
/// Column-wise reservoir_step for a batch of states.
Matrix reservoir_step(const Matrix& r, const Matrix& u, const ReservoirMatrices& mats);

/// [r0, r1, ..., rn] driven by inputs u0..u_{n-1}.
std::vector<Vector> drive(const Vector& r0, const StateSeries& inputs, const ReservoirMatrices& mats);

struct ReadoutMatrix {
  Matrix weights;  // state_dim x (nodes + state_dim)
  double beta = 0.0;

  std::size_t nodes() const { return static_cast<std::size_t>(weights.cols() - weights.rows()); }
  std::size_t state_dim() const { return static_cast<std::size_t>(weights.rows()); }

  /// [0 | I]: returns the model forecast unchanged.
  static ReadoutMatrix pass_through(std::size_t nodes, std::size_t state_dim);
};

/// Streams feature/target columns into the normal equations Z Z^T and Y Z^T
/// so long training windows need not be held in memory.
class RidgeAccumulator {
 public:
  RidgeAccumulator(std::size_t feature_dim, std::size_t target_dim);

  void add(const Matrix& features, const Matrix& targets);
  void add(const Vector& feature, const Vector& target);

  std::size_t samples() const { return samples_; }
  /// W solving W (Z Z^T + beta I) = Y Z^T via Cholesky.
  Matrix solve(double beta) const;

 private:
  Matrix gram_;   // lower triangle of Z Z^T
  Matrix cross_;  // Y Z^T
  std::size_t samples_ = 0;
};

/// Ridge readout minimising sum_j |W z_j - y_j|^2 + beta |W|_F^2, where
/// z_j are the columns of `features` and y_j the columns of `targets`.
ReadoutMatrix fit_readout(const Matrix& features, const Matrix& targets, double beta);

/// W_out [r; xM]
Vector hybrid_readout(const ReadoutMatrix& w, const Vector& r, const Vector& xm);
Matrix hybrid_readout(const ReadoutMatrix& w, const Matrix& r, const Matrix& xm);

/// sum_j |W z_j - y_j|^2 + beta |W|_F^2
double ridge_objective(const Matrix& w, const Matrix& features, const Matrix& targets, double beta);

}  // namespace mlda
