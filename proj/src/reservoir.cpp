#include "mlda/reservoir.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mlda/rng.hpp"

namespace mlda {

void ReservoirSpec::validate() const {
  if (nodes == 0 || input_dim == 0) throw ConfigError("reservoir needs nodes and inputs");
  if (nodes < input_dim) throw ConfigError("reservoir must have at least as many nodes as inputs");
  if (!(mean_degree >= 1.0) || mean_degree > static_cast<double>(nodes))
    throw ConfigError("reservoir mean degree must lie in [1, nodes]");
  if (!(spectral_radius > 0.0)) throw ConfigError("reservoir spectral radius must be positive");
  if (!(input_scale > 0.0)) throw ConfigError("reservoir input scale must be positive");
}

Vector ReservoirMatrices::drive_input(const Vector& u) const {
  if (static_cast<std::size_t>(u.size()) != input_dim) throw ConfigError("reservoir input dimension mismatch");
  Vector out(input_weight.size());
  for (Eigen::Index n = 0; n < out.size(); ++n)
    out[n] = input_weight[n] * u[static_cast<Eigen::Index>(input_index[static_cast<std::size_t>(n)])];
  return out;
}

Matrix ReservoirMatrices::drive_input(const Matrix& u) const {
  if (static_cast<std::size_t>(u.rows()) != input_dim) throw ConfigError("reservoir input dimension mismatch");
  Matrix out(input_weight.size(), u.cols());
  for (Eigen::Index n = 0; n < out.rows(); ++n)
    out.row(n) = input_weight[n] * u.row(static_cast<Eigen::Index>(input_index[static_cast<std::size_t>(n)]));
  return out;
}

Matrix ReservoirMatrices::input_matrix() const {
  Matrix w = Matrix::Zero(input_weight.size(), static_cast<Eigen::Index>(input_dim));
  for (Eigen::Index n = 0; n < w.rows(); ++n)
    w(n, static_cast<Eigen::Index>(input_index[static_cast<std::size_t>(n)])) = input_weight[n];
  return w;
}

double spectral_radius(const SparseMatrix& a, double tol, int max_iter) {
  if (a.rows() != a.cols() || a.rows() == 0) throw ConfigError("spectral_radius needs a nonempty square matrix");
  // A positive start vector has a nonzero component along the Perron vector
  // of a nonnegative matrix.
  Vector v = Vector::Ones(a.rows()) / std::sqrt(static_cast<double>(a.rows()));
  double estimate = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vector w = a * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    w /= norm;
    if (std::abs(norm - estimate) <= tol * norm) return norm;
    estimate = norm;
    v = std::move(w);
  }
  throw NumericalError("spectral_radius: power iteration did not converge");
}

namespace {

SparseMatrix random_adjacency(const ReservoirSpec& spec, Rng& rng) {
  const std::size_t n = spec.nodes;
  const double whole = std::floor(spec.mean_degree);
  const double frac = spec.mean_degree - whole;
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(std::ceil(spec.mean_degree)) * n);
  std::vector<std::size_t> sources;
  for (std::size_t row = 0; row < n; ++row) {
    std::size_t degree = static_cast<std::size_t>(whole);
    if (frac > 0.0 && rng.uniform(0.0, 1.0) < frac) ++degree;
    degree = std::min(degree, n);
    sources.clear();
    while (sources.size() < degree) {
      const std::size_t s = rng.index(n);
      if (std::find(sources.begin(), sources.end(), s) == sources.end()) sources.push_back(s);
    }
    for (auto s : sources)
      triplets.emplace_back(static_cast<int>(row), static_cast<int>(s), rng.uniform(0.0, 1.0));
  }
  SparseMatrix a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  a.setFromTriplets(triplets.begin(), triplets.end());
  a.makeCompressed();
  return a;
}

}  // namespace

ReservoirMatrices build_reservoir(const ReservoirSpec& spec, std::uint64_t seed) {
  spec.validate();
  constexpr std::uint32_t kAttempts = 5;
  for (std::uint32_t attempt = 0; attempt < kAttempts; ++attempt) {
    Rng rng(StreamKey{seed, 0, StreamRole::ReservoirBuild, attempt});
    SparseMatrix a = random_adjacency(spec, rng);
    const double radius = spectral_radius(a);
    if (!(radius > 0.0)) continue;
    a *= spec.spectral_radius / radius;

    ReservoirMatrices mats;
    mats.adjacency = std::move(a);
    mats.input_dim = spec.input_dim;
    // Balanced fan-in: input i feeds nodes/M nodes, the first (nodes mod M)
    // inputs one more; assignment order is shuffled.
    mats.input_index.resize(spec.nodes);
    for (std::size_t node = 0; node < spec.nodes; ++node) mats.input_index[node] = node % spec.input_dim;
    std::shuffle(mats.input_index.begin(), mats.input_index.end(), rng.engine());
    mats.input_weight.resize(static_cast<Eigen::Index>(spec.nodes));
    for (Eigen::Index n = 0; n < mats.input_weight.size(); ++n)
      mats.input_weight[n] = rng.uniform(-spec.input_scale, spec.input_scale);
    return mats;
  }
  throw NumericalError("build_reservoir: adjacency matrix degenerate after 5 attempts");
}

namespace {

// Vectorised through exp; absolute error stays below 1e-15 and exp overflow
// saturates to +-1.
template <typename Derived>
typename Derived::PlainObject fast_tanh(const Eigen::MatrixBase<Derived>& x) {
  return (1.0 - 2.0 / ((2.0 * x.array()).exp() + 1.0)).matrix();
}

}  // namespace

Vector reservoir_step(const Vector& r, const Vector& u, const ReservoirMatrices& mats) {
  if (static_cast<std::size_t>(r.size()) != mats.nodes()) throw ConfigError("reservoir state dimension mismatch");
  Vector pre = mats.adjacency * r;
  pre += mats.drive_input(u);
  return fast_tanh(pre);
}

Matrix reservoir_step(const Matrix& r, const Matrix& u, const ReservoirMatrices& mats) {
  if (static_cast<std::size_t>(r.rows()) != mats.nodes() || r.cols() != u.cols())
    throw ConfigError("reservoir batch dimension mismatch");
  Matrix pre = mats.drive_input(u);
  for (Eigen::Index k = 0; k < r.cols(); ++k) pre.col(k) += mats.adjacency * r.col(k);
  return fast_tanh(pre);
}

std::vector<Vector> drive(const Vector& r0, const StateSeries& inputs, const ReservoirMatrices& mats) {
  std::vector<Vector> out;
  out.reserve(inputs.size() + 1);
  out.push_back(r0);
  for (const auto& u : inputs) out.push_back(reservoir_step(out.back(), u, mats));
  return out;
}

ReadoutMatrix ReadoutMatrix::pass_through(std::size_t nodes, std::size_t state_dim) {
  ReadoutMatrix w;
  const auto n = static_cast<Eigen::Index>(nodes);
  const auto d = static_cast<Eigen::Index>(state_dim);
  w.weights = Matrix::Zero(d, n + d);
  w.weights.rightCols(d).setIdentity();
  return w;
}

RidgeAccumulator::RidgeAccumulator(std::size_t feature_dim, std::size_t target_dim)
    : gram_(Matrix::Zero(static_cast<Eigen::Index>(feature_dim), static_cast<Eigen::Index>(feature_dim))),
      cross_(Matrix::Zero(static_cast<Eigen::Index>(target_dim), static_cast<Eigen::Index>(feature_dim))) {}

void RidgeAccumulator::add(const Matrix& features, const Matrix& targets) {
  if (features.rows() != gram_.rows() || targets.rows() != cross_.rows() || features.cols() != targets.cols())
    throw ConfigError("ridge accumulator: dimension mismatch");
  gram_.selfadjointView<Eigen::Lower>().rankUpdate(features);
  cross_.noalias() += targets * features.transpose();
  samples_ += static_cast<std::size_t>(features.cols());
}

void RidgeAccumulator::add(const Vector& feature, const Vector& target) {
  if (feature.size() != gram_.rows() || target.size() != cross_.rows())
    throw ConfigError("ridge accumulator: dimension mismatch");
  gram_.selfadjointView<Eigen::Lower>().rankUpdate(feature);
  cross_.noalias() += target * feature.transpose();
  ++samples_;
}

Matrix RidgeAccumulator::solve(double beta) const {
  if (samples_ == 0) throw ConfigError("fit_readout needs at least one sample");
  if (!(beta >= 0.0)) throw ConfigError("ridge parameter beta must be nonnegative");
  Matrix g = gram_.selfadjointView<Eigen::Lower>();
  g.diagonal().array() += beta;
  Eigen::LLT<Matrix> llt(g);
  bool singular = llt.info() != Eigen::Success;
  if (!singular && beta == 0.0) {
    // Pivot ratio 1e-7 corresponds to a condition number of about 1e14.
    const Vector diag = llt.matrixLLT().diagonal();
    singular = diag.minCoeff() <= 1e-7 * diag.maxCoeff();
  }
  if (singular)
    throw NumericalError(beta == 0.0 ? "fit_readout: normal matrix is singular; use beta > 0"
                                     : "fit_readout: normal matrix is not positive definite");
  // W G = C  <=>  G W^T = C^T (G symmetric)
  return llt.solve(cross_.transpose()).transpose();
}

ReadoutMatrix fit_readout(const Matrix& features, const Matrix& targets, double beta) {
  if (features.cols() == 0) throw ConfigError("fit_readout needs at least one sample");
  RidgeAccumulator acc(static_cast<std::size_t>(features.rows()), static_cast<std::size_t>(targets.rows()));
  acc.add(features, targets);
  return ReadoutMatrix{acc.solve(beta), beta};
}

Vector hybrid_readout(const ReadoutMatrix& w, const Vector& r, const Vector& xm) {
  if (static_cast<std::size_t>(r.size()) != w.nodes() || static_cast<std::size_t>(xm.size()) != w.state_dim())
    throw ConfigError("hybrid_readout: dimension mismatch");
  const auto n = r.size();
  return w.weights.leftCols(n) * r + w.weights.rightCols(xm.size()) * xm;
}

Matrix hybrid_readout(const ReadoutMatrix& w, const Matrix& r, const Matrix& xm) {
  if (static_cast<std::size_t>(r.rows()) != w.nodes() || static_cast<std::size_t>(xm.rows()) != w.state_dim() ||
      r.cols() != xm.cols())
    throw ConfigError("hybrid_readout: dimension mismatch");
  Matrix out = w.weights.leftCols(r.rows()) * r;
  out.noalias() += w.weights.rightCols(xm.rows()) * xm;
  return out;
}

double ridge_objective(const Matrix& w, const Matrix& features, const Matrix& targets, double beta) {
  return (w * features - targets).squaredNorm() + beta * w.squaredNorm();
}

}  // namespace mlda
