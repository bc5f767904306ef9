#include "mlda/etkf.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

#include "mlda/rng.hpp"

namespace mlda {

Vector Ensemble::mean() const {
  if (members.cols() == 0) throw ConfigError("empty ensemble");
  Vector m = Vector::Zero(members.rows());
  for (Eigen::Index k = 0; k < members.cols(); ++k) m += members.col(k);
  return m / static_cast<double>(members.cols());
}

Matrix Ensemble::deviations() const {
  const Vector m = mean();
  return members.colwise() - m;
}

Matrix Ensemble::covariance() const {
  if (members.cols() < 2) throw ConfigError("covariance needs at least two members");
  const Matrix d = deviations();
  return (d * d.transpose()) / static_cast<double>(members.cols() - 1);
}

void DAConfig::validate() const {
  if (!(rho >= 1.0) || !std::isfinite(rho)) throw ConfigError("covariance inflation rho must be >= 1");
  noise.validate();
}

Ensemble forecast_ensemble(const Model& model, const Ensemble& ensemble) {
  if (ensemble.dim() != model.dim()) throw ConfigError("forecast_ensemble: model/ensemble dimension mismatch");
  Ensemble out = ensemble;
  for (Eigen::Index k = 0; k < ensemble.members.cols(); ++k) {
    try {
      out.members.col(k) = model.advance(ensemble.members.col(k));
    } catch (const IntegrationError& e) {
      throw IntegrationError("ensemble member " + std::to_string(k) + ": " + e.what());
    }
  }
  return out;
}

Ensemble etkf_analysis(const Ensemble& background, const Vector& y, const DAConfig& cfg) {
  cfg.validate();
  const Eigen::Index e = background.members.cols();
  if (e < 2) throw ConfigError("ETKF needs at least two ensemble members");
  if (background.dim() != cfg.h.state_dim()) throw ConfigError("ETKF: ensemble/operator dimension mismatch");
  if (static_cast<std::size_t>(y.size()) != cfg.h.measured_dim()) throw ConfigError("ETKF: measurement length mismatch");
  if (!(cfg.noise.sigma > 0.0)) throw NumericalError("ETKF: measurement covariance R is singular");

  const Vector xb_mean = background.mean();
  const Matrix xb = background.members.colwise() - xb_mean;
  const Matrix yb = cfg.h.apply(xb);
  const Vector yb_mean = cfg.h.apply(xb_mean);

  const double r_inv = 1.0 / (cfg.noise.sigma * cfg.noise.sigma);
  const Matrix c = yb.transpose() * r_inv;  // E x M
  const double em1 = static_cast<double>(e - 1);

  Matrix s = c * yb;  // E x E
  s.diagonal().array() += em1 / cfg.rho;
  s = 0.5 * (s + s.transpose());

  // P~ = V diag(1/d) V^T; one decomposition serves the inverse and the root.
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  if (eig.info() != Eigen::Success) throw NumericalError("ETKF: eigendecomposition failed");
  const Vector d = eig.eigenvalues();
  if (!(d.minCoeff() > 0.0)) throw NumericalError("ETKF: transform matrix is not positive definite");
  Vector p_eig = d.cwiseInverse();
  const double p_max = p_eig.maxCoeff();
  if (p_eig.minCoeff() < -1e-8 * p_max) throw NumericalError("ETKF: P~ has a negative eigenvalue");
  const double floor = 1e-12 * p_max;
  for (Eigen::Index i = 0; i < p_eig.size(); ++i) p_eig[i] = std::max(p_eig[i], floor);

  const Matrix& v = eig.eigenvectors();
  const Matrix p_tilde = v * p_eig.asDiagonal() * v.transpose();
  const Matrix w = v * (em1 * p_eig).cwiseSqrt().asDiagonal() * v.transpose();
  const Vector w_mean = p_tilde * (c * (y - yb_mean));

  Matrix weights = w.colwise() + w_mean;
  Ensemble out;
  out.members = (xb * weights).colwise() + xb_mean;
  out.reservoir = background.reservoir;
  return out;
}

AnalysisSeries run_da(const EnsembleForecaster& forecast, const std::vector<MeasurementRecord>& measurements,
                      const DAConfig& cfg, const Ensemble& init, RunDAOptions opts) {
  cfg.validate();
  AnalysisSeries out;
  if (measurements.empty()) {
    out.means.push_back(init.mean());
    if (opts.keep_ensembles) out.ensembles.push_back(init.members);
    out.final_ensemble = init;
    return out;
  }
  out.first_index = measurements.front().index;
  out.means.reserve(measurements.size());
  Ensemble current = init;
  for (std::size_t j = 0; j < measurements.size(); ++j) {
    const auto& rec = measurements[j];
    if (j > 0) {
      if (rec.index != measurements[j - 1].index + 1) throw ConfigError("run_da: measurements must be contiguous");
      current = forecast(current, rec.index);
    }
    current = etkf_analysis(current, rec.y, cfg);
    if (!current.members.allFinite())
      throw NumericalError("run_da: non-finite analysis at index " + std::to_string(rec.index));
    out.means.push_back(current.mean());
    if (opts.keep_ensembles) out.ensembles.push_back(current.members);
  }
  out.final_ensemble = std::move(current);
  return out;
}

AnalysisSeries run_da(const Model& model, const std::vector<MeasurementRecord>& measurements, const DAConfig& cfg,
                      const Ensemble& init, RunDAOptions opts) {
  return run_da([&model](const Ensemble& a, long) { return forecast_ensemble(model, a); }, measurements, cfg, init,
                opts);
}

Ensemble perturbed_ensemble(const Vector& centre, std::size_t members, double spread, std::uint64_t seed) {
  if (members < 1) throw ConfigError("ensemble needs at least one member");
  Rng rng(seed);
  Matrix m(centre.size(), static_cast<Eigen::Index>(members));
  for (Eigen::Index k = 0; k < m.cols(); ++k) m.col(k) = centre + rng.normal_vector(static_cast<std::size_t>(centre.size()), spread);
  return Ensemble(std::move(m));
}

}  // namespace mlda
