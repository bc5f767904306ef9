#pragma once

#include <functional>
#include <optional>

#include "mlda/dynamics.hpp"
#include "mlda/observation.hpp"

namespace mlda {

/// Ensemble of E states stored as the columns of `members`. In iterated
/// ML-DA each member also carries a reservoir state (column of
/// `reservoir`).
struct Ensemble {
  Matrix members;
  std::optional<Matrix> reservoir;

  Ensemble() = default;
  explicit Ensemble(Matrix m) : members(std::move(m)) {}

  std::size_t size() const { return static_cast<std::size_t>(members.cols()); }
  std::size_t dim() const { return static_cast<std::size_t>(members.rows()); }
  Vector mean() const;
  /// Columns minus the ensemble mean.
  Matrix deviations() const;
  /// Sample covariance with the (E-1) normalisation.
  Matrix covariance() const;
};

struct DAConfig {
  double rho = 1.0;
  MeasurementOperator h;
  NoiseModel noise;

  void validate() const;
};

/// Time-indexed analysis means; ensembles are kept when requested.
struct AnalysisSeries {
  long first_index = 0;
  StateSeries means;
  std::vector<Matrix> ensembles;
  /// Analysis ensemble at the last assimilated time.
  Ensemble final_ensemble;

  std::size_t size() const { return means.size(); }
  long last_index() const { return first_index + static_cast<long>(means.size()) - 1; }
  const Vector& at(long index) const { return means.at(static_cast<std::size_t>(index - first_index)); }
};

/// Each member advanced independently by one sampling interval.
Ensemble forecast_ensemble(const Model& model, const Ensemble& ensemble);

/// One ETKF analysis:
///   X^b = deviations, Y^b = H X^b,
///   P~ = [(E-1) I / rho + C Y^b]^{-1},  C = (Y^b)^T R^{-1},
///   W = [(E-1) P~]^{1/2} (symmetric), w_bar = P~ C (y - H x_bar^b),
///   x^{a,k} = X^b (W_k + w_bar) + x_bar^b.
/// Reservoir states, if present, are copied through unchanged.
Ensemble etkf_analysis(const Ensemble& background, const Vector& y, const DAConfig& cfg);

/// Maps the analysis ensemble at time j-1 to the background at `target_index`.
using EnsembleForecaster = std::function<Ensemble(const Ensemble& analysis, long target_index)>;

struct RunDAOptions {
  bool keep_ensembles = false;
};

/// Forecast/analysis cycling. `init` is the background at the time of the
/// first measurement; every later background comes from `forecast`.
AnalysisSeries run_da(const EnsembleForecaster& forecast, const std::vector<MeasurementRecord>& measurements,
                      const DAConfig& cfg, const Ensemble& init, RunDAOptions opts = {});

AnalysisSeries run_da(const Model& model, const std::vector<MeasurementRecord>& measurements, const DAConfig& cfg,
                      const Ensemble& init, RunDAOptions opts = {});

/// Members centre + N(0, spread^2) perturbations.
Ensemble perturbed_ensemble(const Vector& centre, std::size_t members, double spread, std::uint64_t seed);

}  // namespace mlda
