#pragma once

#include <cstdint>
#include <vector>

#include "mlda/dynamics.hpp"
#include "mlda/observation.hpp"

namespace mlda {

/// e_j = |x^f_j - x_j| / sqrt(<|x_j|^2>), average over the forecast window.
std::vector<double> normalized_rms(const StateSeries& forecast, const StateSeries& truth);

struct ValidTime {
  double value = 0.0;   // Lyapunov times
  std::size_t steps = 0;  // j* (or the horizon when censored)
  bool censored = false;
};

/// First j (1-based) with e_j > kappa, reported as lambda_max * j * delta_t.
/// When the threshold is never crossed the horizon is returned, censored.
ValidTime valid_time(const std::vector<double>& errors, double kappa, double lambda_max, double delta_t);

struct LyapunovOptions {
  std::size_t spinup_steps = 5000;
  std::size_t steps = 100000;
  /// Number of blocks for the standard error; steps are split evenly.
  std::size_t blocks = 50;
  double perturbation = 1e-8;
  /// Convergence target on the standard error.
  double tolerance = 0.01;
  std::uint64_t seed = 1;
  /// Initial state; a seeded Gaussian draw when empty.
  Vector initial_state;
};

struct LyapunovEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  std::size_t steps = 0;
};

/// Benettin estimate from a renormalised finite perturbation, one
/// renormalisation per sampling interval.
LyapunovEstimate largest_lyapunov(const Model& model, const LyapunovOptions& opts = {});

enum class VariableSubset { All, Measured, Unmeasured };

/// sqrt(<|x^a - x|^2> / <|x|^2>) over the series with both norms restricted
/// to the selected components.
double analysis_rms(const StateSeries& analysis, const StateSeries& truth, VariableSubset subset,
                    const MeasurementOperator& h);

struct AnalysisErrors {
  double total = 0.0;
  double measured = 0.0;
  double unmeasured = 0.0;  // NaN when every component is measured
};

AnalysisErrors analysis_errors(const StateSeries& analysis, const StateSeries& truth, const MeasurementOperator& h);

struct BoxStats {
  double median = 0.0;
  double p25 = 0.0;
  double p75 = 0.0;
  double p5 = 0.0;
  double p95 = 0.0;
  std::size_t n = 0;
};

/// Linear-interpolation percentile (type 7) of unsorted samples, p in [0,1].
double percentile(std::vector<double> samples, double p);
BoxStats box_stats(const std::vector<double>& samples);

}  // namespace mlda
