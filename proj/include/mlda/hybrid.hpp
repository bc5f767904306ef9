#pragma once

#include <functional>
#include <optional>
#include <string>

#include "mlda/etkf.hpp"
#include "mlda/metrics.hpp"
#include "mlda/reservoir.hpp"

namespace mlda {

/// Window lengths (in sampling intervals) and ridge strength. The
/// measurement window spans indices -T-T_s..0.
struct TrainingOptions {
  std::size_t train_steps = 20000;  // T
  std::size_t sync_steps = 100;     // T_s
  /// Ridge parameter; 1e-6 * T when unset.
  std::optional<double> beta;

  double effective_beta() const { return beta.value_or(1e-6 * static_cast<double>(train_steps)); }
  std::size_t window() const { return train_steps + sync_steps + 1; }
};

/// Reservoir network, learned readout and the state needed to launch a
/// closed-loop forecast from the end of the training window.
struct TrainedHybrid {
  ModelPtr model;
  ReservoirMatrices reservoir;
  ReadoutMatrix readout;
  /// Random reservoir state at the start of the window.
  Vector r_init;
  /// Reservoir state r_0 driven by the analyses up to index -1.
  Vector r_final;
  /// x^a_0.
  Vector xa_final;
  /// Analyses the readout was fit on.
  AnalysisSeries analysis;
};

/// Visits every regression sample of the window: for index j in
/// [-T+1, 0] (relative to the last analysis) the feature is
/// [r_j; G(x^a_{j-1})] and the target x^a_j. Returns r_0.
using SampleVisitor = std::function<void(long index, const Vector& r, const Vector& xm, const Vector& target)>;
Vector for_each_training_sample(const AnalysisSeries& analysis, const Model& model, const ReservoirMatrices& reservoir,
                                const Vector& r_init, const TrainingOptions& opts, const SampleVisitor& visit);

/// Fits W_out on an existing analysis series (train steps 1, 3 and 4).
TrainedHybrid train_readout(const AnalysisSeries& analysis, ModelPtr model, ReservoirMatrices reservoir,
                            Vector r_init, const TrainingOptions& opts);

struct HybridSeeds {
  std::uint64_t reservoir_build = 1;
  std::uint64_t reservoir_init = 2;
};

/// Full ML-DA training: DA over the window with the knowledge model, reservoir
/// construction, readout fit.
TrainedHybrid train_ml_da(const std::vector<MeasurementRecord>& measurements, ModelPtr model,
                          const ReservoirSpec& spec, const DAConfig& da, const Ensemble& init,
                          const TrainingOptions& opts, const HybridSeeds& seeds);

/// A forecast that may have been cut short by a blow-up.
struct Forecast {
  StateSeries states;  // indices 1..states.size()
  bool diverged = false;
  std::string error;
};

/// Closed-loop hybrid forecast of P steps from (r_0, x^a_0).
Forecast predict_hybrid(const TrainedHybrid& h, std::size_t steps);
Forecast predict_hybrid(const TrainedHybrid& h, const Vector& r, const Vector& xa, std::size_t steps);

/// Knowledge-model forecast G^j(x^a_0), j = 1..P.
Forecast baseline_forecast(const Model& model, const Vector& xa0, std::size_t steps);

/// Moves the forecast start J steps past the training window: the readout
/// stays fixed while the hybrid model assimilates `later` (indices 1..J) and
/// the reservoir is driven by the new analyses.
TrainedHybrid advance_forecast_start(const TrainedHybrid& h, const Ensemble& analysis_at_zero,
                                     const std::vector<MeasurementRecord>& later, const DAConfig& da);

/// Background forecaster for augmented members: r^k <- tanh(A r^k + W_in x^{a,k})
/// and x^{b,k} = W_out [r^k; G(x^{a,k})]. With no readout the model forecast is
/// returned directly (synchronisation segment).
EnsembleForecaster make_member_forecaster(ModelPtr model, const ReservoirMatrices& reservoir,
                                          const ReadoutMatrix* readout);

struct IterationRecord {
  /// Generation of the hybrid used as the DA forecast model.
  int iteration = 1;
  /// Readout refit on this iteration's analyses (generation iteration+1).
  TrainedHybrid retrained;
  std::optional<AnalysisErrors> errors;
};

struct IterateOptions {
  std::size_t iterations = 4;
  /// Truth over the window, for the per-iteration analysis errors.
  const StateSeries* truth = nullptr;
};

/// The synchronisation segment: knowledge-model DA over indices
/// -T-T_s..-T-1 with per-member reservoir states. Shared by all iterations.
AnalysisSeries synchronize_members(const std::vector<MeasurementRecord>& measurements, const TrainedHybrid& prior,
                                   const DAConfig& da, const Ensemble& init, const TrainingOptions& opts);

/// Iterated ML-DA: the hybrid of generation i replaces the knowledge model
/// during DA on [-T, 0]; each resulting analysis series trains generation
/// i+1.
std::vector<IterationRecord> iterate_ml_da(const std::vector<MeasurementRecord>& measurements,
                                           const TrainedHybrid& prior, const DAConfig& da, const Ensemble& init,
                                           const TrainingOptions& opts, const IterateOptions& iter);

}  // namespace mlda
