#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "mlda/hybrid.hpp"

namespace mlda {

enum class System { Lorenz, KS };
std::string to_string(System s);
System system_from_string(const std::string& s);

enum class SweepParameter { Rho, Epsilon, Sigma };
std::string to_string(SweepParameter p);
SweepParameter sweep_parameter_from_string(const std::string& s);

struct SweepSpec {
  SweepParameter parameter = SweepParameter::Rho;
  std::vector<double> values;
};

/// Covariance inflation grid used when a config does not specify one.
std::vector<double> default_rho_grid();

/// Declarative description of one experiment (all replicas). Serialised as
/// JSON with `schema_version`; unknown keys are rejected.
struct ExperimentConfig {
  static constexpr int kSchemaVersion = 1;

  System system = System::Lorenz;
  double epsilon = 0.1;
  double sigma_noise = 0.1;
  /// Measured components (Lorenz). Ignored when `theta` is set.
  std::vector<std::size_t> observed{0};
  /// Number of evenly spaced measured grid points (KS).
  std::optional<std::size_t> theta;
  /// Inflation values; with several values each scheme reports its best.
  std::vector<double> rho = default_rho_grid();
  std::size_t ensemble_size = 15;
  double ensemble_spread = 1.0;
  ReservoirSpec reservoir = ReservoirSpec::lorenz();
  std::optional<double> beta;
  std::size_t train_steps = 20000;
  std::size_t sync_steps = 100;
  std::size_t forecast_steps = 2500;
  /// Steps of the true model discarded before the window starts.
  std::size_t truth_spinup = 2000;
  std::size_t replicas = 100;
  double kappa = 0.9;
  std::uint64_t seed = 20210101;
  /// Iterated ML-DA generations (0 disables).
  std::size_t iterations = 0;
  /// Computed from the true model when unset.
  std::optional<double> lambda_max;
  LorenzParams lorenz;
  KSParams ks;
  /// Worker threads; 0 uses the hardware concurrency.
  std::size_t threads = 0;
  std::string output = "results";
  std::optional<SweepSpec> sweep;

  static ExperimentConfig defaults(System s);
  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;

  MeasurementOperator measurement_operator() const;
  TrainingOptions training() const;
  ModelPtr true_model() const;
  ModelPtr knowledge_model() const;
  std::size_t state_dim() const;
  double delta_t() const;
};

ExperimentConfig load_config(const std::string& path);

/// Deterministic hash of the canonical config JSON (hex).
std::string config_hash(const ExperimentConfig& cfg);

struct SchemeScore {
  /// Analysis iteration that produced the training/initial data.
  int iteration = 0;
  ValidTime valid_time;
  bool diverged = false;
  AnalysisErrors analysis;
};

struct RhoResult {
  double rho = 1.0;
  SchemeScore baseline;
  /// mlda[0]: trained on knowledge-model analyses; mlda[i]: trained on the
  /// analyses of iterated DA generation i.
  std::vector<SchemeScore> mlda;
};

struct ReplicaResult {
  std::size_t replica = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  std::vector<RhoResult> points;
};

/// One line of the summary table.
struct SummaryRow {
  std::string scheme;
  int iteration = 0;
  double rho = 1.0;
  BoxStats valid_time;
  std::size_t censored = 0;
  double analysis_rmse_total = 0.0;  // medians over replicas
  double analysis_rmse_measured = 0.0;
  double analysis_rmse_unmeasured = 0.0;
};

struct RunResult {
  ExperimentConfig config;
  std::string config_hash;
  double lambda_max = 0.0;
  std::string sweep_param = "none";
  double sweep_value = 0.0;
  std::vector<ReplicaResult> replicas;
  std::size_t failures = 0;
  double wall_seconds = 0.0;

  /// Per scheme/iteration the inflation with the highest median valid time
  /// among the configured values.
  double chosen_rho(const std::string& scheme, int iteration = 0) const;
  /// Valid times of successful replicas at a given inflation.
  std::vector<double> valid_times(const std::string& scheme, int iteration, double rho) const;
  std::vector<double> valid_times(const std::string& scheme, int iteration = 0) const;
  double median_valid_time(const std::string& scheme, int iteration = 0) const;
  /// Medians of the analysis errors of iteration `iteration` at `rho`.
  AnalysisErrors median_analysis_errors(int iteration, double rho) const;
  /// Summary at the chosen inflation of every scheme/iteration.
  std::vector<SummaryRow> summary() const;

  nlohmann::json to_json(bool include_timing = true) const;
};

/// Largest Lyapunov exponent of the true model, cached per system settings.
double true_lambda_max(const ExperimentConfig& cfg);

/// Everything one replica needs, generated from the replica's substreams.
struct ReplicaData {
  StateSeries truth;  // indices -T-T_s..P
  std::vector<MeasurementRecord> measurements;
  Ensemble init;
  ReservoirMatrices reservoir;
  Vector r_init;
};

ReplicaData make_replica_data(const ExperimentConfig& cfg, std::size_t replica);

ReplicaResult run_replica(const ExperimentConfig& cfg, std::size_t replica, double lambda_max);

RunResult run_experiment(const ExperimentConfig& cfg);

/// One run_experiment per value; all points share the master seed, so
/// replica r sees the same truth at every point.
std::vector<RunResult> sweep(const ExperimentConfig& cfg, SweepParameter parameter, const std::vector<double>& values);

enum class OutputFormat { Csv, Json };
OutputFormat output_format_from_string(const std::string& s);

/// Long-form rows: one per replica, scheme and sweep point.
void write_rows_csv(const std::vector<RunResult>& results, std::ostream& out);
void write_summary_csv(const std::vector<RunResult>& results, std::ostream& out);
nlohmann::json results_to_json(const std::vector<RunResult>& results, bool include_timing = true);

/// Writes <base>.csv and <base>_summary.csv, or <base>.json. Returns the
/// paths written.
std::vector<std::string> emit(const std::vector<RunResult>& results, OutputFormat format, const std::string& base);

/// Summary tables (one per result) from an emitted JSON document.
std::vector<std::vector<SummaryRow>> load_summaries_json(const std::string& path);
std::vector<std::vector<SummaryRow>> summaries_from_json(const nlohmann::json& j);

bool operator==(const BoxStats& a, const BoxStats& b);
bool operator==(const SummaryRow& a, const SummaryRow& b);

}  // namespace mlda
