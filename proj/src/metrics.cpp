#include "mlda/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mlda/rng.hpp"

namespace mlda {

std::vector<double> normalized_rms(const StateSeries& forecast, const StateSeries& truth) {
  if (forecast.size() != truth.size()) throw ConfigError("normalized_rms: forecast and truth lengths differ");
  if (truth.empty()) return {};
  double mean_sq = 0.0;
  for (const auto& x : truth) mean_sq += x.squaredNorm();
  mean_sq /= static_cast<double>(truth.size());
  if (!(mean_sq > 0.0)) throw NumericalError("normalized_rms: truth has zero mean square norm");
  const double denom = std::sqrt(mean_sq);
  std::vector<double> e(truth.size());
  for (std::size_t j = 0; j < truth.size(); ++j) {
    if (forecast[j].size() != truth[j].size()) throw ConfigError("normalized_rms: state dimension mismatch");
    e[j] = (forecast[j] - truth[j]).norm() / denom;
  }
  return e;
}

ValidTime valid_time(const std::vector<double>& errors, double kappa, double lambda_max, double delta_t) {
  if (!(lambda_max > 0.0)) throw ConfigError("valid_time requires lambda_max > 0");
  for (std::size_t j = 0; j < errors.size(); ++j) {
    // NaN errors (diverged forecasts) count as exceeding the threshold.
    if (!(errors[j] <= kappa)) {
      const std::size_t steps = j + 1;
      return {lambda_max * static_cast<double>(steps) * delta_t, steps, false};
    }
  }
  return {lambda_max * static_cast<double>(errors.size()) * delta_t, errors.size(), true};
}

LyapunovEstimate largest_lyapunov(const Model& model, const LyapunovOptions& opts) {
  if (opts.steps == 0 || opts.blocks == 0 || opts.steps < opts.blocks)
    throw ConfigError("largest_lyapunov: need steps >= blocks > 0");
  if (!(opts.perturbation > 0.0)) throw ConfigError("largest_lyapunov: perturbation must be positive");
  const auto dim = static_cast<std::size_t>(model.dim());
  Rng rng(StreamKey{opts.seed, 0, StreamRole::Lyapunov, 0});
  Vector x = opts.initial_state.size() > 0 ? opts.initial_state : rng.normal_vector(dim);
  if (static_cast<std::size_t>(x.size()) != dim) throw ConfigError("largest_lyapunov: initial state dimension mismatch");
  for (std::size_t k = 0; k < opts.spinup_steps; ++k) x = model.advance(x);

  Vector dir = rng.normal_vector(dim);
  Vector y = x + opts.perturbation * dir / dir.norm();

  const std::size_t per_block = opts.steps / opts.blocks;
  std::vector<double> block_rate(opts.blocks, 0.0);
  const double dt = model.delta_t();
  for (std::size_t b = 0; b < opts.blocks; ++b) {
    double sum_log = 0.0;
    for (std::size_t k = 0; k < per_block; ++k) {
      x = model.advance(x);
      y = model.advance(y);
      const Vector diff = y - x;
      const double d = diff.norm();
      if (!(d > 0.0) || !std::isfinite(d)) throw NumericalError("largest_lyapunov: perturbation collapsed or diverged");
      sum_log += std::log(d / opts.perturbation);
      y = x + (opts.perturbation / d) * diff;
    }
    block_rate[b] = sum_log / (static_cast<double>(per_block) * dt);
  }
  double mean = 0.0;
  for (double r : block_rate) mean += r;
  mean /= static_cast<double>(opts.blocks);
  double var = 0.0;
  for (double r : block_rate) var += (r - mean) * (r - mean);
  const double se =
      opts.blocks > 1 ? std::sqrt(var / static_cast<double>(opts.blocks - 1) / static_cast<double>(opts.blocks)) : 0.0;
  if (se > opts.tolerance)
    throw NumericalError("largest_lyapunov: standard error above tolerance after the maximum number of steps");
  return {mean, se, per_block * opts.blocks};
}

namespace {

std::vector<std::size_t> subset_indices(VariableSubset subset, const MeasurementOperator& h) {
  switch (subset) {
    case VariableSubset::Measured:
      return h.indices();
    case VariableSubset::Unmeasured:
      return h.unmeasured();
    case VariableSubset::All:
    default: {
      std::vector<std::size_t> all(h.state_dim());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      return all;
    }
  }
}

}  // namespace

double analysis_rms(const StateSeries& analysis, const StateSeries& truth, VariableSubset subset,
                    const MeasurementOperator& h) {
  if (analysis.size() != truth.size() || analysis.empty()) throw ConfigError("analysis_rms: series lengths differ or are empty");
  const auto idx = subset_indices(subset, h);
  if (idx.empty()) throw ConfigError("analysis_rms: empty variable subset");
  double err = 0.0;
  double ref = 0.0;
  for (std::size_t j = 0; j < truth.size(); ++j) {
    if (static_cast<std::size_t>(truth[j].size()) != h.state_dim() || analysis[j].size() != truth[j].size())
      throw ConfigError("analysis_rms: state dimension mismatch");
    for (auto i : idx) {
      const auto ii = static_cast<Eigen::Index>(i);
      const double d = analysis[j][ii] - truth[j][ii];
      err += d * d;
      ref += truth[j][ii] * truth[j][ii];
    }
  }
  if (!(ref > 0.0)) throw NumericalError("analysis_rms: truth has zero norm on the subset");
  return std::sqrt(err / ref);
}

AnalysisErrors analysis_errors(const StateSeries& analysis, const StateSeries& truth, const MeasurementOperator& h) {
  AnalysisErrors out;
  out.total = analysis_rms(analysis, truth, VariableSubset::All, h);
  out.measured = analysis_rms(analysis, truth, VariableSubset::Measured, h);
  out.unmeasured = h.unmeasured().empty() ? std::numeric_limits<double>::quiet_NaN()
                                          : analysis_rms(analysis, truth, VariableSubset::Unmeasured, h);
  return out;
}

double percentile(std::vector<double> samples, double p) {
  if (samples.empty()) throw ConfigError("percentile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("percentile level must lie in [0,1]");
  std::sort(samples.begin(), samples.end());
  const double h = p * static_cast<double>(samples.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, samples.size() - 1);
  return samples[lo] + (h - static_cast<double>(lo)) * (samples[hi] - samples[lo]);
}

BoxStats box_stats(const std::vector<double>& samples) {
  if (samples.empty()) throw ConfigError("box_stats of an empty sample");
  return {percentile(samples, 0.5), percentile(samples, 0.25), percentile(samples, 0.75),
          percentile(samples, 0.05), percentile(samples, 0.95), samples.size()};
}

}  // namespace mlda
