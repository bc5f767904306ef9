#include "mlda/hybrid.hpp"

#include <string>

#include "mlda/rng.hpp"

namespace mlda {
namespace {

constexpr Eigen::Index kRidgeBlock = 256;

std::size_t window_offset(std::size_t available, const TrainingOptions& opts, const char* what) {
  if (opts.train_steps == 0) throw ConfigError(std::string(what) + ": train_steps must be positive");
  if (available < opts.window())
    throw ConfigError(std::string(what) + ": window needs at least T + T_s + 1 = " + std::to_string(opts.window()) +
                      " entries, got " + std::to_string(available));
  return available - opts.window();
}

Vector random_reservoir_state(std::size_t nodes, std::uint64_t seed) {
  Rng rng(seed);
  Vector r(static_cast<Eigen::Index>(nodes));
  for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = rng.uniform(-1.0, 1.0);
  return r;
}

}  // namespace

Vector for_each_training_sample(const AnalysisSeries& analysis, const Model& model, const ReservoirMatrices& reservoir,
                                const Vector& r_init, const TrainingOptions& opts, const SampleVisitor& visit) {
  const std::size_t n = analysis.size();
  const std::size_t start = window_offset(n, opts, "training");
  const std::size_t first_sample = n - opts.train_steps;
  if (static_cast<std::size_t>(r_init.size()) != reservoir.nodes()) throw ConfigError("training: r_init dimension mismatch");
  Vector r = r_init;
  for (std::size_t p = start; p < n; ++p) {
    if (p >= first_sample) {
      const Vector xm = model.advance(analysis.means[p - 1]);
      visit(analysis.first_index + static_cast<long>(p), r, xm, analysis.means[p]);
    }
    if (p + 1 < n) r = reservoir_step(r, analysis.means[p], reservoir);
  }
  return r;
}

TrainedHybrid train_readout(const AnalysisSeries& analysis, ModelPtr model, ReservoirMatrices reservoir, Vector r_init,
                            const TrainingOptions& opts) {
  if (!model) throw ConfigError("train_readout: missing model");
  const auto nodes = static_cast<Eigen::Index>(reservoir.nodes());
  const auto dim = static_cast<Eigen::Index>(model->dim());
  RidgeAccumulator acc(static_cast<std::size_t>(nodes + dim), static_cast<std::size_t>(dim));
  Matrix features(nodes + dim, kRidgeBlock);
  Matrix targets(dim, kRidgeBlock);
  Eigen::Index filled = 0;
  const auto flush = [&] {
    if (filled == 0) return;
    acc.add(Matrix(features.leftCols(filled)), Matrix(targets.leftCols(filled)));
    filled = 0;
  };
  Vector r_final = for_each_training_sample(
      analysis, *model, reservoir, r_init, opts, [&](long, const Vector& r, const Vector& xm, const Vector& target) {
        features.col(filled).head(nodes) = r;
        features.col(filled).tail(dim) = xm;
        targets.col(filled) = target;
        if (++filled == kRidgeBlock) flush();
      });
  flush();
  const double beta = opts.effective_beta();
  TrainedHybrid h;
  h.readout = ReadoutMatrix{acc.solve(beta), beta};
  if (!h.readout.weights.allFinite()) throw NumericalError("train_readout: non-finite readout");
  h.model = std::move(model);
  h.reservoir = std::move(reservoir);
  h.r_init = std::move(r_init);
  h.r_final = std::move(r_final);
  h.xa_final = analysis.means.back();
  h.analysis = analysis;
  return h;
}

TrainedHybrid train_ml_da(const std::vector<MeasurementRecord>& measurements, ModelPtr model, const ReservoirSpec& spec,
                          const DAConfig& da, const Ensemble& init, const TrainingOptions& opts,
                          const HybridSeeds& seeds) {
  if (!model) throw ConfigError("train_ml_da: missing model");
  window_offset(measurements.size(), opts, "train_ml_da");
  AnalysisSeries analysis = run_da(*model, measurements, da, init);
  ReservoirMatrices reservoir = build_reservoir(spec, seeds.reservoir_build);
  Vector r_init = random_reservoir_state(spec.nodes, seeds.reservoir_init);
  return train_readout(analysis, std::move(model), std::move(reservoir), std::move(r_init), opts);
}

Forecast predict_hybrid(const TrainedHybrid& h, const Vector& r0, const Vector& xa, std::size_t steps) {
  Forecast out;
  if (steps == 0) return out;
  out.states.reserve(steps);
  try {
    Vector r = reservoir_step(r0, xa, h.reservoir);
    Vector xm = h.model->advance(xa);
    for (std::size_t j = 1; j <= steps; ++j) {
      Vector xh = hybrid_readout(h.readout, r, xm);
      if (!xh.allFinite()) throw IntegrationError("hybrid forecast produced a non-finite state");
      if (j < steps) {
        xm = h.model->advance(xh);
        r = reservoir_step(r, xh, h.reservoir);
      }
      out.states.push_back(std::move(xh));
    }
  } catch (const Error& e) {
    out.diverged = true;
    out.error = e.what();
  }
  return out;
}

Forecast predict_hybrid(const TrainedHybrid& h, std::size_t steps) {
  return predict_hybrid(h, h.r_final, h.xa_final, steps);
}

Forecast baseline_forecast(const Model& model, const Vector& xa0, std::size_t steps) {
  Forecast out;
  out.states.reserve(steps);
  try {
    Vector x = xa0;
    for (std::size_t j = 0; j < steps; ++j) {
      x = model.advance(x);
      out.states.push_back(x);
    }
  } catch (const Error& e) {
    out.diverged = true;
    out.error = e.what();
  }
  return out;
}

EnsembleForecaster make_member_forecaster(ModelPtr model, const ReservoirMatrices& reservoir,
                                          const ReadoutMatrix* readout) {
  if (!model) throw ConfigError("member forecaster: missing model");
  std::optional<ReadoutMatrix> w;
  if (readout) w = *readout;
  return [model = std::move(model), reservoir, w = std::move(w)](const Ensemble& a, long target) {
    if (!a.reservoir) throw ConfigError("member forecaster: ensemble has no reservoir states");
    Ensemble b;
    b.reservoir = reservoir_step(*a.reservoir, a.members, reservoir);
    Matrix xm(a.members.rows(), a.members.cols());
    for (Eigen::Index k = 0; k < a.members.cols(); ++k) {
      try {
        xm.col(k) = model->advance(a.members.col(k));
      } catch (const IntegrationError& e) {
        throw IntegrationError("ensemble member " + std::to_string(k) + " at index " + std::to_string(target) + ": " +
                               e.what());
      }
    }
    b.members = w ? hybrid_readout(*w, *b.reservoir, xm) : std::move(xm);
    if (!b.members.allFinite() || !b.reservoir->allFinite())
      throw NumericalError("member forecaster: non-finite background at index " + std::to_string(target));
    return b;
  };
}

TrainedHybrid advance_forecast_start(const TrainedHybrid& h, const Ensemble& analysis_at_zero,
                                     const std::vector<MeasurementRecord>& later, const DAConfig& da) {
  if (later.empty()) return h;
  Ensemble aug = analysis_at_zero;
  aug.reservoir = h.r_final.replicate(1, static_cast<Eigen::Index>(aug.size()));
  const auto forecaster = make_member_forecaster(h.model, h.reservoir, &h.readout);
  const Ensemble background = forecaster(aug, later.front().index);
  const AnalysisSeries ahead = run_da(forecaster, later, da, background);
  TrainedHybrid out = h;
  Vector r = h.r_final;
  Vector prev = h.xa_final;
  for (const auto& m : ahead.means) {
    r = reservoir_step(r, prev, h.reservoir);
    prev = m;
  }
  out.r_final = std::move(r);
  out.xa_final = std::move(prev);
  return out;
}

AnalysisSeries synchronize_members(const std::vector<MeasurementRecord>& measurements, const TrainedHybrid& prior,
                                   const DAConfig& da, const Ensemble& init, const TrainingOptions& opts) {
  const std::size_t offset = window_offset(measurements.size(), opts, "synchronize_members");
  Ensemble aug = init;
  aug.reservoir = prior.r_init.replicate(1, static_cast<Eigen::Index>(init.size()));
  if (opts.sync_steps == 0) {
    AnalysisSeries empty;
    empty.first_index = measurements[offset].index;
    empty.final_ensemble = aug;
    return empty;
  }
  const std::vector<MeasurementRecord> sync(measurements.begin() + static_cast<std::ptrdiff_t>(offset),
                                            measurements.begin() + static_cast<std::ptrdiff_t>(offset + opts.sync_steps));
  return run_da(make_member_forecaster(prior.model, prior.reservoir, nullptr), sync, da, aug);
}

std::vector<IterationRecord> iterate_ml_da(const std::vector<MeasurementRecord>& measurements,
                                           const TrainedHybrid& prior, const DAConfig& da, const Ensemble& init,
                                           const TrainingOptions& opts, const IterateOptions& iter) {
  std::vector<IterationRecord> records;
  if (iter.iterations == 0) return records;
  const std::size_t offset = window_offset(measurements.size(), opts, "iterate_ml_da");
  if (iter.truth && iter.truth->size() != opts.window())
    throw ConfigError("iterate_ml_da: truth must cover exactly the training window");

  // Synchronised member reservoir states are computed once and reused.
  const AnalysisSeries sync = synchronize_members(measurements, prior, da, init, opts);
  const std::vector<MeasurementRecord> main(measurements.begin() + static_cast<std::ptrdiff_t>(offset + opts.sync_steps),
                                            measurements.end());

  const TrainedHybrid* current = &prior;
  records.reserve(iter.iterations);
  for (std::size_t i = 1; i <= iter.iterations; ++i) {
    try {
      const auto forecaster = make_member_forecaster(current->model, current->reservoir, &current->readout);
      const Ensemble background =
          sync.size() > 0 ? forecaster(sync.final_ensemble, main.front().index) : sync.final_ensemble;
      AnalysisSeries hybrid_da = run_da(forecaster, main, da, background);

      AnalysisSeries full;
      full.first_index = sync.size() > 0 ? sync.first_index : hybrid_da.first_index;
      full.means = sync.means;
      full.means.insert(full.means.end(), hybrid_da.means.begin(), hybrid_da.means.end());
      full.final_ensemble = std::move(hybrid_da.final_ensemble);

      IterationRecord rec;
      rec.iteration = static_cast<int>(i);
      rec.retrained = train_readout(full, prior.model, prior.reservoir, prior.r_init, opts);
      if (iter.truth) rec.errors = analysis_errors(rec.retrained.analysis.means, *iter.truth, da.h);
      records.push_back(std::move(rec));
      current = &records.back().retrained;
    } catch (const Error& e) {
      throw NumericalError("iterated ML-DA, iteration " + std::to_string(i) + ": " + e.what());
    }
  }
  return records;
}

}  // namespace mlda
