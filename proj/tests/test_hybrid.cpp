#include <cmath>

#include "doctest.h"
#include "mlda/hybrid.hpp"
#include "mlda/rng.hpp"

using namespace mlda;

namespace {

struct LorenzSetup {
  ModelPtr truth_model = make_lorenz(LorenzParams{});
  ModelPtr model;
  MeasurementOperator h{3, {0}};
  TrainingOptions opts;
  StateSeries truth;  // window followed by the forecast interval
  std::vector<MeasurementRecord> meas;
  Ensemble init;

  LorenzSetup(double eps, std::size_t t, std::size_t ts, std::size_t horizon = 0, std::uint64_t seed = 1) {
    LorenzParams p;
    p.epsilon = eps;
    model = make_lorenz(p);
    opts.train_steps = t;
    opts.sync_steps = ts;
    Rng rng(seed);
    auto spin = simulate(*truth_model, rng.normal_vector(3, 5.0), 2000);
    truth = simulate(*truth_model, spin.back(), opts.window() - 1 + horizon);
    const StateSeries window(truth.begin(), truth.begin() + static_cast<std::ptrdiff_t>(opts.window()));
    meas = observe_series(window, h, NoiseModel{0.1}, seed + 100, -static_cast<long>(t + ts));
    init = perturbed_ensemble(truth.front(), 15, 1.0, seed + 200);
  }

  DAConfig da(double rho = 1.1) const { return DAConfig{rho, h, NoiseModel{0.1}}; }
};

double one_step_rms(const TrainedHybrid& hy, const ReadoutMatrix& w, const TrainingOptions& opts) {
  double sq = 0.0;
  std::size_t n = 0;
  for_each_training_sample(hy.analysis, *hy.model, hy.reservoir, hy.r_init, opts,
                           [&](long, const Vector& r, const Vector& xm, const Vector& target) {
                             sq += (hybrid_readout(w, r, xm) - target).squaredNorm();
                             ++n;
                           });
  return std::sqrt(sq / static_cast<double>(n));
}

}  // namespace

TEST_SUITE("hybrid") {
  TEST_CASE("training sample alignment") {
    const LorenzSetup s(0.1, 300, 50);
    const AnalysisSeries a = run_da(*s.model, s.meas, s.da(), s.init);
    REQUIRE(a.first_index == -350);
    REQUIRE(a.last_index() == 0);
    const ReservoirMatrices res = build_reservoir(ReservoirSpec{90, 3.0, 0.9, 0.1, 3}, 2);
    const Vector r_init = Vector::Constant(90, 0.1);
    // Reference reservoir trajectory: r at index j is driven by x^a up to j-1.
    std::vector<Vector> r_at{r_init};
    for (std::size_t p = 0; p + 1 < a.size(); ++p) r_at.push_back(reservoir_step(r_at.back(), a.means[p], res));

    long expected = -299;
    std::size_t count = 0;
    const Vector r0 = for_each_training_sample(
        a, *s.model, res, r_init, s.opts, [&](long idx, const Vector& r, const Vector& xm, const Vector& target) {
          CHECK(idx == expected);
          CHECK(idx >= -299);
          CHECK(idx <= 0);
          const auto p = static_cast<std::size_t>(idx - a.first_index);
          CHECK(target == a.means[p]);
          CHECK(xm == s.model->advance(a.means[p - 1]));
          CHECK(r == r_at[p]);
          ++expected;
          ++count;
        });
    CHECK(count == 300);
    CHECK(r0 == r_at.back());
  }

  TEST_CASE("window too short") {
    const LorenzSetup s(0.1, 300, 50);
    TrainingOptions longer = s.opts;
    longer.train_steps = 400;
    CHECK_THROWS_AS(train_ml_da(s.meas, s.model, ReservoirSpec{90, 3.0, 0.9, 0.1, 3}, s.da(), s.init, longer, {}),
                    ConfigError);
  }

  TEST_CASE("training beats the knowledge model on its own targets") {
    const LorenzSetup s(0.1, 5000, 100);
    const TrainedHybrid hy = train_ml_da(s.meas, s.model, ReservoirSpec::lorenz(), s.da(1.2), s.init, s.opts, {3, 4});
    const auto pass = ReadoutMatrix::pass_through(1000, 3);
    const double fitted = one_step_rms(hy, hy.readout, s.opts);
    const double model_only = one_step_rms(hy, pass, s.opts);
    // Part of the residual is analysis noise, which no readout can remove;
    // the perfect-model case below stays near 0.99.
    CHECK(fitted < 0.9 * model_only);
  }

  TEST_CASE("perfect model gives a near pass-through readout") {
    const LorenzSetup s(0.0, 5000, 100);
    const TrainedHybrid hy = train_ml_da(s.meas, s.model, ReservoirSpec::lorenz(), s.da(1.05), s.init, s.opts, {3, 4});
    const auto pass = ReadoutMatrix::pass_through(1000, 3);
    const double fitted = one_step_rms(hy, hy.readout, s.opts);
    const double model_only = one_step_rms(hy, pass, s.opts);
    CHECK(fitted <= model_only);
    CHECK(fitted > 0.95 * model_only);
    // The model block of the readout stays close to the identity.
    CHECK((hy.readout.weights.rightCols(3) - Matrix::Identity(3, 3)).norm() < 0.1);
  }

  TEST_CASE("pass-through readout reproduces the baseline forecast") {
    const LorenzSetup s(0.1, 300, 50);
    TrainedHybrid hy = train_ml_da(s.meas, s.model, ReservoirSpec{90, 3.0, 0.9, 0.1, 3}, s.da(), s.init, s.opts, {});
    hy.readout = ReadoutMatrix::pass_through(90, 3);
    const Forecast f = predict_hybrid(hy, 300);
    const Forecast b = baseline_forecast(*s.model, hy.xa_final, 300);
    REQUIRE(f.states.size() == 300);
    REQUIRE(b.states.size() == 300);
    for (std::size_t j = 0; j < 300; ++j) CHECK(f.states[j] == b.states[j]);
    CHECK(predict_hybrid(hy, 0).states.empty());
    CHECK(baseline_forecast(*s.model, hy.xa_final, 0).states.empty());
  }

  TEST_CASE("baseline forecast") {
    const LorenzSetup s(0.0, 10, 0, 200);
    const Vector x0 = s.truth[10];
    const Forecast b = baseline_forecast(*s.truth_model, x0, 200);
    const auto sim = simulate(*s.truth_model, x0, 200);
    for (std::size_t j = 0; j < 200; ++j) {
      CHECK(b.states[j] == sim[j + 1]);
      CHECK(b.states[j] == s.truth[11 + j]);
    }
    CHECK_FALSE(b.diverged);
  }

  TEST_CASE("diverging forecast is truncated and flagged") {
    TrainedHybrid hy;
    hy.model = make_lorenz(LorenzParams{});
    hy.reservoir = build_reservoir(ReservoirSpec{30, 3.0, 0.9, 0.1, 3}, 1);
    hy.readout = ReadoutMatrix::pass_through(30, 3);
    hy.readout.weights.rightCols(3) *= 10.0;  // explosive feedback
    hy.r_final = Vector::Zero(30);
    hy.xa_final = (Vector(3) << 1, 1, 1).finished();
    const Forecast f = predict_hybrid(hy, 5000);
    CHECK(f.diverged);
    CHECK(f.states.size() < 5000);
    CHECK_FALSE(f.error.empty());
  }

  TEST_CASE("hybrid forecast tracks all variables") {
    const std::size_t horizon = 400;
    const LorenzSetup s(0.1, 20000, 100, horizon, 7);
    const TrainedHybrid hy = train_ml_da(s.meas, s.model, ReservoirSpec::lorenz(), s.da(1.2), s.init, s.opts, {5, 6});
    const Forecast f = predict_hybrid(hy, horizon);
    const Forecast b = baseline_forecast(*s.model, hy.xa_final, horizon);
    REQUIRE(f.states.size() == horizon);
    // About 2 Lyapunov times: each variable within half its spread.
    const std::size_t offset = s.opts.window();
    double hybrid_worst = 0.0, baseline_worst = 0.0;
    for (std::size_t j = 0; j < 220; ++j) {
      const Vector& x = s.truth[offset + j];
      hybrid_worst = std::max(hybrid_worst, ((f.states[j] - x).array().abs() / Eigen::Array3d(7.9, 8.9, 8.6)).maxCoeff());
      baseline_worst = std::max(baseline_worst, ((b.states[j] - x).array().abs() / Eigen::Array3d(7.9, 8.9, 8.6)).maxCoeff());
    }
    CHECK(hybrid_worst < 0.5);
    CHECK(hybrid_worst < 0.5 * baseline_worst);
  }

  TEST_CASE("member forecaster keeps members isolated") {
    const auto model = make_lorenz(LorenzParams{});
    const ReservoirMatrices res = build_reservoir(ReservoirSpec{60, 3.0, 0.9, 0.1, 3}, 3);
    Rng rng(2);
    const ReadoutMatrix w{Matrix(Matrix::Random(3, 63) * 0.01 + ReadoutMatrix::pass_through(60, 3).weights), 0.0};
    Ensemble a(Matrix::Random(3, 6) * 5.0);
    a.reservoir = Matrix::Random(60, 6) * 0.5;
    const auto f = make_member_forecaster(model, res, &w);
    const Ensemble b1 = f(a, 1);
    Ensemble a2 = a;
    a2.members.col(2) += Vector::Constant(3, 0.5);
    const Ensemble b2 = f(a2, 1);
    for (Eigen::Index k = 0; k < 6; ++k) {
      if (k == 2) {
        CHECK(b1.reservoir->col(k) != b2.reservoir->col(k));
        continue;
      }
      CHECK(b1.reservoir->col(k) == b2.reservoir->col(k));
      CHECK(b1.members.col(k) == b2.members.col(k));
    }
    // Member k: r' = tanh(A r + W_in x), x' = W_out [r'; G(x)].
    const Vector r1 = reservoir_step(Vector(a.reservoir->col(1)), Vector(a.members.col(1)), res);
    CHECK((b1.reservoir->col(1) - r1).norm() < 1e-13);
    CHECK((b1.members.col(1) - hybrid_readout(w, r1, model->advance(a.members.col(1)))).norm() < 1e-12);
    Ensemble plain(Matrix::Random(3, 2));
    CHECK_THROWS_AS(f(plain, 0), ConfigError);
  }

  TEST_CASE("iterated ML-DA bookkeeping") {
    const LorenzSetup s(0.1, 600, 50);
    const ReservoirSpec spec{120, 3.0, 0.9, 0.1, 3};
    const TrainedHybrid prior = train_ml_da(s.meas, s.model, spec, s.da(), s.init, s.opts, {1, 2});
    CHECK(iterate_ml_da(s.meas, prior, s.da(), s.init, s.opts, IterateOptions{0, nullptr}).empty());

    const StateSeries window(s.truth.begin(), s.truth.begin() + static_cast<std::ptrdiff_t>(s.opts.window()));
    const auto recs = iterate_ml_da(s.meas, prior, s.da(), s.init, s.opts, IterateOptions{2, &window});
    REQUIRE(recs.size() == 2);
    const AnalysisSeries knowledge = run_da(*s.model, s.meas, s.da(), s.init);
    for (const auto& rec : recs) {
      CHECK(rec.iteration >= 1);
      REQUIRE(rec.errors.has_value());
      CHECK(rec.retrained.analysis.size() == s.opts.window());
      CHECK(rec.retrained.analysis.first_index == -650);
      // The synchronisation segment is knowledge-model DA, shared by all iterations.
      for (std::size_t j = 0; j < 50; ++j) CHECK(rec.retrained.analysis.means[j] == knowledge.means[j]);
      CHECK(rec.retrained.r_init == prior.r_init);
    }
    const auto again = iterate_ml_da(s.meas, prior, s.da(), s.init, s.opts, IterateOptions{2, &window});
    CHECK(again[1].retrained.readout.weights == recs[1].retrained.readout.weights);
  }

  TEST_CASE("forecast start past the window") {
    const LorenzSetup s(0.1, 600, 50, 20);
    const ReservoirSpec spec{120, 3.0, 0.9, 0.1, 3};
    const TrainedHybrid h = train_ml_da(s.meas, s.model, spec, s.da(), s.init, s.opts, {1, 2});
    CHECK(advance_forecast_start(h, s.init, {}, s.da()).r_final == h.r_final);
    const StateSeries later_truth(s.truth.begin() + static_cast<std::ptrdiff_t>(s.opts.window()), s.truth.end());
    const auto later = observe_series(later_truth, s.h, NoiseModel{0.1}, 9, 1);
    const AnalysisSeries a = run_da(*s.model, s.meas, s.da(), s.init);
    const TrainedHybrid moved = advance_forecast_start(h, a.final_ensemble, later, s.da());
    CHECK(moved.readout.weights == h.readout.weights);
    // Reference: hybrid DA over indices 1..J, reservoir driven by x^a_0..x^a_{J-1}.
    Ensemble aug = a.final_ensemble;
    aug.reservoir = h.r_final.replicate(1, 15);
    const auto fc = make_member_forecaster(h.model, h.reservoir, &h.readout);
    const AnalysisSeries ahead = run_da(fc, later, s.da(), fc(aug, 1));
    CHECK(moved.xa_final == ahead.means.back());
    Vector r = h.r_final;
    r = reservoir_step(r, h.xa_final, h.reservoir);
    for (std::size_t j = 0; j + 1 < ahead.size(); ++j) r = reservoir_step(r, ahead.means[j], h.reservoir);
    CHECK((moved.r_final - r).norm() < 1e-12);
    CHECK((moved.xa_final - later_truth.back()).norm() < 2.0);
  }
}
