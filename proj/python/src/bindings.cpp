#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mlda/harness.hpp"

namespace py = pybind11;
using namespace mlda;

namespace {

// Rows are time steps on the Python side.
Matrix rows_of(const StateSeries& s) { return s.empty() ? Matrix() : Matrix(to_columns(s).transpose()); }
StateSeries series_from_rows(const Matrix& m) { return from_columns(m.transpose()); }

ModelPtr model_for(const std::string& system, double epsilon, double length, std::size_t grid) {
  if (system_from_string(system) == System::Lorenz) {
    LorenzParams p;
    p.epsilon = epsilon;
    return make_lorenz(p);
  }
  KSParams p;
  p.length = length;
  p.grid = grid;
  p.epsilon = epsilon;
  return make_ks(p);
}

ExperimentConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return ExperimentConfig::from_json(j);
}

py::dict box_dict(const BoxStats& b) {
  py::dict d;
  d["median"] = b.median;
  d["p25"] = b.p25;
  d["p75"] = b.p75;
  d["p5"] = b.p5;
  d["p95"] = b.p95;
  d["n"] = b.n;
  return d;
}

}  // namespace

PYBIND11_MODULE(_mlda, m) {
  m.doc() = "Core routines of the mlda library";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const Error& e) {
      PyErr_SetString(PyExc_RuntimeError, e.what());
    }
  });

  m.def(
      "simulate",
      [](const std::string& system, const Vector& x0, std::size_t steps, double epsilon, double length) {
        const ModelPtr model = model_for(system, epsilon, length, static_cast<std::size_t>(x0.size()));
        return rows_of(simulate(*model, x0, steps));
      },
      py::arg("system"), py::arg("x0"), py::arg("steps"), py::arg("epsilon") = 0.0, py::arg("length") = 35.0,
      "Trajectory x0, G(x0), ..., G^steps(x0) as a (steps+1, n) array.");

  m.def(
      "lorenz_rhs",
      [](const Vector& x, double epsilon) {
        LorenzParams p;
        p.epsilon = epsilon;
        return lorenz_rhs(x, p);
      },
      py::arg("x"), py::arg("epsilon") = 0.0);

  m.def(
      "largest_lyapunov",
      [](const std::string& system, double epsilon, std::size_t steps, std::size_t spinup, std::size_t blocks,
         std::uint64_t seed, std::size_t grid, double length) {
        const ModelPtr model = model_for(system, epsilon, length, grid);
        LyapunovOptions opts;
        opts.steps = steps;
        opts.spinup_steps = spinup;
        opts.blocks = blocks;
        opts.seed = seed;
        opts.tolerance = 1.0;
        const auto est = largest_lyapunov(*model, opts);
        return py::make_tuple(est.value, est.standard_error);
      },
      py::arg("system"), py::arg("epsilon") = 0.0, py::arg("steps") = 100000, py::arg("spinup") = 5000,
      py::arg("blocks") = 50, py::arg("seed") = 1, py::arg("grid") = 64, py::arg("length") = 35.0,
      "Returns (exponent, standard error).");

  m.def(
      "etkf_analysis",
      [](const Matrix& members, const Vector& y, const std::vector<std::size_t>& observed, double sigma, double rho) {
        const DAConfig cfg{rho, MeasurementOperator(static_cast<std::size_t>(members.rows()), observed),
                           NoiseModel{sigma}};
        return etkf_analysis(Ensemble(members), y, cfg).members;
      },
      py::arg("members"), py::arg("y"), py::arg("observed"), py::arg("sigma"), py::arg("rho") = 1.0,
      "One analysis step. `members` is (n, E), one member per column.");

  m.def(
      "assimilate",
      [](const std::string& system, const Matrix& measurements, const std::vector<std::size_t>& observed,
         const Matrix& init_members, double sigma, double rho, double epsilon, double length) {
        const ModelPtr model = model_for(system, epsilon, length, static_cast<std::size_t>(init_members.rows()));
        const DAConfig cfg{rho, MeasurementOperator(model->dim(), observed), NoiseModel{sigma}};
        std::vector<MeasurementRecord> recs;
        for (Eigen::Index j = 0; j < measurements.rows(); ++j)
          recs.push_back({static_cast<long>(j), Vector(measurements.row(j).transpose())});
        return rows_of(run_da(*model, recs, cfg, Ensemble(init_members)).means);
      },
      py::arg("system"), py::arg("measurements"), py::arg("observed"), py::arg("init_members"), py::arg("sigma"),
      py::arg("rho") = 1.0, py::arg("epsilon") = 0.0, py::arg("length") = 35.0,
      "ETKF cycling; returns the analysis means, one row per measurement.");

  m.def(
      "normalized_rms",
      [](const Matrix& forecast, const Matrix& truth) {
        return normalized_rms(series_from_rows(forecast), series_from_rows(truth));
      },
      py::arg("forecast"), py::arg("truth"));

  m.def(
      "valid_time",
      [](const std::vector<double>& errors, double kappa, double lambda_max, double delta_t) {
        const ValidTime v = valid_time(errors, kappa, lambda_max, delta_t);
        py::dict d;
        d["value"] = v.value;
        d["steps"] = v.steps;
        d["censored"] = v.censored;
        return d;
      },
      py::arg("errors"), py::arg("kappa"), py::arg("lambda_max"), py::arg("delta_t"));

  m.def("box_stats", [](const std::vector<double>& s) { return box_dict(box_stats(s)); }, py::arg("samples"));

  m.def(
      "canonical_config", [](const std::string& text) { return parse_config(text).to_json().dump(); },
      py::arg("config_json"), "Validates a config and returns it with every default filled in.");

  m.def(
      "run_experiment",
      [](const std::string& text) {
        const ExperimentConfig cfg = parse_config(text);
        RunResult r;
        {
          py::gil_scoped_release release;
          r = run_experiment(cfg);
        }
        return results_to_json({r}).dump();
      },
      py::arg("config_json"));

  m.def(
      "sweep",
      [](const std::string& text, const std::string& parameter, const std::vector<double>& values) {
        const ExperimentConfig cfg = parse_config(text);
        const SweepParameter p = sweep_parameter_from_string(parameter);
        std::vector<RunResult> r;
        {
          py::gil_scoped_release release;
          r = sweep(cfg, p, values);
        }
        return results_to_json(r).dump();
      },
      py::arg("config_json"), py::arg("parameter"), py::arg("values"));

  m.def(
      "replica_forecasts",
      [](const std::string& text, std::size_t replica, double rho) {
        const ExperimentConfig cfg = parse_config(text);
        const ReplicaData data = make_replica_data(cfg, replica);
        const ModelPtr model = cfg.knowledge_model();
        const TrainingOptions train = cfg.training();
        const DAConfig da{rho, cfg.measurement_operator(), NoiseModel{cfg.sigma_noise}};
        const AnalysisSeries analysis = run_da(*model, data.measurements, da, data.init);
        const TrainedHybrid hybrid = train_readout(analysis, model, data.reservoir, data.r_init, train);
        const Forecast ml = predict_hybrid(hybrid, cfg.forecast_steps);
        const Forecast base = baseline_forecast(*model, analysis.means.back(), cfg.forecast_steps);
        const auto window = static_cast<std::ptrdiff_t>(train.window());
        py::dict d;
        d["window_truth"] = rows_of(StateSeries(data.truth.begin(), data.truth.begin() + window));
        d["analysis"] = rows_of(analysis.means);
        d["truth"] = rows_of(StateSeries(data.truth.begin() + window, data.truth.end()));
        d["baseline"] = rows_of(base.states);
        d["hybrid"] = rows_of(ml.states);
        d["readout"] = hybrid.readout.weights;
        return d;
      },
      py::arg("config_json"), py::arg("replica") = 0, py::arg("rho") = 1.0,
      "Truth, analyses and both forecasts of one replica at one inflation.");
}
