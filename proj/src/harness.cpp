#include "mlda/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "mlda/rng.hpp"

namespace mlda {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_from(const json& j) {
  if (j.is_null()) return kNaN;
  return j.get<double>();
}

}  // namespace

std::string to_string(System s) { return s == System::Lorenz ? "lorenz" : "ks"; }

System system_from_string(const std::string& s) {
  if (s == "lorenz") return System::Lorenz;
  if (s == "ks") return System::KS;
  throw ConfigError("unknown system '" + s + "' (expected lorenz or ks)");
}

std::string to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::Rho:
      return "rho";
    case SweepParameter::Epsilon:
      return "epsilon";
    case SweepParameter::Sigma:
    default:
      return "sigma";
  }
}

SweepParameter sweep_parameter_from_string(const std::string& s) {
  if (s == "rho") return SweepParameter::Rho;
  if (s == "epsilon") return SweepParameter::Epsilon;
  if (s == "sigma" || s == "sigma_noise") return SweepParameter::Sigma;
  throw ConfigError("unknown sweep parameter '" + s + "' (expected rho, epsilon or sigma)");
}

std::vector<double> default_rho_grid() { return {1.0, 1.01, 1.05, 1.1, 1.2, 1.3, 1.5, 2.0, 3.0}; }

// ---------------------------------------------------------------------------
// Config

ExperimentConfig ExperimentConfig::defaults(System s) {
  ExperimentConfig c;
  c.system = s;
  if (s == System::KS) {
    c.observed.clear();
    c.theta = 16;
    c.ensemble_size = 30;
    c.ensemble_spread = 0.5;
    c.reservoir = ReservoirSpec::ks(c.ks.grid);
    c.train_steps = 10000;
    c.sync_steps = 200;
    c.forecast_steps = 1000;
    c.truth_spinup = 2000;
    c.replicas = 50;
  }
  return c;
}

namespace {

template <typename T>
T take(const json& j, const char* key, const T& fallback) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key)) throw ConfigError("unknown config key '" + key + "' in " + where);
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> allowed = {
      "schema_version", "system",        "epsilon",     "sigma_noise",    "observed",   "theta",
      "rho",            "ensemble_size", "ensemble_spread", "reservoir",  "beta",       "train_steps",
      "sync_steps",     "forecast_steps", "truth_spinup", "replicas",     "kappa",      "seed",
      "iterations",     "lambda_max",    "lorenz",      "ks",             "threads",    "output",
      "sweep"};
  reject_unknown(j, allowed, "config");
  if (!j.contains("schema_version")) throw ConfigError("config is missing schema_version");
  if (take<int>(j, "schema_version", 0) != kSchemaVersion)
    throw ConfigError("unsupported config schema_version (expected " + std::to_string(kSchemaVersion) + ")");

  ExperimentConfig c = defaults(system_from_string(take<std::string>(j, "system", "lorenz")));
  c.epsilon = take(j, "epsilon", c.epsilon);
  c.sigma_noise = take(j, "sigma_noise", c.sigma_noise);
  if (j.contains("observed")) {
    c.observed = take<std::vector<std::size_t>>(j, "observed", {});
    if (!j.contains("theta")) c.theta.reset();
  }
  if (j.contains("theta")) {
    if (j["theta"].is_null())
      c.theta.reset();
    else
      c.theta = take<std::size_t>(j, "theta", 0);
  }
  if (j.contains("rho")) {
    const auto& r = j["rho"];
    c.rho = r.is_array() ? take<std::vector<double>>(j, "rho", {}) : std::vector<double>{take<double>(j, "rho", 1.0)};
  }
  c.ensemble_size = take(j, "ensemble_size", c.ensemble_size);
  c.ensemble_spread = take(j, "ensemble_spread", c.ensemble_spread);
  if (j.contains("reservoir")) {
    const auto& r = j["reservoir"];
    if (!r.is_object()) throw ConfigError("config key 'reservoir' must be an object");
    reject_unknown(r, {"nodes", "mean_degree", "spectral_radius", "input_scale"}, "reservoir");
    c.reservoir.nodes = take(r, "nodes", c.reservoir.nodes);
    c.reservoir.mean_degree = take(r, "mean_degree", c.reservoir.mean_degree);
    c.reservoir.spectral_radius = take(r, "spectral_radius", c.reservoir.spectral_radius);
    c.reservoir.input_scale = take(r, "input_scale", c.reservoir.input_scale);
  }
  if (j.contains("beta")) {
    if (j["beta"].is_null())
      c.beta.reset();
    else
      c.beta = take<double>(j, "beta", 0.0);
  }
  c.train_steps = take(j, "train_steps", c.train_steps);
  c.sync_steps = take(j, "sync_steps", c.sync_steps);
  c.forecast_steps = take(j, "forecast_steps", c.forecast_steps);
  c.truth_spinup = take(j, "truth_spinup", c.truth_spinup);
  c.replicas = take(j, "replicas", c.replicas);
  c.kappa = take(j, "kappa", c.kappa);
  c.seed = take(j, "seed", c.seed);
  c.iterations = take(j, "iterations", c.iterations);
  if (j.contains("lambda_max")) {
    if (j["lambda_max"].is_null())
      c.lambda_max.reset();
    else
      c.lambda_max = take<double>(j, "lambda_max", 0.0);
  }
  if (j.contains("lorenz")) {
    const auto& l = j["lorenz"];
    reject_unknown(l, {"a", "b", "c"}, "lorenz");
    c.lorenz.a = take(l, "a", c.lorenz.a);
    c.lorenz.b = take(l, "b", c.lorenz.b);
    c.lorenz.c = take(l, "c", c.lorenz.c);
  }
  if (j.contains("ks")) {
    const auto& k = j["ks"];
    reject_unknown(k, {"length", "grid"}, "ks");
    c.ks.length = take(k, "length", c.ks.length);
    c.ks.grid = take(k, "grid", c.ks.grid);
  }
  c.threads = take(j, "threads", c.threads);
  c.output = take(j, "output", c.output);
  if (j.contains("sweep") && !j["sweep"].is_null()) {
    const auto& s = j["sweep"];
    reject_unknown(s, {"parameter", "values"}, "sweep");
    SweepSpec spec;
    spec.parameter = sweep_parameter_from_string(take<std::string>(s, "parameter", "rho"));
    spec.values = take<std::vector<double>>(s, "values", {});
    c.sweep = spec;
  }
  c.reservoir.input_dim = c.state_dim();
  c.validate();
  return c;
}

json ExperimentConfig::to_json() const {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["system"] = to_string(system);
  j["epsilon"] = epsilon;
  j["sigma_noise"] = sigma_noise;
  j["observed"] = observed;
  j["theta"] = theta ? json(*theta) : json(nullptr);
  j["rho"] = rho;
  j["ensemble_size"] = ensemble_size;
  j["ensemble_spread"] = ensemble_spread;
  j["reservoir"] = {{"nodes", reservoir.nodes},
                    {"mean_degree", reservoir.mean_degree},
                    {"spectral_radius", reservoir.spectral_radius},
                    {"input_scale", reservoir.input_scale}};
  j["beta"] = beta ? json(*beta) : json(nullptr);
  j["train_steps"] = train_steps;
  j["sync_steps"] = sync_steps;
  j["forecast_steps"] = forecast_steps;
  j["truth_spinup"] = truth_spinup;
  j["replicas"] = replicas;
  j["kappa"] = kappa;
  j["seed"] = seed;
  j["iterations"] = iterations;
  j["lambda_max"] = lambda_max ? json(*lambda_max) : json(nullptr);
  j["lorenz"] = {{"a", lorenz.a}, {"b", lorenz.b}, {"c", lorenz.c}};
  j["ks"] = {{"length", ks.length}, {"grid", ks.grid}};
  j["threads"] = threads;
  j["output"] = output;
  if (sweep)
    j["sweep"] = {{"parameter", to_string(sweep->parameter)}, {"values", sweep->values}};
  else
    j["sweep"] = nullptr;
  return j;
}

std::size_t ExperimentConfig::state_dim() const { return system == System::Lorenz ? 3 : ks.grid; }

double ExperimentConfig::delta_t() const {
  return system == System::Lorenz ? IntegratorConfig::lorenz().delta_t : IntegratorConfig::ks().delta_t;
}

void ExperimentConfig::validate() const {
  if (system == System::Lorenz) {
    LorenzParams p = lorenz;
    p.epsilon = epsilon;
    p.validate();
  } else {
    KSParams p = ks;
    p.epsilon = epsilon;
    p.validate();
  }
  if (!(sigma_noise > 0.0)) throw ConfigError("sigma_noise must be positive");
  if (rho.empty()) throw ConfigError("rho needs at least one value");
  for (double r : rho)
    if (!(r >= 1.0)) throw ConfigError("every rho must be >= 1");
  if (ensemble_size < 2) throw ConfigError("ensemble_size must be at least 2");
  if (!(ensemble_spread >= 0.0)) throw ConfigError("ensemble_spread must be nonnegative");
  if (train_steps == 0 || forecast_steps == 0) throw ConfigError("train_steps and forecast_steps must be positive");
  if (replicas == 0) throw ConfigError("replicas must be at least 1");
  if (!(kappa > 0.0)) throw ConfigError("kappa must be positive");
  if (lambda_max && !(*lambda_max > 0.0)) throw ConfigError("lambda_max must be positive");
  if (beta && !(*beta >= 0.0)) throw ConfigError("beta must be nonnegative");
  ReservoirSpec spec = reservoir;
  spec.input_dim = state_dim();
  spec.validate();
  (void)measurement_operator();
  if (sweep && sweep->values.empty()) throw ConfigError("sweep needs at least one value");
}

MeasurementOperator ExperimentConfig::measurement_operator() const {
  if (theta) return uniform_selector(state_dim(), *theta);
  return MeasurementOperator(state_dim(), observed);
}

TrainingOptions ExperimentConfig::training() const { return TrainingOptions{train_steps, sync_steps, beta}; }

ModelPtr ExperimentConfig::true_model() const {
  if (system == System::Lorenz) {
    LorenzParams p = lorenz;
    p.epsilon = 0.0;
    return make_lorenz(p);
  }
  KSParams p = ks;
  p.epsilon = 0.0;
  return make_ks(p);
}

ModelPtr ExperimentConfig::knowledge_model() const {
  if (system == System::Lorenz) {
    LorenzParams p = lorenz;
    p.epsilon = epsilon;
    return make_lorenz(p);
  }
  KSParams p = ks;
  p.epsilon = epsilon;
  return make_ks(p);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return ExperimentConfig::from_json(j);
}

std::string config_hash(const ExperimentConfig& cfg) {
  // FNV-1a over the canonical dump (nlohmann orders keys).
  const std::string text = cfg.to_json().dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Lyapunov exponent cache

double true_lambda_max(const ExperimentConfig& cfg) {
  if (cfg.lambda_max) return *cfg.lambda_max;
  static std::mutex mutex;
  static std::map<std::string, double> cache;
  json key = {{"system", to_string(cfg.system)}};
  if (cfg.system == System::Lorenz)
    key["params"] = {cfg.lorenz.a, cfg.lorenz.b, cfg.lorenz.c};
  else
    key["params"] = {cfg.ks.length, cfg.ks.grid};
  const std::string k = key.dump();
  {
    std::lock_guard<std::mutex> lock(mutex);
    if (auto it = cache.find(k); it != cache.end()) return it->second;
  }
  const ModelPtr model = cfg.true_model();
  LyapunovOptions opts;
  opts.seed = 7;
  if (cfg.system == System::Lorenz) {
    opts.spinup_steps = 5000;
    opts.steps = 200000;
    opts.blocks = 50;
  } else {
    opts.spinup_steps = 4000;
    opts.steps = 80000;
    opts.blocks = 40;
  }
  const double value = largest_lyapunov(*model, opts).value;
  std::lock_guard<std::mutex> lock(mutex);
  cache[k] = value;
  return value;
}

// ---------------------------------------------------------------------------
// Replicas

ReplicaData make_replica_data(const ExperimentConfig& cfg, std::size_t replica) {
  const ModelPtr truth_model = cfg.true_model();
  const std::size_t n = cfg.state_dim();
  const auto key = [&](StreamRole role) { return StreamKey{cfg.seed, replica, role, 0}; };

  Rng truth_rng(key(StreamRole::TruthInit));
  Vector x = cfg.system == System::Lorenz ? Vector(truth_rng.normal_vector(n, 5.0) + Vector::Ones(3))
                                          : truth_rng.normal_vector(n, 0.5);
  for (std::size_t k = 0; k < cfg.truth_spinup; ++k) x = truth_model->advance(x);

  const TrainingOptions train = cfg.training();
  const std::size_t window = train.window();
  ReplicaData d;
  d.truth = simulate(*truth_model, x, window - 1 + cfg.forecast_steps);

  const StateSeries window_truth(d.truth.begin(), d.truth.begin() + static_cast<std::ptrdiff_t>(window));
  d.measurements = observe_series(window_truth, cfg.measurement_operator(), NoiseModel{cfg.sigma_noise},
                                  derive_seed(key(StreamRole::MeasurementNoise)),
                                  -static_cast<long>(train.train_steps + train.sync_steps));
  d.init = perturbed_ensemble(d.truth.front(), cfg.ensemble_size, cfg.ensemble_spread,
                              derive_seed(key(StreamRole::EnsembleInit)));
  ReservoirSpec spec = cfg.reservoir;
  spec.input_dim = n;
  d.reservoir = build_reservoir(spec, derive_seed(key(StreamRole::ReservoirBuild)));
  Rng res_rng(key(StreamRole::ReservoirInit));
  d.r_init.resize(static_cast<Eigen::Index>(spec.nodes));
  for (Eigen::Index i = 0; i < d.r_init.size(); ++i) d.r_init[i] = res_rng.uniform(-1.0, 1.0);
  return d;
}

namespace {

ValidTime score_forecast(const Forecast& f, const StateSeries& future, double kappa, double lambda, double dt) {
  StateSeries padded = f.states;
  const Vector nan_state = Vector::Constant(future.front().size(), kNaN);
  while (padded.size() < future.size()) padded.push_back(nan_state);
  return valid_time(normalized_rms(padded, future), kappa, lambda, dt);
}

}  // namespace

ReplicaResult run_replica(const ExperimentConfig& cfg, std::size_t replica, double lambda_max) {
  ReplicaResult out;
  out.replica = replica;
  out.seed = cfg.seed;
  const ReplicaData data = make_replica_data(cfg, replica);
  const ModelPtr model = cfg.knowledge_model();
  const MeasurementOperator h = cfg.measurement_operator();
  const TrainingOptions train = cfg.training();
  const std::size_t window = train.window();
  const StateSeries window_truth(data.truth.begin(), data.truth.begin() + static_cast<std::ptrdiff_t>(window));
  const StateSeries future(data.truth.begin() + static_cast<std::ptrdiff_t>(window), data.truth.end());
  const double dt = cfg.delta_t();

  for (double rho : cfg.rho) {
    const DAConfig da{rho, h, NoiseModel{cfg.sigma_noise}};
    RhoResult point;
    point.rho = rho;
    const AnalysisSeries analysis = run_da(*model, data.measurements, da, data.init);
    const AnalysisErrors errors0 = analysis_errors(analysis.means, window_truth, h);

    const Forecast base = baseline_forecast(*model, analysis.means.back(), cfg.forecast_steps);
    point.baseline = {0, score_forecast(base, future, cfg.kappa, lambda_max, dt), base.diverged, errors0};

    const TrainedHybrid hybrid = train_readout(analysis, model, data.reservoir, data.r_init, train);
    const Forecast ml = predict_hybrid(hybrid, cfg.forecast_steps);
    point.mlda.push_back({0, score_forecast(ml, future, cfg.kappa, lambda_max, dt), ml.diverged, errors0});

    if (cfg.iterations > 0) {
      const auto records = iterate_ml_da(data.measurements, hybrid, da, data.init, train,
                                         IterateOptions{cfg.iterations, &window_truth});
      for (const auto& rec : records) {
        const Forecast f = predict_hybrid(rec.retrained, cfg.forecast_steps);
        point.mlda.push_back({rec.iteration, score_forecast(f, future, cfg.kappa, lambda_max, dt), f.diverged,
                              rec.errors.value_or(AnalysisErrors{kNaN, kNaN, kNaN})});
      }
    }
    out.points.push_back(std::move(point));
  }
  return out;
}

RunResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  RunResult result;
  result.config = cfg;
  result.config_hash = config_hash(cfg);
  result.lambda_max = true_lambda_max(cfg);
  result.replicas.resize(cfg.replicas);

  std::size_t workers = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, cfg.replicas);
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t r = next++; r < cfg.replicas; r = next++) {
      try {
        result.replicas[r] = run_replica(cfg, r, result.lambda_max);
      } catch (const std::exception& e) {
        ReplicaResult failed;
        failed.replica = r;
        failed.seed = cfg.seed;
        failed.failed = true;
        failed.error = e.what();
        result.replicas[r] = std::move(failed);
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& r : result.replicas) result.failures += r.failed ? 1 : 0;
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

std::vector<RunResult> sweep(const ExperimentConfig& cfg, SweepParameter parameter, const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<RunResult> out;
  out.reserve(values.size());
  for (double v : values) {
    ExperimentConfig point = cfg;
    point.sweep.reset();
    switch (parameter) {
      case SweepParameter::Rho:
        point.rho = {v};
        break;
      case SweepParameter::Epsilon:
        point.epsilon = v;
        break;
      case SweepParameter::Sigma:
        point.sigma_noise = v;
        break;
    }
    RunResult r = run_experiment(point);
    r.sweep_param = to_string(parameter);
    r.sweep_value = v;
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation

namespace {

const SchemeScore* find_score(const RhoResult& p, const std::string& scheme, int iteration) {
  if (scheme == "baseline") return iteration == 0 ? &p.baseline : nullptr;
  if (scheme == "mlda")
    for (const auto& s : p.mlda)
      if (s.iteration == iteration) return &s;
  return nullptr;
}

double median_or_nan(const std::vector<double>& v) { return v.empty() ? kNaN : percentile(v, 0.5); }

}  // namespace

std::vector<double> RunResult::valid_times(const std::string& scheme, int iteration, double rho) const {
  std::vector<double> out;
  for (const auto& r : replicas) {
    if (r.failed) continue;
    for (const auto& p : r.points)
      if (p.rho == rho)
        if (const auto* s = find_score(p, scheme, iteration)) out.push_back(s->valid_time.value);
  }
  return out;
}

double RunResult::chosen_rho(const std::string& scheme, int iteration) const {
  double best_rho = config.rho.front();
  double best = -std::numeric_limits<double>::infinity();
  for (double rho : config.rho) {
    const auto v = valid_times(scheme, iteration, rho);
    if (v.empty()) continue;
    const double m = percentile(v, 0.5);
    if (m > best) {
      best = m;
      best_rho = rho;
    }
  }
  return best_rho;
}

std::vector<double> RunResult::valid_times(const std::string& scheme, int iteration) const {
  return valid_times(scheme, iteration, chosen_rho(scheme, iteration));
}

double RunResult::median_valid_time(const std::string& scheme, int iteration) const {
  return median_or_nan(valid_times(scheme, iteration));
}

AnalysisErrors RunResult::median_analysis_errors(int iteration, double rho) const {
  std::vector<double> tot, mea, unm;
  for (const auto& r : replicas) {
    if (r.failed) continue;
    for (const auto& p : r.points) {
      if (p.rho != rho) continue;
      const SchemeScore* s = iteration == 0 ? &p.baseline : find_score(p, "mlda", iteration);
      if (!s) continue;
      tot.push_back(s->analysis.total);
      mea.push_back(s->analysis.measured);
      if (std::isfinite(s->analysis.unmeasured)) unm.push_back(s->analysis.unmeasured);
    }
  }
  return {median_or_nan(tot), median_or_nan(mea), median_or_nan(unm)};
}

std::vector<SummaryRow> RunResult::summary() const {
  std::vector<SummaryRow> rows;
  const auto add = [&](const std::string& scheme, int iteration) {
    SummaryRow row;
    row.scheme = scheme;
    row.iteration = iteration;
    row.rho = chosen_rho(scheme, iteration);
    const auto vts = valid_times(scheme, iteration, row.rho);
    if (!vts.empty()) row.valid_time = box_stats(vts);
    else row.valid_time = {kNaN, kNaN, kNaN, kNaN, kNaN, 0};
    for (const auto& r : replicas) {
      if (r.failed) continue;
      for (const auto& p : r.points)
        if (p.rho == row.rho)
          if (const auto* s = find_score(p, scheme, iteration); s && s->valid_time.censored) ++row.censored;
    }
    const AnalysisErrors e = median_analysis_errors(iteration, row.rho);
    row.analysis_rmse_total = e.total;
    row.analysis_rmse_measured = e.measured;
    row.analysis_rmse_unmeasured = e.unmeasured;
    rows.push_back(row);
  };
  add("baseline", 0);
  for (std::size_t i = 0; i <= config.iterations; ++i) add("mlda", static_cast<int>(i));
  return rows;
}

namespace {

json score_json(const SchemeScore& s) {
  return {{"iteration", s.iteration},
          {"valid_time", s.valid_time.value},
          {"valid_steps", s.valid_time.steps},
          {"censored", s.valid_time.censored},
          {"diverged", s.diverged},
          {"analysis_rmse_total", number_or_null(s.analysis.total)},
          {"analysis_rmse_measured", number_or_null(s.analysis.measured)},
          {"analysis_rmse_unmeasured", number_or_null(s.analysis.unmeasured)}};
}

json summary_json(const SummaryRow& r) {
  return {{"scheme", r.scheme},
          {"iteration", r.iteration},
          {"rho", r.rho},
          {"n", r.valid_time.n},
          {"median", number_or_null(r.valid_time.median)},
          {"p25", number_or_null(r.valid_time.p25)},
          {"p75", number_or_null(r.valid_time.p75)},
          {"p5", number_or_null(r.valid_time.p5)},
          {"p95", number_or_null(r.valid_time.p95)},
          {"censored", r.censored},
          {"analysis_rmse_total", number_or_null(r.analysis_rmse_total)},
          {"analysis_rmse_measured", number_or_null(r.analysis_rmse_measured)},
          {"analysis_rmse_unmeasured", number_or_null(r.analysis_rmse_unmeasured)}};
}

SummaryRow summary_from_json(const json& j) {
  SummaryRow r;
  r.scheme = j.at("scheme").get<std::string>();
  r.iteration = j.at("iteration").get<int>();
  r.rho = j.at("rho").get<double>();
  r.valid_time = {number_from(j.at("median")), number_from(j.at("p25")), number_from(j.at("p75")),
                  number_from(j.at("p5")),     number_from(j.at("p95")), j.at("n").get<std::size_t>()};
  r.censored = j.at("censored").get<std::size_t>();
  r.analysis_rmse_total = number_from(j.at("analysis_rmse_total"));
  r.analysis_rmse_measured = number_from(j.at("analysis_rmse_measured"));
  r.analysis_rmse_unmeasured = number_from(j.at("analysis_rmse_unmeasured"));
  return r;
}

}  // namespace

json RunResult::to_json(bool include_timing) const {
  json j;
  j["config"] = config.to_json();
  j["config_hash"] = config_hash;
  j["lambda_max"] = lambda_max;
  j["sweep_param"] = sweep_param;
  j["sweep_value"] = sweep_value;
  j["failures"] = failures;
  if (include_timing) j["wall_seconds"] = wall_seconds;
  json reps = json::array();
  for (const auto& r : replicas) {
    json rj = {{"replica", r.replica}, {"seed", r.seed}, {"failed", r.failed}, {"error", r.error}};
    json pts = json::array();
    for (const auto& p : r.points) {
      json mj = json::array();
      for (const auto& s : p.mlda) mj.push_back(score_json(s));
      pts.push_back({{"rho", p.rho}, {"baseline", score_json(p.baseline)}, {"mlda", mj}});
    }
    rj["points"] = pts;
    reps.push_back(rj);
  }
  j["replicas"] = reps;
  json sum = json::array();
  for (const auto& row : summary()) sum.push_back(summary_json(row));
  j["summary"] = sum;
  return j;
}

json results_to_json(const std::vector<RunResult>& results, bool include_timing) {
  json arr = json::array();
  for (const auto& r : results) arr.push_back(r.to_json(include_timing));
  return {{"schema", "mlda.results/1"}, {"results", arr}};
}

std::vector<std::vector<SummaryRow>> summaries_from_json(const json& j) {
  if (!j.is_object() || !j.contains("results")) throw ConfigError("results document has no 'results' array");
  std::vector<std::vector<SummaryRow>> out;
  for (const auto& r : j.at("results")) {
    std::vector<SummaryRow> rows;
    for (const auto& row : r.at("summary")) rows.push_back(summary_from_json(row));
    out.push_back(std::move(rows));
  }
  return out;
}

std::vector<std::vector<SummaryRow>> load_summaries_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open results file '" + path + "'");
  json j;
  in >> j;
  return summaries_from_json(j);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::string csv_number(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void write_rows_csv(const std::vector<RunResult>& results, std::ostream& out) {
  out << "sweep_param,sweep_value,replica,scheme,valid_time,censored,analysis_rmse_total,analysis_rmse_measured,"
         "analysis_rmse_unmeasured,iteration,seed\r\n";
  for (const auto& res : results) {
    const auto schemes = res.summary();
    for (const auto& rep : res.replicas) {
      for (const auto& row : schemes) {
        const SchemeScore* s = nullptr;
        if (!rep.failed)
          for (const auto& p : rep.points)
            if (p.rho == row.rho) s = find_score(p, row.scheme, row.iteration);
        out << csv_field(res.sweep_param) << ',' << csv_number(res.sweep_value) << ',' << rep.replica << ','
            << csv_field(row.scheme) << ',';
        if (s) {
          out << csv_number(s->valid_time.value) << ',' << (s->valid_time.censored ? "true" : "false") << ','
              << csv_number(s->analysis.total) << ',' << csv_number(s->analysis.measured) << ','
              << csv_number(s->analysis.unmeasured);
        } else {
          out << ",,,,";
        }
        out << ',' << row.iteration << ',' << rep.seed << "\r\n";
      }
    }
  }
}

void write_summary_csv(const std::vector<RunResult>& results, std::ostream& out) {
  out << "sweep_param,sweep_value,scheme,iteration,rho,n,median,p25,p75,p5,p95,censored,analysis_rmse_total,"
         "analysis_rmse_measured,analysis_rmse_unmeasured,lambda_max,failures\r\n";
  for (const auto& res : results) {
    for (const auto& row : res.summary()) {
      out << csv_field(res.sweep_param) << ',' << csv_number(res.sweep_value) << ',' << csv_field(row.scheme) << ','
          << row.iteration << ',' << csv_number(row.rho) << ',' << row.valid_time.n << ','
          << csv_number(row.valid_time.median) << ',' << csv_number(row.valid_time.p25) << ','
          << csv_number(row.valid_time.p75) << ',' << csv_number(row.valid_time.p5) << ','
          << csv_number(row.valid_time.p95) << ',' << row.censored << ',' << csv_number(row.analysis_rmse_total)
          << ',' << csv_number(row.analysis_rmse_measured) << ',' << csv_number(row.analysis_rmse_unmeasured) << ','
          << csv_number(res.lambda_max) << ',' << res.failures << "\r\n";
    }
  }
}

OutputFormat output_format_from_string(const std::string& s) {
  if (s == "csv") return OutputFormat::Csv;
  if (s == "json") return OutputFormat::Json;
  throw ConfigError("unknown output format '" + s + "' (expected csv or json)");
}

std::vector<std::string> emit(const std::vector<RunResult>& results, OutputFormat format, const std::string& base) {
  const auto open = [](const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write '" + path + "'");
    return f;
  };
  if (format == OutputFormat::Json) {
    const std::string path = base + ".json";
    auto f = open(path);
    f << results_to_json(results).dump(2) << '\n';
    if (!f) throw Error("write failed for '" + path + "'");
    return {path};
  }
  const std::string rows = base + ".csv";
  const std::string summary = base + "_summary.csv";
  {
    auto f = open(rows);
    write_rows_csv(results, f);
    if (!f) throw Error("write failed for '" + rows + "'");
  }
  {
    auto f = open(summary);
    write_summary_csv(results, f);
    if (!f) throw Error("write failed for '" + summary + "'");
  }
  return {rows, summary};
}

namespace {

bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

}  // namespace

bool operator==(const BoxStats& a, const BoxStats& b) {
  return same(a.median, b.median) && same(a.p25, b.p25) && same(a.p75, b.p75) && same(a.p5, b.p5) &&
         same(a.p95, b.p95) && a.n == b.n;
}

bool operator==(const SummaryRow& a, const SummaryRow& b) {
  return a.scheme == b.scheme && a.iteration == b.iteration && same(a.rho, b.rho) && a.valid_time == b.valid_time &&
         a.censored == b.censored && same(a.analysis_rmse_total, b.analysis_rmse_total) &&
         same(a.analysis_rmse_measured, b.analysis_rmse_measured) &&
         same(a.analysis_rmse_unmeasured, b.analysis_rmse_unmeasured);
}

}  // namespace mlda
