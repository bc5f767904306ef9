#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "mlda/harness.hpp"

namespace {

struct Common {
  std::string config;
  std::string system = "lorenz";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicas;
  std::optional<std::size_t> threads;
  std::string out;
  std::string format = "csv";
  bool strict = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON experiment config");
  app->add_option("--system", c.system, "lorenz or ks, used when no config is given")
      ->check(CLI::IsMember({"lorenz", "ks"}));
  app->add_option("--seed", c.seed, "master seed");
  app->add_option("--replicas", c.replicas, "number of replicas")->check(CLI::PositiveNumber);
  app->add_option("--threads", c.threads, "worker threads (0 = all cores)");
  app->add_option("--out", c.out, "output path without extension");
  app->add_option("--format", c.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  app->add_flag("--strict", c.strict, "exit with status 2 if any replica failed");
}

mlda::ExperimentConfig resolve(const Common& c) {
  mlda::ExperimentConfig cfg = c.config.empty() ? mlda::ExperimentConfig::defaults(mlda::system_from_string(c.system))
                                                : mlda::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.replicas) cfg.replicas = *c.replicas;
  if (c.threads) cfg.threads = *c.threads;
  if (!c.out.empty()) cfg.output = c.out;
  cfg.validate();
  return cfg;
}

void print_summary(const std::vector<mlda::RunResult>& results) {
  std::printf("%-10s %-8s %-9s %4s %7s %9s %9s %9s %8s %9s\n", "point", "scheme", "iteration", "rho", "n", "median",
              "p25", "p75", "censored", "rmse");
  for (const auto& r : results) {
    for (const auto& row : r.summary()) {
      std::printf("%-10.4g %-8s %-9d %4.3g %7zu %9.3f %9.3f %9.3f %8zu %9.4f\n", r.sweep_value, row.scheme.c_str(),
                  row.iteration, row.rho, row.valid_time.n, row.valid_time.median, row.valid_time.p25,
                  row.valid_time.p75, row.censored, row.analysis_rmse_total);
    }
    if (r.failures > 0) std::fprintf(stderr, "%zu replica(s) failed\n", r.failures);
  }
}

int finish(const std::vector<mlda::RunResult>& results, const Common& c, const mlda::ExperimentConfig& cfg) {
  for (const auto& path : mlda::emit(results, mlda::output_format_from_string(c.format), cfg.output))
    std::cerr << "wrote " << path << '\n';
  print_summary(results);
  std::size_t failures = 0;
  for (const auto& r : results) {
    failures += r.failures;
    for (const auto& rep : r.replicas)
      if (rep.failed) std::cerr << "replica " << rep.replica << ": " << rep.error << '\n';
  }
  return (c.strict && failures > 0) ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid reservoir / data-assimilation forecasting workbench"};
  app.require_subcommand(1);

  Common run_opts, sweep_opts, iter_opts;
  auto* run = app.add_subcommand("run", "run one experiment over all replicas");
  add_common(run, run_opts);

  auto* sw = app.add_subcommand("sweep", "run one experiment per parameter value");
  add_common(sw, sweep_opts);
  std::string sweep_param;
  std::vector<double> sweep_values;
  sw->add_option("--param", sweep_param, "rho, epsilon or sigma");
  sw->add_option("--values", sweep_values, "parameter values");

  auto* it = app.add_subcommand("iterate", "iterated ML-DA, reporting every iteration");
  add_common(it, iter_opts);
  std::size_t iterations = 4;
  it->add_option("--iterations", iterations, "number of iterations")->check(CLI::PositiveNumber);

  auto* ly = app.add_subcommand("lyapunov", "largest Lyapunov exponent of the true model");
  std::string ly_config, ly_system = "lorenz";
  ly->add_option("--config", ly_config, "JSON experiment config");
  ly->add_option("--system", ly_system, "lorenz or ks")->check(CLI::IsMember({"lorenz", "ks"}));

  auto* st = app.add_subcommand("stats", "print the summary tables of a JSON result file");
  std::string stats_in;
  st->add_option("input", stats_in, "result JSON written by --format json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) {
      const auto cfg = resolve(run_opts);
      return finish({mlda::run_experiment(cfg)}, run_opts, cfg);
    }
    if (*sw) {
      const auto cfg = resolve(sweep_opts);
      mlda::SweepSpec spec = cfg.sweep.value_or(mlda::SweepSpec{});
      if (!sweep_param.empty()) spec.parameter = mlda::sweep_parameter_from_string(sweep_param);
      if (!sweep_values.empty()) spec.values = sweep_values;
      if (spec.values.empty()) throw mlda::ConfigError("sweep needs --values or a sweep block in the config");
      return finish(mlda::sweep(cfg, spec.parameter, spec.values), sweep_opts, cfg);
    }
    if (*it) {
      auto cfg = resolve(iter_opts);
      cfg.iterations = iterations;
      cfg.validate();
      return finish({mlda::run_experiment(cfg)}, iter_opts, cfg);
    }
    if (*ly) {
      const auto cfg = ly_config.empty() ? mlda::ExperimentConfig::defaults(mlda::system_from_string(ly_system))
                                         : mlda::load_config(ly_config);
      std::printf("%.6f\n", mlda::true_lambda_max(cfg));
      return 0;
    }
    if (*st) {
      int k = 0;
      for (const auto& table : mlda::load_summaries_json(stats_in)) {
        std::printf("result %d\n", k++);
        for (const auto& row : table)
          std::printf("  %-8s iteration %d rho %.3g n %zu median %.3f [%.3f, %.3f] censored %zu rmse %.4f\n",
                      row.scheme.c_str(), row.iteration, row.rho, row.valid_time.n, row.valid_time.median,
                      row.valid_time.p25, row.valid_time.p75, row.censored, row.analysis_rmse_total);
      }
      return 0;
    }
  } catch (const mlda::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
