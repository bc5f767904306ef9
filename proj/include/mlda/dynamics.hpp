#pragma once

#include <complex>
#include <functional>
#include <memory>
#include <string>

#include "mlda/common.hpp"

namespace mlda {

struct LorenzParams {
  double a = 10.0;
  double b = 28.0;
  double c = 8.0 / 3.0;
  /// Multiplicative error on b; 0 gives the true system.
  double epsilon = 0.0;

  void validate() const;
};

struct KSParams {
  double length = 35.0;
  std::size_t grid = 64;
  /// Multiplicative error on the second-derivative coefficient.
  double epsilon = 0.0;

  void validate() const;
};

/// Internal solver step `tau` and sampling interval `delta_t`; delta_t must
/// be an integer multiple of tau.
struct IntegratorConfig {
  double tau = 0.01;
  double delta_t = 0.01;

  void validate() const;
  std::size_t substeps() const;

  static IntegratorConfig lorenz() { return {0.01, 0.01}; }
  static IntegratorConfig ks() { return {0.25, 0.25}; }
};

using VectorField = std::function<Vector(const Vector&)>;

Vector lorenz_rhs(const Vector& x, const LorenzParams& p);

/// One classical fourth-order Runge-Kutta step.
Vector rk4_step(const VectorField& rhs, const Vector& x, double tau);

/// A discrete-time forecast model: advances a state by one sampling interval.
/// Implementations are immutable after construction and safe to share
/// between threads.
class Model {
 public:
  virtual ~Model() = default;
  virtual std::size_t dim() const = 0;
  virtual double delta_t() const = 0;
  virtual Vector advance(const Vector& x) const = 0;
  virtual std::string name() const = 0;
};

using ModelPtr = std::shared_ptr<const Model>;

/// Autonomous ODE integrated with RK4.
class OdeModel : public Model {
 public:
  OdeModel(std::string name, std::size_t dim, VectorField rhs, IntegratorConfig cfg);

  std::size_t dim() const override { return dim_; }
  double delta_t() const override { return cfg_.delta_t; }
  Vector advance(const Vector& x) const override;
  std::string name() const override { return name_; }

  const VectorField& rhs() const { return rhs_; }
  const IntegratorConfig& config() const { return cfg_; }

 private:
  std::string name_;
  std::size_t dim_;
  VectorField rhs_;
  IntegratorConfig cfg_;
  std::size_t substeps_;
};

class LorenzModel : public OdeModel {
 public:
  explicit LorenzModel(LorenzParams p, IntegratorConfig cfg = IntegratorConfig::lorenz());
  const LorenzParams& params() const { return params_; }

 private:
  LorenzParams params_;
};

/// x_{k+1} = M x_k. Used for linear-Gaussian filter checks.
class LinearMapModel : public Model {
 public:
  LinearMapModel(Matrix m, double delta_t = 1.0);
  std::size_t dim() const override { return static_cast<std::size_t>(m_.rows()); }
  double delta_t() const override { return delta_t_; }
  Vector advance(const Vector& x) const override;
  std::string name() const override { return "linear_map"; }
  const Matrix& matrix() const { return m_; }

 private:
  Matrix m_;
  double delta_t_;
};

/// Kuramoto-Sivashinsky on a periodic grid,
///   u_t + u u_x + (1+eps) u_xx + u_xxxx = 0,
/// Fourier collocation in space, ETDRK4 in time, quadratic term dealiased by
/// 3/2 zero padding.
class KSModel : public Model {
 public:
  explicit KSModel(KSParams p, IntegratorConfig cfg = IntegratorConfig::ks());
  ~KSModel() override;
  KSModel(const KSModel&) = delete;
  KSModel& operator=(const KSModel&) = delete;

  std::size_t dim() const override { return params_.grid; }
  double delta_t() const override { return cfg_.delta_t; }
  Vector advance(const Vector& x) const override;
  std::string name() const override { return "ks"; }

  /// One ETDRK4 step of length tau.
  Vector step(const Vector& u) const;

  const KSParams& params() const { return params_; }
  const IntegratorConfig& config() const { return cfg_; }

  /// Norm above which a state is considered blown up.
  static constexpr double kBlowUpNorm = 1e6;

 private:
  using Spectrum = std::vector<std::complex<double>>;

  void forward(const Vector& u, Spectrum& out) const;
  Vector inverse(const Spectrum& v) const;
  void nonlinear(const Spectrum& v, Spectrum& out) const;
  Spectrum etdrk4(const Spectrum& v) const;

  KSParams params_;
  IntegratorConfig cfg_;
  std::size_t substeps_;
  std::size_t modes_;   // grid/2 + 1
  std::size_t padded_;  // 3*grid/2
  std::vector<double> wavenumber_;
  std::vector<double> e_, e2_, q_, f1_, f2_, f3_;
  struct Plans;
  std::unique_ptr<Plans> plans_;
};

/// ks_step(u, p, tau): one ETDRK4 step of the KS equation.
Vector ks_step(const Vector& u, const KSParams& p, double tau);

/// States x0, G(x0), ..., G^n(x0): n_steps + 1 entries.
StateSeries simulate(const Model& model, const Vector& x0, std::size_t n_steps);

ModelPtr make_lorenz(const LorenzParams& p, IntegratorConfig cfg = IntegratorConfig::lorenz());
ModelPtr make_ks(const KSParams& p, IntegratorConfig cfg = IntegratorConfig::ks());

}  // namespace mlda
