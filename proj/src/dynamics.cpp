#include "mlda/dynamics.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>

namespace mlda {

void LorenzParams::validate() const {
  if (!(a > 0.0) || !(b > 0.0) || !(c > 0.0)) throw ConfigError("Lorenz parameters a, b, c must be positive");
  if (!std::isfinite(epsilon)) throw ConfigError("Lorenz epsilon must be finite");
}

void KSParams::validate() const {
  if (!(length > 0.0)) throw ConfigError("KS domain length must be positive");
  if (grid < 4 || (grid & (grid - 1)) != 0) throw ConfigError("KS grid size must be a power of two >= 4");
  if (!std::isfinite(epsilon)) throw ConfigError("KS epsilon must be finite");
}

void IntegratorConfig::validate() const {
  if (!(tau > 0.0) || !(delta_t > 0.0)) throw ConfigError("integrator steps must be positive");
  const double ratio = delta_t / tau;
  if (ratio < 1.0 - 1e-9 || std::abs(ratio - std::round(ratio)) > 1e-9 * ratio)
    throw ConfigError("delta_t must be an integer multiple of tau");
}

std::size_t IntegratorConfig::substeps() const {
  return static_cast<std::size_t>(std::llround(delta_t / tau));
}

Vector lorenz_rhs(const Vector& x, const LorenzParams& p) {
  if (x.size() != 3) throw ConfigError("Lorenz state must have length 3");
  if (!x.allFinite()) throw IntegrationError("non-finite Lorenz state");
  Vector dx(3);
  dx[0] = -p.a * x[0] + p.a * x[1];
  dx[1] = p.b * (1.0 + p.epsilon) * x[0] - x[1] - x[0] * x[2];
  dx[2] = -p.c * x[2] + x[0] * x[1];
  return dx;
}

Vector rk4_step(const VectorField& rhs, const Vector& x, double tau) {
  if (!(tau > 0.0)) throw ConfigError("rk4_step requires tau > 0");
  const Vector k1 = rhs(x);
  const Vector k2 = rhs(x + 0.5 * tau * k1);
  const Vector k3 = rhs(x + 0.5 * tau * k2);
  const Vector k4 = rhs(x + tau * k3);
  Vector out = x + (tau / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!out.allFinite()) throw IntegrationError("RK4 step produced a non-finite state");
  return out;
}

OdeModel::OdeModel(std::string name, std::size_t dim, VectorField rhs, IntegratorConfig cfg)
    : name_(std::move(name)), dim_(dim), rhs_(std::move(rhs)), cfg_(cfg) {
  cfg_.validate();
  substeps_ = cfg_.substeps();
}

Vector OdeModel::advance(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != dim_) throw ConfigError(name_ + ": state dimension mismatch");
  Vector state = x;
  for (std::size_t s = 0; s < substeps_; ++s) state = rk4_step(rhs_, state, cfg_.tau);
  return state;
}

LorenzModel::LorenzModel(LorenzParams p, IntegratorConfig cfg)
    : OdeModel(
          "lorenz", 3, [p](const Vector& x) { return lorenz_rhs(x, p); }, cfg),
      params_(p) {
  params_.validate();
}

LinearMapModel::LinearMapModel(Matrix m, double delta_t) : m_(std::move(m)), delta_t_(delta_t) {
  if (m_.rows() != m_.cols() || m_.rows() == 0) throw ConfigError("linear map must be square and nonempty");
}

Vector LinearMapModel::advance(const Vector& x) const {
  if (x.size() != m_.cols()) throw ConfigError("linear map: state dimension mismatch");
  return m_ * x;
}

// ---------------------------------------------------------------------------
// Kuramoto-Sivashinsky

namespace {

// The FFTW planner is not reentrant; plan execution with the new-array API is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

constexpr int kContourPoints = 32;

fftw_complex* as_fftw(std::complex<double>* p) { return reinterpret_cast<fftw_complex*>(p); }

}  // namespace

struct KSModel::Plans {
  fftw_plan r2c_grid = nullptr;
  fftw_plan c2r_grid = nullptr;
  fftw_plan r2c_pad = nullptr;
  fftw_plan c2r_pad = nullptr;

  Plans(std::size_t n, std::size_t npad) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    std::vector<double> real(npad);
    std::vector<std::complex<double>> spec(npad / 2 + 1);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    const int in = static_cast<int>(n);
    const int ip = static_cast<int>(npad);
    r2c_grid = fftw_plan_dft_r2c_1d(in, real.data(), as_fftw(spec.data()), flags);
    c2r_grid = fftw_plan_dft_c2r_1d(in, as_fftw(spec.data()), real.data(), flags);
    r2c_pad = fftw_plan_dft_r2c_1d(ip, real.data(), as_fftw(spec.data()), flags);
    c2r_pad = fftw_plan_dft_c2r_1d(ip, as_fftw(spec.data()), real.data(), flags);
  }
  ~Plans() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    for (auto p : {r2c_grid, c2r_grid, r2c_pad, c2r_pad})
      if (p) fftw_destroy_plan(p);
  }
};

KSModel::KSModel(KSParams p, IntegratorConfig cfg) : params_(p), cfg_(cfg) {
  params_.validate();
  cfg_.validate();
  substeps_ = cfg_.substeps();
  const std::size_t n = params_.grid;
  modes_ = n / 2 + 1;
  padded_ = 3 * n / 2;
  plans_ = std::make_unique<Plans>(n, padded_);

  wavenumber_.resize(modes_);
  e_.resize(modes_);
  e2_.resize(modes_);
  q_.resize(modes_);
  f1_.resize(modes_);
  f2_.resize(modes_);
  f3_.resize(modes_);

  const double h = cfg_.tau;
  using cd = std::complex<double>;
  for (std::size_t m = 0; m < modes_; ++m) {
    const double q = 2.0 * std::numbers::pi * static_cast<double>(m) / params_.length;
    wavenumber_[m] = q;
    const double lin = (1.0 + params_.epsilon) * q * q - q * q * q * q;
    const double hl = h * lin;
    e_[m] = std::exp(hl);
    e2_[m] = std::exp(hl / 2.0);
    // phi-function coefficients by averaging over a unit circle around h*L.
    cd sq{0.0}, s1{0.0}, s2{0.0}, s3{0.0};
    for (int j = 0; j < kContourPoints; ++j) {
      const cd root = std::exp(cd(0.0, 2.0 * std::numbers::pi * (j + 0.5) / kContourPoints));
      const cd lr = hl + root;
      const cd ex = std::exp(lr);
      const cd lr3 = lr * lr * lr;
      sq += (std::exp(lr / 2.0) - 1.0) / lr;
      s1 += (-4.0 - lr + ex * (4.0 - 3.0 * lr + lr * lr)) / lr3;
      s2 += (2.0 + lr + ex * (-2.0 + lr)) / lr3;
      s3 += (-4.0 - 3.0 * lr - lr * lr + ex * (4.0 - lr)) / lr3;
    }
    q_[m] = h * (sq.real() / kContourPoints);
    f1_[m] = h * (s1.real() / kContourPoints);
    f2_[m] = h * (s2.real() / kContourPoints);
    f3_[m] = h * (s3.real() / kContourPoints);
  }
}

KSModel::~KSModel() = default;

void KSModel::forward(const Vector& u, Spectrum& out) const {
  std::vector<double> real(u.data(), u.data() + u.size());
  out.assign(modes_, {0.0, 0.0});
  fftw_execute_dft_r2c(plans_->r2c_grid, real.data(), as_fftw(out.data()));
}

Vector KSModel::inverse(const Spectrum& v) const {
  Spectrum scratch = v;
  Vector u(static_cast<Eigen::Index>(params_.grid));
  fftw_execute_dft_c2r(plans_->c2r_grid, as_fftw(scratch.data()), u.data());
  u /= static_cast<double>(params_.grid);
  return u;
}

// -(i q / 2) FFT(u^2), evaluated on the 3/2-padded grid. The Nyquist mode of
// the original grid is excluded from the product and receives no forcing.
void KSModel::nonlinear(const Spectrum& v, Spectrum& out) const {
  const std::size_t n = params_.grid;
  const std::size_t nyquist = n / 2;
  Spectrum pad(padded_ / 2 + 1, {0.0, 0.0});
  for (std::size_t m = 0; m < nyquist; ++m) pad[m] = v[m];
  std::vector<double> phys(padded_);
  fftw_execute_dft_c2r(plans_->c2r_pad, as_fftw(pad.data()), phys.data());
  const double inv_n = 1.0 / static_cast<double>(n);
  for (double& x : phys) {
    x *= inv_n;
    x *= x;
  }
  Spectrum sq(padded_ / 2 + 1);
  fftw_execute_dft_r2c(plans_->r2c_pad, phys.data(), as_fftw(sq.data()));
  const double scale = static_cast<double>(n) / static_cast<double>(padded_);
  out.assign(modes_, {0.0, 0.0});
  for (std::size_t m = 0; m < nyquist; ++m)
    out[m] = std::complex<double>(0.0, -0.5 * wavenumber_[m]) * (sq[m] * scale);
}

KSModel::Spectrum KSModel::etdrk4(const Spectrum& v) const {
  Spectrum nv, na, nb, nc;
  Spectrum a(modes_), b(modes_), c(modes_), out(modes_);
  nonlinear(v, nv);
  for (std::size_t m = 0; m < modes_; ++m) a[m] = e2_[m] * v[m] + q_[m] * nv[m];
  nonlinear(a, na);
  for (std::size_t m = 0; m < modes_; ++m) b[m] = e2_[m] * v[m] + q_[m] * na[m];
  nonlinear(b, nb);
  for (std::size_t m = 0; m < modes_; ++m) c[m] = e2_[m] * a[m] + q_[m] * (2.0 * nb[m] - nv[m]);
  nonlinear(c, nc);
  for (std::size_t m = 0; m < modes_; ++m)
    out[m] = e_[m] * v[m] + f1_[m] * nv[m] + 2.0 * f2_[m] * (na[m] + nb[m]) + f3_[m] * nc[m];
  return out;
}

namespace {

void check_ks_state(const Vector& u) {
  if (!u.allFinite()) throw IntegrationError("KS integration produced a non-finite state");
  if (u.norm() > KSModel::kBlowUpNorm) throw IntegrationError("KS integration blew up (state norm > 1e6)");
}

}  // namespace

Vector KSModel::step(const Vector& u) const {
  if (static_cast<std::size_t>(u.size()) != params_.grid) throw ConfigError("KS state dimension mismatch");
  if (!u.allFinite()) throw IntegrationError("non-finite KS input state");
  Spectrum v;
  forward(u, v);
  Vector out = inverse(etdrk4(v));
  check_ks_state(out);
  return out;
}

Vector KSModel::advance(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != params_.grid) throw ConfigError("KS state dimension mismatch");
  if (!x.allFinite()) throw IntegrationError("non-finite KS input state");
  Spectrum v;
  forward(x, v);
  for (std::size_t s = 0; s < substeps_; ++s) v = etdrk4(v);
  Vector out = inverse(v);
  check_ks_state(out);
  return out;
}

Vector ks_step(const Vector& u, const KSParams& p, double tau) {
  const KSModel model(p, IntegratorConfig{tau, tau});
  return model.step(u);
}

StateSeries simulate(const Model& model, const Vector& x0, std::size_t n_steps) {
  if (static_cast<std::size_t>(x0.size()) != model.dim()) throw ConfigError("simulate: initial state dimension mismatch");
  StateSeries out;
  out.reserve(n_steps + 1);
  out.push_back(x0);
  for (std::size_t k = 0; k < n_steps; ++k) out.push_back(model.advance(out.back()));
  return out;
}

ModelPtr make_lorenz(const LorenzParams& p, IntegratorConfig cfg) {
  return std::make_shared<LorenzModel>(p, cfg);
}

ModelPtr make_ks(const KSParams& p, IntegratorConfig cfg) { return std::make_shared<KSModel>(p, cfg); }

}  // namespace mlda
