#include "modlock/model.hpp"

#include <cmath>
#include <sstream>

namespace modlock {

namespace {

bool finite_all(std::initializer_list<double> values) {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------

VdpLaser::VdpLaser(double P, double eta, double c, double omega0, double kappa)
    : P(P), eta(eta), c(c), omega0(omega0), kappa(kappa) {
  if (!finite_all({P, eta, c, omega0, kappa})) fail(ErrorKind::InvalidModel, "vdp_laser parameters must be finite");
  if (P <= 0.0) fail(ErrorKind::InvalidModel, "vdp_laser requires P > 0");
  if (c <= 0.0) fail(ErrorKind::InvalidModel, "vdp_laser requires c > 0");
}

std::map<std::string, double> VdpLaser::parameters() const {
  return {{"P", P}, {"eta", eta}, {"c", c}, {"omega0", omega0}, {"kappa", kappa}};
}

std::shared_ptr<const EquivariantSystem> make_vdp_laser(double P, double eta, double c, double omega0,
                                                        double kappa) {
  return std::make_shared<VdpLaser>(P, eta, c, omega0, kappa);
}

ModelDef make_vdp_laser_model(double P, double eta, double c, double omega0, double kappa) {
  return ModelDef{make_vdp_laser(P, eta, c, omega0, kappa), default_forcing(), 5};
}

const std::map<std::string, ModelFamily>& model_families() {
  static const std::map<std::string, ModelFamily> families = {
      {"vdp_laser",
       {{{"P", 1.0}, {"eta", 0.2}, {"c", 1.0}, {"omega0", 2.0}, {"kappa", 0.5}},
        [](const std::map<std::string, double>& p) {
          return make_vdp_laser(p.at("P"), p.at("eta"), p.at("c"), p.at("omega0"), p.at("kappa"));
        }}},
  };
  return families;
}

std::shared_ptr<const EquivariantSystem> make_family(const std::string& name,
                                                     const std::map<std::string, double>& params) {
  const auto& families = model_families();
  auto it = families.find(name);
  if (it == families.end()) fail(ErrorKind::InvalidModel, "unknown model family '" + name + "'");
  std::map<std::string, double> merged = it->second.defaults;
  for (const auto& [key, value] : params) {
    if (!merged.count(key)) fail(ErrorKind::InvalidModel, "family '" + name + "' has no parameter '" + key + "'");
    merged[key] = value;
  }
  return it->second.make(merged);
}

// ---------------------------------------------------------------------------

ForcingProfile::ForcingProfile(std::vector<Complex> coeffs) : coeffs_(std::move(coeffs)) {
  for (const Complex& a : coeffs_)
    if (!std::isfinite(a.real()) || !std::isfinite(a.imag()))
      fail(ErrorKind::InvalidModel, "forcing coefficients must be finite");
}

bool ForcingProfile::is_zero() const {
  for (const Complex& a : coeffs_)
    if (a != Complex(0.0, 0.0)) return false;
  return true;
}

Complex ForcingProfile::value(double tau) const {
  const Complex z = std::polar(1.0, tau);
  Complex p = 1.0, sum = 0.0;
  for (const Complex& a : coeffs_) {
    sum += a * p;
    p *= z;
  }
  return sum;
}

Complex ForcingProfile::derivative(double tau) const {
  const Complex z = std::polar(1.0, tau);
  Complex p = 1.0, sum = 0.0;
  for (std::size_t k = 0; k < coeffs_.size(); ++k) {
    sum += Complex(0.0, static_cast<double>(k)) * coeffs_[k] * p;
    p *= z;
  }
  return sum;
}

double ForcingProfile::intensity(double tau) const { return std::norm(value(tau)); }

std::vector<Complex> ForcingProfile::intensity_harmonics() const {
  const int K = order();
  if (K < 0) return {};
  std::vector<Complex> c(2 * K + 1, 0.0);
  for (int m = -K; m <= K; ++m)
    for (int k = 0; k <= K; ++k) {
      const int j = k - m;
      if (j >= 0 && j <= K) c[m + K] += coeffs_[k] * std::conj(coeffs_[j]);
    }
  return c;
}

double ForcingProfile::mean_intensity() const {
  double s = 0.0;
  for (const Complex& a : coeffs_) s += std::norm(a);
  return s;
}

ForcingProfile default_forcing() { return ForcingProfile({1.0, 0.5}); }

// ---------------------------------------------------------------------------

double ControlParams::delta(double beta0) const {
  require(mu() > 0.0, "detuning is only defined for gamma > 0");
  return (beta - beta0) / (mu() * mu());
}

ControlParams ControlParams::from_delta(double alpha, double gamma, double delta, double beta0) {
  ControlParams p{alpha, beta0, gamma};
  p.beta = beta0 + p.mu() * p.mu() * delta;
  return p;
}

void ControlParams::validate() const {
  if (!finite_all({alpha, beta, gamma})) fail(ErrorKind::Config, "control parameters must be finite");
  if (alpha <= 0.0) fail(ErrorKind::Config, "control.alpha must be > 0");
  if (beta <= 0.0) fail(ErrorKind::Config, "control.beta must be > 0");
  if (gamma < 0.0) fail(ErrorKind::Config, "control.gamma must be >= 0");
}

// ---------------------------------------------------------------------------

Vec FullState::pack() const {
  Vec s(x.size() + 2);
  s.head(x.size()) = x;
  s[x.size()] = y.real();
  s[x.size() + 1] = y.imag();
  return s;
}

FullState FullState::unpack(const ConstVecRef& s, int n) {
  require(s.size() == n + 2, "state length differs from n + 2");
  return FullState{s.head(n), Complex(s[n], s[n + 1])};
}

FullState eval_full_rhs(const ModelDef& model, const ControlParams& params, double t, const FullState& s) {
  const int n = model.n();
  require(s.x.size() == n, "state dimension differs from model");
  if (!s.x.allFinite() || !std::isfinite(s.y.real()) || !std::isfinite(s.y.imag()) || !std::isfinite(t))
    fail(ErrorKind::InvalidState, "non-finite state");
  Vec fx(n), gx(n);
  model.system->f(s.x, fx);
  model.system->g(s.x, gx);
  const Complex hx = model.system->h(s.x);
  FullState d;
  d.x = fx + gx * std::norm(s.y);
  d.y = hx * s.y + params.gamma * std::polar(1.0, params.alpha * t) * model.forcing.value(params.beta * t);
  return d;
}

PolarRhs eval_polar_rhs(const ModelDef& model, const Vec& x, double r) {
  if (!(r > 0.0)) {
    std::ostringstream os;
    os << "polar form requires r > 0, got r=" << r;
    fail(ErrorKind::DomainViolation, os.str());
  }
  if (!x.allFinite()) fail(ErrorKind::InvalidState, "non-finite state");
  const int n = model.n();
  Vec fx(n), gx(n);
  model.system->f(x, fx);
  model.system->g(x, gx);
  const Complex hx = model.system->h(x);
  return PolarRhs{fx + gx * (r * r), hx.real() * r, hx.imag()};
}

Complex remove_forcing_oscillation(const ControlParams& params, const ForcingProfile& forcing, double t, Complex y) {
  return y + Complex(0.0, params.mu()) * std::polar(1.0, params.alpha * t) * forcing.value(params.beta * t);
}

Complex restore_forcing_oscillation(const ControlParams& params, const ForcingProfile& forcing, double t,
                                    Complex y1) {
  return y1 - Complex(0.0, params.mu()) * std::polar(1.0, params.alpha * t) * forcing.value(params.beta * t);
}

// ---------------------------------------------------------------------------

namespace {

VectorField forced_field(const ModelDef& model, const ControlParams& params, bool deforced) {
  // Each copy of the std::function owns its ForcedRhs scratch buffers.
  ForcedRhs rhs(model, params, deforced);
  VectorField field;
  field.dim = rhs.dim();
  field.rhs = [rhs](double t, const ConstVecRef& y, VecRef dy) { rhs(t, y, dy); };
  field.jacobian = [rhs](double t, const ConstVecRef& y, MatRef j) { rhs.jacobian(t, y, j); };
  return field;
}

}  // namespace

VectorField full_field(const ModelDef& model, const ControlParams& params) {
  return forced_field(model, params, false);
}

VectorField deforced_field(const ModelDef& model, const ControlParams& params) {
  return forced_field(model, params, true);
}

VectorField planar_field(const ModelDef& model) {
  const int n = model.n();
  auto sys = model.system;
  VectorField field;
  field.dim = n + 1;
  field.rhs = [sys, n](double, const ConstVecRef& z, VecRef dz) {
    const auto x = z.head(n);
    const double r = z[n];
    Vec fx(n), gx(n);
    sys->f(x, fx);
    sys->g(x, gx);
    dz.head(n) = fx + gx * (r * r);
    dz[n] = sys->h(x).real() * r;
  };
  field.jacobian = [sys, n](double, const ConstVecRef& z, MatRef jac) {
    const auto x = z.head(n);
    const double r = z[n];
    Vec gx(n), gr(n), gi(n);
    Mat dfx(n, n), dgx(n, n);
    sys->g(x, gx);
    sys->df(x, dfx);
    sys->dg(x, dgx);
    sys->dh(x, gr, gi);
    jac.topLeftCorner(n, n) = dfx + dgx * (r * r);
    jac.col(n).head(n) = 2.0 * r * gx;
    jac.row(n).head(n) = r * gr.transpose();
    jac(n, n) = sys->h(x).real();
  };
  return field;
}

}  // namespace modlock
