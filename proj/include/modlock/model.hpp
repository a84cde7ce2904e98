#pragma once

#include <complex>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "modlock/integrate.hpp"

namespace modlock {

using Complex = std::complex<double>;

// x' = f(x) + g(x)|y|^2,  y' = h(x) y  (unforced part). Implementations
// write into caller-provided buffers and must not allocate.
class EquivariantSystem {
 public:
  virtual ~EquivariantSystem() = default;

  virtual int n() const = 0;
  virtual std::string family() const = 0;
  virtual std::map<std::string, double> parameters() const = 0;

  virtual void f(const ConstVecRef& x, VecRef out) const = 0;
  virtual void g(const ConstVecRef& x, VecRef out) const = 0;
  virtual Complex h(const ConstVecRef& x) const = 0;

  // Jacobians of f and g (n x n) and gradients of Re h, Im h.
  virtual void df(const ConstVecRef& x, MatRef out) const = 0;
  virtual void dg(const ConstVecRef& x, MatRef out) const = 0;
  virtual void dh(const ConstVecRef& x, VecRef grad_re, VecRef grad_im) const = 0;
};

// f(x) = P + eta x - x^3, g(x) = -c, h(x) = x + i(omega0 + kappa x).
class VdpLaser final : public EquivariantSystem {
 public:
  static constexpr int kDim = 1;

  VdpLaser(double P, double eta, double c, double omega0, double kappa);

  int n() const override { return 1; }
  std::string family() const override { return "vdp_laser"; }
  std::map<std::string, double> parameters() const override;

  void f(const ConstVecRef& x, VecRef out) const override { out[0] = P + eta * x[0] - x[0] * x[0] * x[0]; }
  void g(const ConstVecRef&, VecRef out) const override { out[0] = -c; }
  Complex h(const ConstVecRef& x) const override { return {x[0], omega0 + kappa * x[0]}; }
  void df(const ConstVecRef& x, MatRef out) const override { out(0, 0) = eta - 3.0 * x[0] * x[0]; }
  void dg(const ConstVecRef&, MatRef out) const override { out(0, 0) = 0.0; }
  void dh(const ConstVecRef&, VecRef grad_re, VecRef grad_im) const override {
    grad_re[0] = 1.0;
    grad_im[0] = kappa;
  }

  double P, eta, c, omega0, kappa;
};

// a(tau) = sum_k a_k e^{ik tau}, k = 0..K.
class ForcingProfile {
 public:
  ForcingProfile() = default;
  explicit ForcingProfile(std::vector<Complex> coeffs);

  const std::vector<Complex>& coeffs() const { return coeffs_; }
  int order() const { return static_cast<int>(coeffs_.size()) - 1; }
  bool is_zero() const;

  Complex value(double tau) const;
  Complex derivative(double tau) const;
  double intensity(double tau) const;  // |a(tau)|^2

  // c_m for m = -K..K (index m + K) with |a(tau)|^2 = sum_m c_m e^{im tau}.
  std::vector<Complex> intensity_harmonics() const;
  double mean_intensity() const;

 private:
  std::vector<Complex> coeffs_;
};

ForcingProfile default_forcing();  // 1 + 0.5 e^{i tau}

struct ControlParams {
  double alpha = 200.0;
  double beta = 1.0;
  double gamma = 0.0;

  double mu() const { return gamma / alpha; }
  double nu() const { return 1.0 / alpha; }
  double delta(double beta0) const;

  // beta from a detuning: beta = beta0 + mu^2 Delta.
  static ControlParams from_delta(double alpha, double gamma, double delta, double beta0);
  void validate() const;
};

struct ModelDef {
  std::shared_ptr<const EquivariantSystem> system;
  ForcingProfile forcing;
  int smoothness = 5;

  int n() const { return system->n(); }
};

std::shared_ptr<const EquivariantSystem> make_vdp_laser(double P = 1.0, double eta = 0.2, double c = 1.0,
                                                        double omega0 = 2.0, double kappa = 0.5);
ModelDef make_vdp_laser_model(double P = 1.0, double eta = 0.2, double c = 1.0, double omega0 = 2.0,
                              double kappa = 0.5);

// Family registry: name -> (parameter defaults, factory).
struct ModelFamily {
  std::map<std::string, double> defaults;
  std::shared_ptr<const EquivariantSystem> (*make)(const std::map<std::string, double>& params);
};
const std::map<std::string, ModelFamily>& model_families();
std::shared_ptr<const EquivariantSystem> make_family(const std::string& name,
                                                     const std::map<std::string, double>& params);

struct FullState {
  Vec x;
  Complex y;

  Vec pack() const;  // (x, Re y, Im y)
  static FullState unpack(const ConstVecRef& s, int n);
};

FullState eval_full_rhs(const ModelDef& model, const ControlParams& params, double t, const FullState& s);

struct PolarRhs {
  Vec dx;
  double dr = 0.0;
  double dtheta = 0.0;
};
PolarRhs eval_polar_rhs(const ModelDef& model, const Vec& x, double r);

// y1 = y + i mu e^{i alpha t} a(beta t) and its inverse.
Complex remove_forcing_oscillation(const ControlParams& params, const ForcingProfile& forcing, double t, Complex y);
Complex restore_forcing_oscillation(const ControlParams& params, const ForcingProfile& forcing, double t,
                                    Complex y1);

// Right-hand side of the forced system on (x, Re y, Im y). In the de-forced
// frame the state is (x, Re y1, Im y1) with
//   y1' = h y1 - i mu e^{i alpha t}(h a(beta t) - beta a'(beta t)).
// Templated on the system type so that final families devirtualize in hot
// loops. Owns scratch buffers: one instance per integration run.
template <class Sys>
class BasicForcedRhs {
 public:
  static constexpr int kDim = [] {
    if constexpr (requires { Sys::kDim; })
      return Sys::kDim;
    else
      return static_cast<int>(Eigen::Dynamic);
  }();
  using XVec = Eigen::Matrix<double, kDim, 1>;
  using XMat = Eigen::Matrix<double, kDim, kDim>;

  BasicForcedRhs(const ModelDef& model, const ControlParams& params, bool deforced)
      : sys_(dynamic_cast<const Sys*>(model.system.get())),
        hold_(model.system),
        coeffs_(model.forcing.coeffs()),
        params_(params),
        deforced_(deforced),
        n_(model.n()),
        fx_(n_),
        gx_(n_),
        gr_(n_),
        gi_(n_),
        dfx_(n_, n_),
        dgx_(n_, n_) {
    require(sys_ != nullptr, "model system does not match the right-hand side type");
    if (coeffs_.empty()) coeffs_.push_back(0.0);
  }

  int dim() const { return n_ + 2; }
  bool deforced() const { return deforced_; }

  template <class S, class D>
  void operator()(double t, const S& s, D& ds) const {
    const int n = n_;
    const auto x = s.head(n);
    sys_->f(x, fx_);
    sys_->g(x, gx_);
    const Complex hx = sys_->h(x);
    const Complex w(s[n], s[n + 1]);
    Complex wave, a, da;
    forcing_terms(t, wave, a, da);
    const double mu = params_.mu();
    Complex y, dw;
    if (deforced_) {
      y = w - Complex(0.0, mu) * wave * a;
      dw = hx * w - Complex(0.0, mu) * wave * (hx * a - params_.beta * da);
    } else {
      y = w;
      dw = hx * w + params_.gamma * wave * a;
    }
    ds.head(n) = fx_ + gx_ * std::norm(y);
    ds[n] = dw.real();
    ds[n + 1] = dw.imag();
  }

  void jacobian(double t, const ConstVecRef& s, MatRef jac) const {
    const int n = n_;
    if (!s.allFinite()) fail(ErrorKind::InvalidState, "non-finite state");
    const auto x = s.head(n);
    sys_->g(x, gx_);
    sys_->df(x, dfx_);
    sys_->dg(x, dgx_);
    sys_->dh(x, gr_, gi_);
    const Complex hx = sys_->h(x);
    Complex y(s[n], s[n + 1]);
    if (deforced_) {
      Complex wave, a, da;
      forcing_terms(t, wave, a, da);
      y -= Complex(0.0, params_.mu()) * wave * a;
    }
    const double u = y.real(), v = y.imag();
    jac.setZero();
    jac.topLeftCorner(n, n) = dfx_ + dgx_ * (u * u + v * v);
    jac.col(n).head(n) = 2.0 * u * gx_;
    jac.col(n + 1).head(n) = 2.0 * v * gx_;
    jac.row(n).head(n) = (u * gr_ - v * gi_).transpose();
    jac.row(n + 1).head(n) = (v * gr_ + u * gi_).transpose();
    jac(n, n) = hx.real();
    jac(n, n + 1) = -hx.imag();
    jac(n + 1, n) = hx.imag();
    jac(n + 1, n + 1) = hx.real();
  }

 private:
  void forcing_terms(double t, Complex& wave, Complex& a, Complex& da) const {
    wave = std::polar(1.0, params_.alpha * t);
    const Complex z = std::polar(1.0, params_.beta * t);
    Complex p = 1.0;
    a = 0.0;
    da = 0.0;
    for (std::size_t k = 0; k < coeffs_.size(); ++k) {
      const Complex term = coeffs_[k] * p;
      a += term;
      da += Complex(0.0, static_cast<double>(k)) * term;
      p *= z;
    }
  }

  const Sys* sys_;
  std::shared_ptr<const EquivariantSystem> hold_;
  std::vector<Complex> coeffs_;
  ControlParams params_;
  bool deforced_;
  int n_;
  mutable XVec fx_, gx_, gr_, gi_;
  mutable XMat dfx_, dgx_;
};

using ForcedRhs = BasicForcedRhs<EquivariantSystem>;

VectorField full_field(const ModelDef& model, const ControlParams& params);
VectorField deforced_field(const ModelDef& model, const ControlParams& params);

// Planar unforced subsystem z = (x, r): x' = f + g r^2, r' = Re h(x) r.
VectorField planar_field(const ModelDef& model);

}  // namespace modlock
