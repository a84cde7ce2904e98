#pragma once

#include <array>
#include <complex>
#include <string>
#include <vector>

#include "modlock/integrate.hpp"
#include "modlock/model.hpp"
#include "modlock/orbit.hpp"

namespace modlock {

// Real 2 pi-periodic trigonometric polynomial sum_{k=-M..M} c_k e^{ik psi},
// coefficient k stored at index k + M.
class TrigSeries {
 public:
  TrigSeries() = default;
  explicit TrigSeries(std::vector<Complex> coeffs);

  int order() const { return order_; }
  const std::vector<Complex>& coeffs() const { return coeffs_; }
  Complex coeff(int k) const;

  double value(double psi) const;
  TrigSeries derivative() const;

 private:
  std::vector<Complex> coeffs_;
  int order_ = 0;
};

struct SingularPoint {
  double psi = 0.0;
  double value = 0.0;
  double second = 0.0;  // G''
};

class LockingFunction {
 public:
  LockingFunction() = default;
  // G and G' as independent series (G' is not required to equal the formal
  // derivative of G); samples on a uniform grid of n_grid points.
  LockingFunction(TrigSeries g, TrigSeries dg, int n_grid = 512);

  double value(double psi) const { return g_.value(psi); }
  double derivative(double psi) const { return dg_.value(psi); }
  double second_derivative(double psi) const { return d2g_.value(psi); }

  const TrigSeries& series() const { return g_; }
  const TrigSeries& derivative_series() const { return dg_; }

  int n_grid() const { return static_cast<int>(grid_.size()); }
  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& samples() const { return values_; }
  const std::vector<double>& derivative_samples() const { return derivs_; }

  double G_minus() const { return g_minus_; }
  double G_plus() const { return g_plus_; }
  double max_abs() const { return std::max(std::abs(g_minus_), std::abs(g_plus_)); }
  double mean() const { return g_.coeff(0).real(); }

  bool has_singular_data() const { return has_singular_; }
  bool flat() const { return flat_; }
  const std::vector<SingularPoint>& singular_points() const { return singular_; }
  std::vector<double> singular_values() const;
  const std::string& warning() const { return warning_; }

 private:
  friend LockingFunction find_singular_points(const LockingFunction& G, double nondeg_tol);

  TrigSeries g_, dg_, d2g_;
  std::vector<double> grid_, values_, derivs_;
  double g_minus_ = 0.0, g_plus_ = 0.0;
  bool has_singular_ = false;
  bool flat_ = false;
  std::vector<SingularPoint> singular_;
  std::string warning_;
};

// Fourier coefficients w_j = (1/2pi) int w(s) e^{-ijs} ds of
// w(s) = p_x(s)^T g(x0(s)) and of its derivative.
struct LockingIntegrand {
  std::vector<Complex> w;
  std::vector<Complex> dw;
  int order = 0;  // j = -order..order
  double mean = 0.0;
};

LockingIntegrand locking_integrand(const ModelDef& model, const PeriodicOrbit& orbit, const AdjointOrbit& adjoint,
                                   int order, int n_quad);

// G(psi) = (1/2pi) int_0^{2pi} p_x(xi+psi)^T g(x0(xi+psi)) |a(xi)|^2 dxi.
LockingFunction compute_G(const ModelDef& model, const PeriodicOrbit& orbit, const AdjointOrbit& adjoint,
                          const ForcingProfile& forcing, int n_grid = 512, int n_quad = 512);

// Locates the roots of G' and checks |G''| > nondeg_tol at each; nondeg_tol
// <= 0 selects 1e-4 max|G|.
LockingFunction find_singular_points(const LockingFunction& G, double nondeg_tol = 0.0);

struct RegionSpec {
  double mu_star_low = 0.5;   // gamma > mu_star_low / alpha
  double mu_star_high = 0.1;  // gamma < mu_star_high * alpha
  double margin = 0.0;        // distance of Delta from S

  static RegionSpec defaults_for(const LockingFunction& G);
  void validate() const;
};

struct RegionVerdict {
  bool inside = false;
  std::vector<std::string> violations;  // amplitude-window, detuning, singular-margin
  double delta = 0.0;
  double distance_to_S = 0.0;
};

RegionVerdict in_locking_region(const ControlParams& params, double beta0, const LockingFunction& G,
                                const RegionSpec& spec);

struct Section {
  enum Kind { AlphaConst, BetaConst } kind = AlphaConst;
  double fixed = 0.0;  // alpha (AlphaConst) or beta (BetaConst)
  double lo = 0.0;     // beta range or 1/alpha range
  double hi = 0.0;
  int points = 201;
};

struct Branch {
  std::string label;
  bool is_line = false;
  double g_tilde = 0.0;
  std::vector<std::array<double, 2>> points;  // (beta, gamma) or (1/alpha, gamma)
};

struct BoundaryCurves {
  std::vector<Branch> branches;
  std::string diagnostic;

  int curve_count() const;
  int line_count() const;
};

BoundaryCurves boundary_curves(const LockingFunction& G, const RegionSpec& spec, const Section& section,
                               double beta0);

struct Equilibrium {
  double psi = 0.0;
  bool stable = false;
  double slope = 0.0;  // G'(psi)
};

struct AveragedPhaseModel {
  double delta = 0.0;
  LockingFunction G;
  std::vector<Equilibrium> equilibria;  // increasing psi in [0, 2pi)
  bool drifting = false;                // no equilibria
  bool ill_conditioned = false;
  std::string warning;

  // Stable equilibrium closest (circularly) to psi; requires equilibria.
  const Equilibrium& nearest_stable(double psi) const;
  double min_abs_slope() const;
};

AveragedPhaseModel averaged_equilibria(double delta, const LockingFunction& G);

// psi' = mu^2 (G(psi) - Delta).
DenseOutput integrate_averaged_phase(const AveragedPhaseModel& model, double mu, double psi0, double horizon,
                                     Tolerances tol = {1e-10, 1e-12});

struct TransitBound {
  double T = 0.0;
  double m = 0.0;
  double from = 0.0;  // unstable + delta
  double to = 0.0;    // next stable - delta (unwrapped, > from)
};

// Transit bound: T = 2 pi / (mu^2 (m - m0)), m = min of G - Delta between
// consecutive unstable and stable equilibria shrunk by delta.
TransitBound transit_time_bound(const LockingFunction& G, double delta_detuning, double delta, double mu,
                                double m0 = 0.0);

double circular_distance(double a, double b);

}  // namespace modlock
