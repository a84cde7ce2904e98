#pragma once

#include <complex>
#include <vector>

#include "modlock/integrate.hpp"
#include "modlock/model.hpp"

namespace modlock {

struct ShootingOptions {
  double tol = 1e-10;  // closure ||z(T) - z(0)||
  int max_iter = 30;
  Tolerances integration{1e-11, 1e-13};
};

struct CycleGuess {
  Vec z;
  double T = 0.0;
};

// Integrates past a transient and returns the state at a maximum of
// coordinate `index` with the time between two successive maxima.
CycleGuess guess_from_transient(const VectorField& field, const Vec& z_init, double transient, double window,
                                int index, Tolerances tol = {});

struct ShootingResult {
  Vec z;
  double T = 0.0;
  int iterations = 0;
  double residual = 0.0;
};

// Single-shooting Newton on (z(0), T) with the phase condition
// <F(z_guess), z(0) - z_guess> = 0.
ShootingResult shoot_periodic(const VectorField& field, const CycleGuess& guess, const ShootingOptions& opt);

// Periodic orbit z0(psi), psi = beta0 t, anchored at the maximum of the last
// coordinate (ties broken by the smaller first coordinate).
class PeriodicOrbit {
 public:
  PeriodicOrbit(VectorField field, DenseOutput cycle, double T, int iterations, double closure);

  int dim() const { return field_.dim; }
  double period() const { return T_; }
  double beta0() const { return beta0_; }
  const VectorField& field() const { return field_; }
  const DenseOutput& cycle() const { return cycle_; }  // over t in [0, T]
  int iterations() const { return iterations_; }
  double closure_residual() const { return closure_; }

  Vec z(double psi) const;
  Vec z_prime(double psi) const;  // F(z0(psi)) / beta0
  double component(double psi, int index) const;
  Vec anchor() const { return cycle_.front(); }

  // Minimum of the last coordinate over a fine sample.
  double min_last(int samples = 2048) const;

  static double wrap(double psi);

 private:
  VectorField field_;
  DenseOutput cycle_;
  double T_;
  double beta0_;
  int iterations_;
  double closure_;
};

PeriodicOrbit find_periodic_orbit(const VectorField& field, const CycleGuess& guess, const ShootingOptions& opt);

// Model wrapper: planar (x, r) subsystem, guess from a transient if none is
// given, checks r > 0 on the cycle.
PeriodicOrbit find_periodic_orbit(const ModelDef& model, const ShootingOptions& opt = {});
PeriodicOrbit find_periodic_orbit(const ModelDef& model, const CycleGuess& guess, const ShootingOptions& opt);

struct FloquetData {
  Mat monodromy;
  std::vector<std::complex<double>> multipliers;  // trivial first, then by decreasing modulus
  double trivial_multiplier_error = 0.0;
  bool hyperbolic = false;
  double spectral_gap = 0.0;  // max |lambda| over nontrivial multipliers
  double eigenvector_condition = 0.0;
  Vec trivial_eigenvector;
};

FloquetData compute_floquet(const PeriodicOrbit& orbit, Tolerances tol = {1e-11, 1e-13});

// Periodic adjoint solution, dp/dpsi = -A^T(psi) p with p^T z0'(psi) = 1.
class AdjointOrbit {
 public:
  AdjointOrbit(const PeriodicOrbit& orbit, DenseOutput reversed);

  Vec p(double psi) const;
  // dp/dpsi = -J^T p / beta0.
  Vec p_prime(double psi) const;
  double normalization_residual() const { return normalization_residual_; }
  double periodicity_error() const { return periodicity_error_; }

 private:
  PeriodicOrbit orbit_;
  DenseOutput reversed_;  // p(T - s) for s in [0, T]
  double normalization_residual_ = 0.0;
  double periodicity_error_ = 0.0;
};

AdjointOrbit compute_adjoint(const PeriodicOrbit& orbit, const FloquetData& floquet,
                             Tolerances tol = {1e-11, 1e-13});

class PhaseOffsets {
 public:
  PhaseOffsets(double alpha0, std::vector<double> grid_phi, double beta0, std::vector<double> dphi);

  double alpha0() const { return alpha0_; }
  double phi(double psi) const;  // cubic Hermite on the tabulated values

 private:
  double alpha0_;
  std::vector<double> phi_;   // at psi_i = 2 pi i / N, i = 0..N
  std::vector<double> dphi_;  // (Im h - alpha0) / beta0
  double beta0_;
};

PhaseOffsets compute_phase_offsets(const ModelDef& model, const PeriodicOrbit& orbit, int panels = 64);

// Mean of Re h(x0(psi)) over the cycle (vanishes for a periodic r0 > 0).
double mean_re_h(const ModelDef& model, const PeriodicOrbit& orbit, int panels = 64);

// Trace quadrature (1/beta0) int_0^{2 pi} tr J(z0(psi)) dpsi, the log of the
// product of the multipliers.
double trace_integral(const PeriodicOrbit& orbit, int panels = 64);

}  // namespace modlock
