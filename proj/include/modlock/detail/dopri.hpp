#pragma once

// Dormand-Prince 5(4) core, templated on the state vector type so hot
// simulation loops can run on fixed-size Eigen vectors with an inlined
// right-hand side. The public, type-erased API lives in integrate.hpp.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "modlock/errors.hpp"

namespace modlock::detail {

struct DopriCoefficients {
  static constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
  static constexpr double a21 = 1.0 / 5.0;
  static constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
  static constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
  static constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                          a54 = -212.0 / 729.0;
  static constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                          a65 = -5103.0 / 18656.0;
  static constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0,
                          a75 = -2187.0 / 6784.0, a76 = 11.0 / 84.0;
  static constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                          e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
  // Continuous extension (Hairer, Norsett & Wanner, dopri5).
  static constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                          d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                          d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
};

template <class State>
struct DopriStepData {
  explicit DopriStepData(Eigen::Index n) : y_old(n), y_new(n), r2(n), r3(n), r4(n), r5(n) {}

  template <class Out>
  void eval(double t, Out& out) const {
    if (t == t0) {
      out = y_old;
      return;
    }
    if (t == t1) {
      out = y_new;
      return;
    }
    const double s = (t - t0) / h;
    const double s1 = 1.0 - s;
    out = y_old + s * (r2 + s1 * (r3 + s * (r4 + s1 * r5)));
  }

  double t0 = 0.0, t1 = 0.0, h = 0.0;
  State y_old, y_new, r2, r3, r4, r5;
};

struct DopriSettings {
  double rtol = 1e-9;
  double atol = 1e-11;
  double initial_step = 0.0;
  double max_step = 0.0;
  long max_steps = 50'000'000;
};

struct DopriStats {
  long accepted = 0;
  long rejected = 0;
  long rhs_evals = 0;
  double t_reached = 0.0;
  bool stopped_early = false;
};

[[noreturn]] inline void dopri_failure(ErrorKind kind, const std::string& what, double t) {
  std::ostringstream os;
  os.precision(17);
  os << what << " at t=" << t;
  throw IntegrationError(kind, os.str(), t);
}

template <class State>
double dopri_error_norm(const State& err, const State& y_old, const State& y_new, double rtol, double atol) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double sc = atol + rtol * std::max(std::abs(y_old[i]), std::abs(y_new[i]));
    const double q = err[i] / sc;
    acc += q * q;
  }
  return std::sqrt(acc / static_cast<double>(err.size()));
}

// rhs(t, y, dydt) with y, dydt of type State; observer(const DopriStepData&)
// returns false to stop.
template <class State, class Rhs, class Observer>
DopriStats dopri_integrate(Rhs&& rhs, const State& y0, double t0, double t1, const DopriSettings& set,
                           Observer&& observer) {
  using C = DopriCoefficients;
  require(t1 >= t0, "integration span must satisfy t1 >= t0");
  require(set.rtol > 0.0 && set.atol > 0.0, "tolerances must be positive");
  if (!y0.allFinite()) fail(ErrorKind::InvalidState, "non-finite initial state");

  const Eigen::Index n = y0.size();
  DopriStats stats;
  stats.t_reached = t0;
  if (t1 == t0) return stats;

  State y = y0, y_new(n), k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), err(n);
  rhs(t0, y, k1);
  ++stats.rhs_evals;
  if (!k1.allFinite()) dopri_failure(ErrorKind::InvalidField, "non-finite right-hand side", t0);

  const double span = t1 - t0;
  double h = set.initial_step;
  if (h <= 0.0) {
    // Hairer's starting-step heuristic.
    double d0 = 0.0, d1 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double sc = set.atol + set.rtol * std::abs(y[i]);
      d0 += (y[i] / sc) * (y[i] / sc);
      d1 += (k1[i] / sc) * (k1[i] / sc);
    }
    d0 = std::sqrt(d0 / static_cast<double>(n));
    d1 = std::sqrt(d1 / static_cast<double>(n));
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, span);
    tmp = y + h0 * k1;
    rhs(t0 + h0, tmp, k2);
    ++stats.rhs_evals;
    double d2 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double sc = set.atol + set.rtol * std::abs(y[i]);
      d2 += ((k2[i] - k1[i]) / sc) * ((k2[i] - k1[i]) / sc);
    }
    d2 = std::sqrt(d2 / static_cast<double>(n)) / h0;
    const double dmax = std::max(d1, d2);
    const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 1.0 / 5.0);
    h = std::min({100.0 * h0, h1, span});
  }
  if (set.max_step > 0.0) h = std::min(h, set.max_step);

  // PI step-size control (Hairer's dopri5 constants).
  constexpr double beta = 0.04, expo1 = 0.2 - beta * 0.75, safe = 0.9;
  constexpr double facc1 = 1.0 / 0.2, facc2 = 1.0 / 10.0;
  double facold = 1e-4;
  bool reject = false;
  constexpr double eps = std::numeric_limits<double>::epsilon();

  DopriStepData<State> step(n);
  double t = t0;
  while (t < t1) {
    if (stats.accepted + stats.rejected >= set.max_steps)
      dopri_failure(ErrorKind::IntegrationFailure, "step budget exhausted", t);
    bool last = false;
    if (t + 1.01 * h >= t1) {
      h = t1 - t;
      last = true;
    }
    if (h <= 16.0 * eps * std::max(1.0, std::abs(t)))
      dopri_failure(ErrorKind::IntegrationFailure, "step size underflow", t);

    tmp = y + (h * C::a21) * k1;
    rhs(t + C::c2 * h, tmp, k2);
    tmp = y + h * (C::a31 * k1 + C::a32 * k2);
    rhs(t + C::c3 * h, tmp, k3);
    tmp = y + h * (C::a41 * k1 + C::a42 * k2 + C::a43 * k3);
    rhs(t + C::c4 * h, tmp, k4);
    tmp = y + h * (C::a51 * k1 + C::a52 * k2 + C::a53 * k3 + C::a54 * k4);
    rhs(t + C::c5 * h, tmp, k5);
    tmp = y + h * (C::a61 * k1 + C::a62 * k2 + C::a63 * k3 + C::a64 * k4 + C::a65 * k5);
    const double t_next = last ? t1 : t + h;
    rhs(t_next, tmp, k6);
    y_new = y + h * (C::a71 * k1 + C::a73 * k3 + C::a74 * k4 + C::a75 * k5 + C::a76 * k6);
    rhs(t_next, y_new, k7);
    stats.rhs_evals += 6;

    err = h * (C::e1 * k1 + C::e3 * k3 + C::e4 * k4 + C::e5 * k5 + C::e6 * k6 + C::e7 * k7);
    double enorm = dopri_error_norm(err, y, y_new, set.rtol, set.atol);
    if (!std::isfinite(enorm)) enorm = 1e10;

    const double fac11 = std::pow(std::max(enorm, 1e-300), expo1);
    if (enorm <= 1.0) {
      if (!k7.allFinite()) dopri_failure(ErrorKind::InvalidField, "non-finite right-hand side", t_next);
      step.t0 = t;
      step.t1 = t_next;
      step.h = h;
      step.y_old = y;
      step.y_new = y_new;
      step.r2 = y_new - y;
      step.r3 = h * k1 - step.r2;
      step.r4 = step.r2 - h * k7 - step.r3;
      step.r5 = h * (C::d1 * k1 + C::d3 * k3 + C::d4 * k4 + C::d5 * k5 + C::d6 * k6 + C::d7 * k7);

      ++stats.accepted;
      t = t_next;
      y = y_new;
      k1 = k7;
      stats.t_reached = t;
      if (!observer(step)) {
        stats.stopped_early = true;
        return stats;
      }

      double fac = fac11 / std::pow(facold, beta);
      fac = std::max(facc2, std::min(facc1, fac / safe));
      facold = std::max(enorm, 1e-4);
      double h_new = h / fac;
      if (reject) h_new = std::min(h_new, h);
      if (set.max_step > 0.0) h_new = std::min(h_new, set.max_step);
      h = h_new;
      reject = false;
    } else {
      ++stats.rejected;
      h /= std::min(facc1, fac11 / safe);
      reject = true;
    }
  }
  return stats;
}

}  // namespace modlock::detail
