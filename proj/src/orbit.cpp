#include "modlock/orbit.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "modlock/quadrature.hpp"

namespace modlock {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// Root of fn on [a, b] given a sign change; bisection to `tol` in t.
template <class Fn>
double bisect(Fn&& fn, double a, double b, double fa, double tol = 1e-14) {
  for (int i = 0; i < 200 && b - a > tol * std::max(1.0, std::abs(a)); ++i) {
    const double m = 0.5 * (a + b);
    const double fm = fn(m);
    if ((fm > 0.0) == (fa > 0.0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

struct Maximum {
  double t;
  Vec z;
};

// Maxima of coordinate `index` along a dense trajectory, located as
// +/- sign changes of its time derivative.
std::vector<Maximum> maxima_of(const VectorField& field, const DenseOutput& traj, int index) {
  std::vector<Maximum> out;
  const auto& knots = traj.knots();
  auto deriv = [&](double t) { return field(t, traj(t))[index]; };
  double d_prev = deriv(knots.front());
  for (std::size_t i = 1; i < knots.size(); ++i) {
    const double d = deriv(knots[i]);
    if (d_prev > 0.0 && d <= 0.0) {
      const double t = bisect(deriv, knots[i - 1], knots[i], d_prev);
      out.push_back({t, traj(t)});
    }
    d_prev = d;
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

CycleGuess guess_from_transient(const VectorField& field, const Vec& z_init, double transient, double window,
                                int index, Tolerances tol) {
  require(index >= 0 && index < field.dim, "anchor coordinate out of range");
  require(transient >= 0.0 && window > 0.0, "transient and window must be non-negative / positive");
  Vec z = z_init;
  if (transient > 0.0) z = integrate_adaptive(field, z_init, {0.0, transient}, tol).back();
  const DenseOutput traj = integrate_adaptive(field, z, {0.0, window}, tol);
  const auto maxima = maxima_of(field, traj, index);
  if (maxima.size() < 2) fail(ErrorKind::NoConvergence, "no oscillation detected after the transient");

  // Amplitude over the last detected period: a settled transient has none.
  const Maximum& a = maxima[maxima.size() - 2];
  const Maximum& b = maxima.back();
  double lo = a.z[index], hi = a.z[index];
  for (int k = 0; k <= 64; ++k) {
    const double v = traj.component(a.t + (b.t - a.t) * k / 64.0, index);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi - lo <= 1e-6 * std::max(1.0, std::abs(hi)))
    fail(ErrorKind::NoConvergence, "transient settled on an equilibrium (oscillation amplitude " + fmt(hi - lo) + ")");
  return CycleGuess{b.z, b.t - a.t};
}

ShootingResult shoot_periodic(const VectorField& field, const CycleGuess& guess, const ShootingOptions& opt) {
  const int d = field.dim;
  require(guess.z.size() == d, "guess dimension differs from field");
  require(guess.T > 0.0, "guess period must be positive");
  require(field.has_jacobian(), "shooting requires a jacobian");

  const Vec zg = guess.z;
  const Vec fg = field(0.0, zg);
  const double scale = std::max(1.0, zg.norm());
  if (fg.norm() <= 1e-10 * scale) fail(ErrorKind::DegenerateOrbit, "guess is an equilibrium (F(z) = 0)");

  Vec z = zg;
  double T = guess.T;
  double residual = 0.0;
  for (int iter = 0; iter <= opt.max_iter; ++iter) {
    const Vec fz = field(0.0, z);
    if (fz.norm() <= 1e-8 * scale)
      fail(ErrorKind::DegenerateOrbit, "shooting converged toward an equilibrium, no isolated cycle");
    const MatrixFlow flow = integrate_with_matrix(field, z, Mat::Identity(d, d), {0.0, T}, opt.integration,
                                                  MatrixMode::Variational);
    const Vec zT = flow.state(T);
    const Vec R = zT - z;
    residual = R.norm();
    if (residual <= opt.tol) return ShootingResult{z, T, iter, residual};
    if (iter == opt.max_iter) break;

    Mat K = Mat::Zero(d + 1, d + 1);
    K.topLeftCorner(d, d) = flow.final_matrix() - Mat::Identity(d, d);
    K.topRightCorner(d, 1) = field(T, zT);
    K.bottomLeftCorner(1, d) = fg.transpose();
    Vec rhs(d + 1);
    rhs.head(d) = -R;
    rhs[d] = -fg.dot(z - zg);

    Eigen::JacobiSVD<Mat> svd(K, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (sv[d] <= 1e-12 * sv[0])
      fail(ErrorKind::DegenerateOrbit, "singular shooting matrix (condition " + fmt(sv[0] / sv[d]) + "), cycle not isolated");
    Vec step = svd.solve(rhs);

    double lambda = 1.0;
    while (T + lambda * step[d] <= 0.0 && lambda > 1e-3) lambda *= 0.5;
    z += lambda * step.head(d);
    T += lambda * step[d];
    if (!z.allFinite() || !std::isfinite(T)) break;
  }
  fail(ErrorKind::NoConvergence, "shooting did not converge in " + std::to_string(opt.max_iter) +
                                     " iterations (last residual " + fmt(residual) + ")");
}

// ---------------------------------------------------------------------------

PeriodicOrbit::PeriodicOrbit(VectorField field, DenseOutput cycle, double T, int iterations, double closure)
    : field_(std::move(field)),
      cycle_(std::move(cycle)),
      T_(T),
      beta0_(kTwoPi / T),
      iterations_(iterations),
      closure_(closure) {}

double PeriodicOrbit::wrap(double psi) {
  double w = std::fmod(psi, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  if (w >= kTwoPi) w = 0.0;
  return w;
}

Vec PeriodicOrbit::z(double psi) const { return cycle_(std::min(wrap(psi) / beta0_, T_)); }

double PeriodicOrbit::component(double psi, int index) const {
  return cycle_.component(std::min(wrap(psi) / beta0_, T_), index);
}

Vec PeriodicOrbit::z_prime(double psi) const { return field_(0.0, z(psi)) / beta0_; }

double PeriodicOrbit::min_last(int samples) const {
  double m = std::numeric_limits<double>::infinity();
  for (int i = 0; i < samples; ++i) m = std::min(m, component(kTwoPi * i / samples, dim() - 1));
  return m;
}

PeriodicOrbit find_periodic_orbit(const VectorField& field, const CycleGuess& guess, const ShootingOptions& opt) {
  const ShootingResult shot = shoot_periodic(field, guess, opt);
  const int last = field.dim - 1;
  const DenseOutput rough = integrate_adaptive(field, shot.z, {0.0, shot.T}, opt.integration);

  // Anchor psi = 0 at the maximum of the last coordinate. The derivative at
  // the closing knot is compared with the one at t = 0 for a wrap-around max.
  auto maxima = maxima_of(field, rough, last);
  {
    const double d_end = field(shot.T, rough.back())[last];
    const double d_start = field(0.0, rough.front())[last];
    if (d_end > 0.0 && d_start <= 0.0) maxima.push_back({0.0, rough.front()});
  }
  Vec anchor = shot.z;
  if (!maxima.empty()) {
    const Maximum* best = &maxima.front();
    for (const Maximum& m : maxima) {
      const double diff = m.z[last] - best->z[last];
      if (diff > 1e-12 || (std::abs(diff) <= 1e-12 && m.z[0] < best->z[0])) best = &m;
    }
    anchor = best->z;
  }
  DenseOutput cycle = integrate_adaptive(field, anchor, {0.0, shot.T}, opt.integration);
  const double closure = (cycle.back() - cycle.front()).norm();
  return PeriodicOrbit(field, std::move(cycle), shot.T, shot.iterations, closure);
}

PeriodicOrbit find_periodic_orbit(const ModelDef& model, const CycleGuess& guess, const ShootingOptions& opt) {
  PeriodicOrbit orbit = find_periodic_orbit(planar_field(model), guess, opt);
  const double rmin = orbit.min_last();
  if (!(rmin > 0.0)) fail(ErrorKind::InvalidOrbit, "cycle reaches r <= 0 (min r = " + fmt(rmin) + ")");
  return orbit;
}

PeriodicOrbit find_periodic_orbit(const ModelDef& model, const ShootingOptions& opt) {
  const int n = model.n();
  const VectorField field = planar_field(model);
  // Start near the planar equilibrium-free region: x = 0.1, r = 1.
  Vec z0 = Vec::Zero(n + 1);
  z0[0] = 0.1;
  z0[n] = 1.0;
  const CycleGuess guess = guess_from_transient(field, z0, 200.0, 200.0, n, Tolerances{1e-9, 1e-11});
  return find_periodic_orbit(model, guess, opt);
}

// ---------------------------------------------------------------------------

FloquetData compute_floquet(const PeriodicOrbit& orbit, Tolerances tol) {
  const int d = orbit.dim();
  const MatrixFlow flow = integrate_with_matrix(orbit.field(), orbit.anchor(), Mat::Identity(d, d),
                                                {0.0, orbit.period()}, tol, MatrixMode::Variational);
  FloquetData out;
  out.monodromy = flow.final_matrix();

  Eigen::EigenSolver<Mat> es(out.monodromy);
  if (es.info() != Eigen::Success) fail(ErrorKind::AssumptionViolation, "eigen-solver failed on the monodromy");
  const Eigen::VectorXcd values = es.eigenvalues();
  const Eigen::MatrixXcd vectors = es.eigenvectors();
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(vectors);
  const auto& sv = svd.singularValues();
  out.eigenvector_condition = sv[d - 1] > 0.0 ? sv[0] / sv[d - 1] : std::numeric_limits<double>::infinity();
  if (!(out.eigenvector_condition < 1e10))
    fail(ErrorKind::AssumptionViolation,
         "defective monodromy (eigenvector condition estimate " + fmt(out.eigenvector_condition) + ")");

  int trivial = 0;
  for (int i = 1; i < d; ++i)
    if (std::abs(values[i] - 1.0) < std::abs(values[trivial] - 1.0)) trivial = i;
  out.trivial_multiplier_error = std::abs(values[trivial] - 1.0);
  out.trivial_eigenvector = vectors.col(trivial).real();

  std::vector<std::complex<double>> others;
  bool simple = true;
  for (int i = 0; i < d; ++i) {
    if (i == trivial) continue;
    others.push_back(values[i]);
    if (std::abs(values[i] - 1.0) <= 1e-6) simple = false;
  }
  std::sort(others.begin(), others.end(), [](auto a, auto b) { return std::abs(a) > std::abs(b); });
  out.multipliers.push_back(values[trivial]);
  out.multipliers.insert(out.multipliers.end(), others.begin(), others.end());
  out.spectral_gap = others.empty() ? 0.0 : std::abs(others.front());
  out.hyperbolic = simple && out.trivial_multiplier_error <= 1e-6 && out.spectral_gap < 1.0;
  return out;
}

// ---------------------------------------------------------------------------

AdjointOrbit::AdjointOrbit(const PeriodicOrbit& orbit, DenseOutput reversed)
    : orbit_(orbit), reversed_(std::move(reversed)) {
  constexpr int samples = 512;
  for (int i = 0; i < samples; ++i) {
    const double psi = kTwoPi * i / samples;
    normalization_residual_ = std::max(normalization_residual_, std::abs(p(psi).dot(orbit_.z_prime(psi)) - 1.0));
  }
  periodicity_error_ = (reversed_.back() - reversed_.front()).norm();
}

Vec AdjointOrbit::p(double psi) const {
  const double T = orbit_.period();
  const double s = T - PeriodicOrbit::wrap(psi) / orbit_.beta0();
  return reversed_(std::clamp(s, 0.0, T));
}

Vec AdjointOrbit::p_prime(double psi) const {
  const Mat J = orbit_.field().jacobian_at(0.0, orbit_.z(psi));
  return -(J.transpose() * p(psi)) / orbit_.beta0();
}

AdjointOrbit compute_adjoint(const PeriodicOrbit& orbit, const FloquetData& floquet, Tolerances tol) {
  const int d = orbit.dim();
  Eigen::EigenSolver<Mat> es(floquet.monodromy.transpose());
  const Eigen::VectorXcd values = es.eigenvalues();
  int unit = 0;
  for (int i = 1; i < d; ++i)
    if (std::abs(values[i] - 1.0) < std::abs(values[unit] - 1.0)) unit = i;
  for (int i = 0; i < d; ++i)
    if (i != unit && std::abs(values[i] - 1.0) <= 1e-6)
      fail(ErrorKind::AssumptionViolation, "eigenvalue 1 of the transposed monodromy is not simple");
  if (std::abs(values[unit] - 1.0) > 1e-6)
    fail(ErrorKind::AssumptionViolation, "transposed monodromy has no eigenvalue near 1 (closest " +
                                             fmt(std::abs(values[unit] - 1.0)) + " away)");

  Vec q = es.eigenvectors().col(unit).real();
  q /= q.dot(orbit.z_prime(0.0));

  // Integrated backward in time (stable direction): s = T - t,
  // dp/ds = J^T(z0(T - s)) p.
  const double T = orbit.period();
  const VectorField& base = orbit.field();
  VectorField reversed;
  reversed.dim = d;
  reversed.rhs = [&orbit, &base, T, d](double s, const ConstVecRef& p, VecRef dp) {
    Mat J(d, d);
    base.jacobian(0.0, orbit.cycle()(std::clamp(T - s, 0.0, T)), J);
    dp = J.transpose() * p;
  };
  DenseOutput dense = integrate_adaptive(reversed, q, {0.0, T}, tol);
  return AdjointOrbit(orbit, std::move(dense));
}

// ---------------------------------------------------------------------------

PhaseOffsets::PhaseOffsets(double alpha0, std::vector<double> grid_phi, double beta0, std::vector<double> dphi)
    : alpha0_(alpha0), phi_(std::move(grid_phi)), dphi_(std::move(dphi)), beta0_(beta0) {}

double PhaseOffsets::phi(double psi) const {
  const int N = static_cast<int>(phi_.size()) - 1;
  const double h = kTwoPi / N;
  const double w = PeriodicOrbit::wrap(psi);
  const int i = std::min(static_cast<int>(w / h), N - 1);
  const double s = (w - i * h) / h;
  const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
  const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
  return h00 * phi_[i] + h10 * h * dphi_[i] + h01 * phi_[i + 1] + h11 * h * dphi_[i + 1];
}

PhaseOffsets compute_phase_offsets(const ModelDef& model, const PeriodicOrbit& orbit, int panels) {
  const int n = model.n();
  auto im_h = [&](double psi) { return model.system->h(orbit.z(psi).head(n)).imag(); };
  const double alpha0 = integrate_composite(im_h, 0.0, kTwoPi, panels) / kTwoPi;
  const double beta0 = orbit.beta0();

  constexpr int N = 512;
  const double h = kTwoPi / N;
  std::vector<double> phi(N + 1, 0.0), dphi(N + 1, 0.0);
  for (int i = 0; i <= N; ++i) dphi[i] = (im_h(i * h) - alpha0) / beta0;
  for (int i = 1; i <= N; ++i)
    phi[i] = phi[i - 1] + integrate_composite([&](double s) { return (im_h(s) - alpha0) / beta0; }, (i - 1) * h,
                                              i * h, 1, 8);
  return PhaseOffsets(alpha0, std::move(phi), beta0, std::move(dphi));
}

double mean_re_h(const ModelDef& model, const PeriodicOrbit& orbit, int panels) {
  const int n = model.n();
  auto re_h = [&](double psi) { return model.system->h(orbit.z(psi).head(n)).real(); };
  return integrate_composite(re_h, 0.0, kTwoPi, panels) / kTwoPi;
}

double trace_integral(const PeriodicOrbit& orbit, int panels) {
  auto tr = [&](double psi) { return orbit.field().jacobian_at(0.0, orbit.z(psi)).trace(); };
  return integrate_composite(tr, 0.0, kTwoPi, panels) / orbit.beta0();
}

}  // namespace modlock
