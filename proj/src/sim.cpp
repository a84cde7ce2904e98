#include "modlock/sim.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include "modlock/detail/dopri.hpp"

namespace modlock {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

double wrap(double psi) { return PeriodicOrbit::wrap(psi); }

// Remainder into (-pi, pi].
double wrap_pm(double a) { return std::remainder(a, kTwoPi); }

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct StreamStats {
  long steps = 0;
  bool stopped_early = false;
};

template <class Sys, class State, class Emit>
StreamStats stream_typed(const ModelDef& model, const ControlParams& params, bool deforced, const Vec& s0,
                         double horizon, double stride, Tolerances tol, Emit&& emit) {
  BasicForcedRhs<Sys> rhs(model, params, deforced);
  const State y0 = s0;
  State buf(y0.size());
  StreamStats out;
  if (!emit(0.0, y0)) {
    out.stopped_early = true;
    return out;
  }
  std::size_t k = 1;
  bool halted = false;
  auto observer = [&](const detail::DopriStepData<State>& st) {
    for (;; ++k) {
      const double tk = static_cast<double>(k) * stride;
      if (tk > st.t1 || tk > horizon) break;
      st.eval(tk, buf);
      if (!emit(tk, buf)) {
        halted = true;
        return false;
      }
    }
    return true;
  };
  detail::DopriSettings set;
  set.rtol = tol.rtol;
  set.atol = tol.atol;
  // Step count grows with both frequencies; keep the budget proportional.
  set.max_steps = std::max(set.max_steps, static_cast<long>(horizon * (100.0 + 10.0 * (std::abs(params.alpha) + std::abs(params.beta)))));
  const auto stats = detail::dopri_integrate(
      [&rhs](double t, const State& y, State& dy) { rhs(t, y, dy); }, y0, 0.0, horizon, set, observer);
  out.steps = stats.accepted;
  out.stopped_early = halted;
  return out;
}

// Integrates the forced system from t = 0 and emits samples at k * stride.
// The initial state is in the original frame.
StreamStats stream_full(const ModelDef& model, const ControlParams& params, const FullState& init, double horizon,
                        double stride, const SimOptions& opt, const SampleHook& emit) {
  params.validate();
  require(horizon > 0.0 && std::isfinite(horizon), "simulation horizon must be positive and finite");
  require(stride > 0.0, "output stride must be positive");
  const int n = model.n();
  require(init.x.size() == n, "initial state dimension differs from model");
  FullState s = init;
  if (opt.deforced_frame) s.y = remove_forcing_oscillation(params, model.forcing, 0.0, s.y);
  const Vec s0 = s.pack();
  if (!s0.allFinite()) fail(ErrorKind::InvalidState, "non-finite initial state");

  if (dynamic_cast<const VdpLaser*>(model.system.get()) != nullptr) {
    return stream_typed<VdpLaser, Eigen::Vector3d>(
        model, params, opt.deforced_frame, s0, horizon, stride, opt.tol,
        [&](double t, const Eigen::Vector3d& y) { return emit(t, y); });
  }
  return stream_typed<EquivariantSystem, Vec>(model, params, opt.deforced_frame, s0, horizon, stride, opt.tol,
                                              [&](double t, const Vec& y) { return emit(t, y); });
}

double lsq_slope(const std::vector<double>& t, const std::vector<double>& y, std::size_t from, std::size_t to) {
  const double m = static_cast<double>(to - from);
  double st = 0.0, sy = 0.0;
  for (std::size_t i = from; i < to; ++i) {
    st += t[i];
    sy += y[i];
  }
  const double tb = st / m, yb = sy / m;
  double num = 0.0, den = 0.0;
  for (std::size_t i = from; i < to; ++i) {
    num += (t[i] - tb) * (y[i] - yb);
    den += (t[i] - tb) * (t[i] - tb);
  }
  return den > 0.0 ? num / den : 0.0;
}

double circular_mean(const std::vector<double>& y, std::size_t from, std::size_t to) {
  double c = 0.0, s = 0.0;
  for (std::size_t i = from; i < to; ++i) {
    c += std::cos(y[i]);
    s += std::sin(y[i]);
  }
  return wrap(std::atan2(s, c));
}

}  // namespace

// ---------------------------------------------------------------------------

Analysis analyze(const ModelDef& model, const AnalysisOptions& opt) {
  PeriodicOrbit orbit = find_periodic_orbit(model, opt.shooting);
  FloquetData floquet = compute_floquet(orbit, opt.tol);
  if (!floquet.hyperbolic)
    fail(ErrorKind::AssumptionViolation,
         "cycle is not hyperbolic: spectral gap " + fmt(floquet.spectral_gap) + " >= 1");
  AdjointOrbit adjoint = compute_adjoint(orbit, floquet, opt.tol);
  PhaseOffsets offsets = compute_phase_offsets(model, orbit);
  LockingFunction G = compute_G(model, orbit, adjoint, model.forcing, opt.n_grid, opt.n_quad);
  G = find_singular_points(G, opt.nondeg_tol);
  return Analysis{model, std::move(orbit), std::move(floquet), std::move(adjoint), std::move(offsets),
                  std::move(G)};
}

// ---------------------------------------------------------------------------

PhaseProjector::PhaseProjector(const PeriodicOrbit& orbit, int table)
    : dim_(orbit.dim()), table_(table), h_(kTwoPi / table), beta0_(orbit.beta0()) {
  require(table >= 16, "projection table needs at least 16 points");
  values_.resize(dim_, table_);
  slopes_.resize(dim_, table_);
  for (int i = 0; i < table_; ++i) {
    const double psi = h_ * i;
    values_.col(i) = orbit.z(psi);
    slopes_.col(i) = orbit.z_prime(psi);
  }
}

void PhaseProjector::hermite(double psi, Vec* value, Vec* d1, Vec* d2) const {
  const double u = wrap(psi) / h_;
  int i = static_cast<int>(std::floor(u));
  double s = u - i;
  if (i >= table_) {
    i = table_ - 1;
    s = 1.0;
  }
  const int j = (i + 1) % table_;
  const auto p0 = values_.col(i), p1 = values_.col(j);
  const auto m0 = slopes_.col(i), m1 = slopes_.col(j);
  const double s2 = s * s, s3 = s2 * s, h = h_;
  if (value)
    *value = (2 * s3 - 3 * s2 + 1) * p0 + (s3 - 2 * s2 + s) * h * m0 + (-2 * s3 + 3 * s2) * p1 + (s3 - s2) * h * m1;
  if (d1)
    *d1 = (6 * s2 - 6 * s) / h * p0 + (3 * s2 - 4 * s + 1) * m0 + (-6 * s2 + 6 * s) / h * p1 + (3 * s2 - 2 * s) * m1;
  if (d2)
    *d2 = (12 * s - 6) / (h * h) * p0 + (6 * s - 4) / h * m0 + (-12 * s + 6) / (h * h) * p1 + (6 * s - 2) / h * m1;
}

Vec PhaseProjector::z0(double psi) const {
  Vec v;
  hermite(psi, &v, nullptr, nullptr);
  return v;
}

Vec PhaseProjector::z0_prime(double psi) const {
  Vec d;
  hermite(psi, nullptr, &d, nullptr);
  return d;
}

PhaseProjector::Result PhaseProjector::project(const ConstVecRef& z, double seed) const {
  require(z.size() == dim_, "projection point has the wrong dimension");
  double psi = seed;
  Vec v, d1, d2;
  for (int it = 0; it < 30; ++it) {
    hermite(psi, &v, &d1, &d2);
    const Vec diff = v - z;
    const double g = diff.dot(d1);
    double dg = d1.squaredNorm() + diff.dot(d2);
    if (!(dg > 0.0)) dg = d1.squaredNorm();
    const double step = std::clamp(-g / dg, -0.3, 0.3);
    psi += step;
    if (std::abs(step) < 1e-13) break;
  }
  hermite(psi, &v, nullptr, nullptr);
  return Result{wrap(psi), (v - z).norm()};
}

PhaseProjector::Result PhaseProjector::project_global(const ConstVecRef& z) const {
  require(z.size() == dim_, "projection point has the wrong dimension");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < table_; ++i) {
    const double d = (values_.col(i) - z).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return project(z, h_ * best);
}

// ---------------------------------------------------------------------------

PhaseTracker::PhaseTracker(const PhaseProjector& projector, const ModelDef& model, const ControlParams& params,
                           bool deforced, double delta_proj)
    : projector_(&projector),
      model_(model),
      params_(params),
      deforced_(deforced),
      delta_proj_(delta_proj),
      z_(projector.dim()),
      g_(model.n()) {
  require(projector.dim() == model.n() + 1, "projector dimension differs from the model");
  require(delta_proj > 0.0, "projection neighborhood must be positive");
}

PhaseTracker::Sample PhaseTracker::push(double t, const ConstVecRef& s) {
  const int n = model_.n();
  Complex y1(s[n], s[n + 1]);
  if (!deforced_) y1 = remove_forcing_oscillation(params_, model_.forcing, t, y1);
  z_.head(n) = s.head(n);
  const double r1 = std::abs(y1);
  z_[n] = r1;
  if (params_.gamma != 0.0) {
    // Remove the O(mu/alpha) carrier ripple of x and y1 before projecting.
    const double mu = params_.mu(), nu = params_.nu();
    const Complex wave = std::polar(1.0, params_.alpha * t);
    const Complex a = model_.forcing.value(params_.beta * t);
    const Complex da = model_.forcing.derivative(params_.beta * t);
    model_.system->g(s.head(n), g_);
    z_.head(n) += 2.0 * mu * nu * (std::conj(y1) * a * wave).real() * g_;
    const Complex hx = model_.system->h(s.head(n));
    z_[n] = std::abs(y1 + mu * nu * wave * (hx * a - params_.beta * da));
  }
  if (!z_.allFinite()) fail(ErrorKind::InvalidState, "non-finite state at t=" + fmt(t));

  PhaseProjector::Result pr;
  double advance = 0.0;
  if (!started_) {
    pr = projector_->project_global(z_);
  } else {
    advance = projector_->beta0() * (t - last_t_);
    pr = projector_->project(z_, last_raw_ + advance);
  }
  if (pr.distance > delta_proj_) {
    throw IntegrationError(ErrorKind::LeftNeighborhood,
                           "trajectory left the projection neighborhood: distance " + fmt(pr.distance) + " > " +
                               fmt(delta_proj_) + " at t=" + fmt(t),
                           t);
  }
  if (!started_) {
    unwrapped_ = pr.psi;
    started_ = true;
  } else {
    unwrapped_ += advance + wrap_pm(pr.psi - last_raw_ - advance);
  }
  last_raw_ = pr.psi;
  last_t_ = t;
  return Sample{t, unwrapped_, unwrapped_ - params_.beta * t, pr.distance, r1};
}

// ---------------------------------------------------------------------------

Vec Trajectory::state(std::size_t i) const {
  const int w = n + 2;
  return Eigen::Map<const Vec>(states.data() + i * w, w);
}

FullState Trajectory::full_state(std::size_t i, const ForcingProfile& forcing) const {
  FullState s = FullState::unpack(state(i), n);
  if (deforced) s.y = restore_forcing_oscillation(params, forcing, t[i], s.y);
  return s;
}

double output_stride(const ControlParams& params, const SimOptions& opt, double horizon) {
  double stride = opt.stride > 0.0 ? opt.stride : kTwoPi / (32.0 * params.beta);
  if (opt.max_samples >= 2 && horizon / stride + 1.0 > static_cast<double>(opt.max_samples))
    stride = horizon / static_cast<double>(opt.max_samples - 1);
  return stride;
}

Trajectory simulate_full(const ModelDef& model, const ControlParams& params, const FullState& init, double horizon,
                         const SimOptions& opt, const SampleHook& hook) {
  Trajectory tr;
  tr.n = model.n();
  tr.deforced = opt.deforced_frame;
  tr.params = params;
  const double stride = output_stride(params, opt, horizon);
  const std::size_t expected = static_cast<std::size_t>(horizon / stride) + 2;
  tr.t.reserve(expected);
  tr.states.reserve(expected * static_cast<std::size_t>(tr.n + 2));
  const StreamStats st = stream_full(model, params, init, horizon, stride, opt, [&](double t, const ConstVecRef& s) {
    tr.t.push_back(t);
    tr.states.insert(tr.states.end(), s.data(), s.data() + s.size());
    return !hook || hook(t, s);
  });
  tr.steps = st.steps;
  tr.stopped_early = st.stopped_early;
  return tr;
}

PhaseSeries extract_phase(const PeriodicOrbit& orbit, const PhaseOffsets& offsets, const ModelDef& model,
                          const ControlParams& params, const Trajectory& traj, double delta_proj) {
  require(traj.n == model.n(), "trajectory dimension differs from model");
  const PhaseProjector proj(orbit);
  PhaseTracker tracker(proj, model, params, traj.deforced, delta_proj);
  PhaseSeries out;
  const std::size_t m = traj.size();
  out.t.reserve(m);
  out.psi_hat.reserve(m);
  out.psi1_hat.reserve(m);
  out.distance.reserve(m);
  out.wave_phase.reserve(m);
  const int n = traj.n;
  double wave = 0.0, last_raw = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const Vec s = traj.state(i);
    const auto smp = tracker.push(traj.t[i], s);
    Complex y1(s[n], s[n + 1]);
    if (!traj.deforced) y1 = remove_forcing_oscillation(params, model.forcing, traj.t[i], y1);
    const double raw = std::arg(y1) - offsets.alpha0() * traj.t[i] - offsets.phi(smp.psi_hat);
    wave = i == 0 ? wrap_pm(raw) : wave + wrap_pm(raw - last_raw);
    last_raw = raw;
    out.t.push_back(smp.t);
    out.psi_hat.push_back(smp.psi_hat);
    out.psi1_hat.push_back(smp.psi1_hat);
    out.distance.push_back(smp.distance);
    out.wave_phase.push_back(wave);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string to_string(Classification::Kind kind) {
  switch (kind) {
    case Classification::Locked:
      return "locked";
    case Classification::Drifting:
      return "drifting";
    case Classification::Indeterminate:
      return "indeterminate";
  }
  return "indeterminate";
}

double default_drift_threshold(double mu, double delta, const LockingFunction& G) {
  return mu * mu * std::max(std::abs(delta), 0.05 * (G.G_plus() - G.G_minus())) / 10.0;
}

Classification classify_locking(const std::vector<double>& t, const std::vector<double>& psi1, double tail_fraction,
                                double lock_band, double drift_threshold, std::size_t min_samples) {
  require(t.size() == psi1.size(), "time and phase series differ in length");
  require(tail_fraction > 0.0 && tail_fraction <= 1.0, "tail_fraction must lie in (0, 1]");
  require(lock_band > 0.0 && drift_threshold >= 0.0, "lock_band must be > 0 and drift_threshold >= 0");
  Classification c;
  const std::size_t N = t.size();
  const std::size_t start = static_cast<std::size_t>(std::floor(static_cast<double>(N) * (1.0 - tail_fraction)));
  const std::size_t m = N - std::min(start, N);
  c.tail_samples = m;
  if (m < std::max<std::size_t>(min_samples, 2)) {
    c.reason = "tail has " + std::to_string(m) + " samples, need " + std::to_string(min_samples);
    return c;
  }
  const auto [lo, hi] = std::minmax_element(psi1.begin() + start, psi1.end());
  c.tail_range = *hi - *lo;
  c.rate = lsq_slope(t, psi1, start, N);
  c.total_change = psi1.back() - psi1[start];

  if (c.tail_range <= lock_band && std::abs(c.rate) <= drift_threshold) {
    c.kind = Classification::Locked;
    c.theta = circular_mean(psi1, start, N);
    return c;
  }
  if (std::abs(c.total_change) >= kTwoPi) {
    const double sign = c.total_change > 0.0 ? 1.0 : -1.0;
    constexpr int chunks = 8;
    bool consistent = true;
    for (int k = 0; k < chunks; ++k) {
      const std::size_t a = start + m * k / chunks, b = start + m * (k + 1) / chunks - 1;
      if (sign * (psi1[b] - psi1[a]) < -lock_band) consistent = false;
    }
    if (consistent) {
      c.kind = Classification::Drifting;
      return c;
    }
    c.reason = "phase change of one full turn without a consistent sign";
    return c;
  }
  c.reason = "tail range " + fmt(c.tail_range) + ", slope " + fmt(c.rate) + " (threshold " + fmt(drift_threshold) +
             "), change " + fmt(c.total_change);
  return c;
}

// ---------------------------------------------------------------------------

FullState probe_initial_state(const Analysis& a, const ProbeSpec& probe) {
  const int n = a.model.n();
  Vec z = a.orbit.z(wrap(probe.psi1_0));
  if (probe.normal_offset != 0.0) {
    const Vec tangent = a.orbit.z_prime(wrap(probe.psi1_0)).normalized();
    Vec e = Vec::Unit(n + 1, n);
    e -= e.dot(tangent) * tangent;
    require(e.norm() > 1e-12, "no normal direction at the probe phase");
    z += probe.normal_offset * e.normalized();
  }
  if (!(z[n] > 0.0)) fail(ErrorKind::DomainViolation, "probe start has r <= 0");
  return FullState{z.head(n), std::polar(z[n], probe.theta0)};
}

double lock_residual(const PhaseProjector& proj, const ModelDef& model, const ControlParams& params, double t,
                     const double* x, double r1, double psi) {
  const int n = model.n();
  const Vec z0 = proj.z0(psi);
  const double ex = (Eigen::Map<const Vec>(x, n) - z0.head(n)).norm();
  const double m = params.mu() * std::abs(model.forcing.value(params.beta * t));
  const double r0 = z0[n];
  const double er = std::max(std::abs(r1 + m - r0), std::abs(std::abs(r1 - m) - r0));
  return ex + er;
}

SimResult run_probe(const Analysis& a, const ControlParams& params, const ProbeSpec& probe, const SimOptions& sim,
                    const ClassifyOptions& cls, const StopRule& stop) {
  const auto start = std::chrono::steady_clock::now();
  require(probe.horizon > 0.0, "probe horizon must be positive");
  const int n = a.model.n();
  const PhaseProjector proj(a.orbit);
  PhaseTracker tracker(proj, a.model, params, sim.deforced_frame, sim.delta_proj);
  const double stride = output_stride(params, sim, probe.horizon);

  SimResult res;
  res.horizon = probe.horizon;
  const std::size_t expected = static_cast<std::size_t>(probe.horizon / stride) + 2;
  res.t.reserve(expected);
  res.psi_hat.reserve(expected);
  res.psi1_hat.reserve(expected);
  res.r1.reserve(expected);
  res.x.reserve(expected * static_cast<std::size_t>(n));
  const StreamStats st =
      stream_full(a.model, params, probe_initial_state(a, probe), probe.horizon, stride, sim,
                  [&](double t, const ConstVecRef& s) {
                    const auto smp = tracker.push(t, s);
                    res.t.push_back(t);
                    res.psi_hat.push_back(smp.psi_hat);
                    res.psi1_hat.push_back(smp.psi1_hat);
                    res.r1.push_back(smp.r1);
                    res.x.insert(res.x.end(), s.data(), s.data() + n);
                    res.max_distance = std::max(res.max_distance, smp.distance);
                    return !(stop && stop(smp));
                  });
  res.steps = st.steps;
  res.stopped_early = st.stopped_early;

  const double mu = params.mu();
  const double delta = mu > 0.0 ? params.delta(a.orbit.beta0()) : 0.0;
  const double threshold =
      cls.drift_threshold > 0.0 ? cls.drift_threshold : default_drift_threshold(mu, delta, a.G);
  res.classification =
      classify_locking(res.t, res.psi1_hat, cls.tail_fraction, cls.lock_band, threshold, cls.min_samples);
  Classification& c = res.classification;
  if (c.locked()) {
    res.sigma_hat = c.theta;
    if (mu > 0.0 && a.G.has_singular_data()) {
      const AveragedPhaseModel eq = averaged_equilibria(delta, a.G);
      const Equilibrium* best = nullptr;
      for (const auto& e : eq.equilibria)
        if (!best || circular_distance(e.psi, c.theta) < circular_distance(best->psi, c.theta)) best = &e;
      if (best) c.j_parity = best->stable ? 0 : 1;
    }
    const std::size_t N = res.t.size();
    const std::size_t from = N - c.tail_samples;
    res.residual.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
      res.residual[i] = lock_residual(proj, a.model, params, res.t[i], res.x.data() + i * n, res.r1[i],
                                      params.beta * res.t[i] + res.sigma_hat);
      if (i >= from) res.residual_sup = std::max(res.residual_sup, res.residual[i]);
    }
  }
  res.wall_time = seconds_since(start);
  return res;
}

double transient_cut(const LockingFunction& G, const ControlParams& params, double beta0, double factor) {
  const double period = kTwoPi / params.beta;
  const double floor = 50.0 * period;
  const double mu = params.mu();
  if (!(mu > 0.0)) return floor;
  const double mu2 = mu * mu;
  const AveragedPhaseModel eq = averaged_equilibria(params.delta(beta0), G);
  if (!eq.drifting) return std::max(floor, factor / (mu2 * eq.min_abs_slope()));
  // Averaged rotation time int dpsi / |mu^2 (G - Delta)|.
  const auto& g = G.samples();
  double rot = 0.0;
  for (double v : g) rot += 1.0 / std::abs(v - eq.delta);
  rot *= kTwoPi / static_cast<double>(g.size()) / mu2;
  return std::max(floor, 1.5 * rot);
}

// ---------------------------------------------------------------------------

DriftRun measure_drift(const Analysis& a, const ControlParams& params, const SimOptions& sim,
                       const ValidateOptions& opt) {
  require(opt.n_probe >= 1, "n_probe must be >= 1");
  require(opt.window_floor >= 0.0 && opt.window_floor < 1.0, "window_floor must lie in [0, 1)");
  const double beta0 = a.orbit.beta0();
  const double mu = params.mu(), mu2 = mu * mu;
  const double detune = params.beta - beta0;
  const double period = kTwoPi / params.beta;
  const LockingFunction& G = a.G;
  auto pred = [&](double psi1) { return mu2 * G.value(psi1) - detune; };

  DriftRun run;
  run.mu = mu;
  run.pred_scale = mu > 0.0 ? mu2 : std::abs(detune);
  require(run.pred_scale > 0.0, "drift validation needs gamma > 0 or beta != beta0");

  // Largest predicted rate over the cycle.
  double qmax = 0.0;
  for (double v : G.samples()) qmax = std::max(qmax, std::abs(mu2 * v - detune));
  const double cap = mu > 0.0 ? 30.0 / qmax : 200.0 * period;
  const double settle = 20.0 * period;

  struct Window {
    double meas, pred;
  };
  std::vector<std::vector<Window>> per_probe(opt.n_probe);
  std::vector<double> simulated(opt.n_probe, 0.0);
  SimOptions so = sim;
  so.stride = period / 32.0;
  so.max_samples = std::numeric_limits<std::size_t>::max();

  parallel_for(static_cast<std::size_t>(opt.n_probe), opt.jobs, [&](std::size_t k) {
    ProbeSpec probe;
    probe.psi1_0 = kTwoPi * static_cast<double>(k) / opt.n_probe;
    probe.horizon = std::max(cap, settle * 2.0);
    StopRule stop;
    if (mu > 0.0)
      stop = [&](const PhaseTracker::Sample& s) {
        return s.t > settle && std::abs(pred(s.psi1_hat)) < 0.1 * qmax;
      };
    ClassifyOptions cls;
    cls.min_samples = 0;
    cls.drift_threshold = 1.0;
    const SimResult r = run_probe(a, params, probe, so, cls, stop);
    simulated[k] = r.t.empty() ? 0.0 : r.t.back();
    constexpr std::size_t w = 32;
    for (std::size_t i = 0; i + w < r.t.size(); i += w) {
      if (r.t[i] < settle) continue;
      const double meas = (r.psi1_hat[i + w] - r.psi1_hat[i]) / (r.t[i + w] - r.t[i]);
      double p = 0.5 * (pred(r.psi1_hat[i]) + pred(r.psi1_hat[i + w]));
      for (std::size_t j = i + 1; j < i + w; ++j) p += pred(r.psi1_hat[j]);
      p /= static_cast<double>(w);
      per_probe[k].push_back({meas, p});
    }
  });

  double pmax = 0.0;
  for (const auto& ws : per_probe)
    for (const auto& w : ws) pmax = std::max(pmax, std::abs(w.pred));
  double sum = 0.0, num = 0.0, den = 0.0;
  for (const auto& ws : per_probe)
    for (const auto& w : ws) {
      if (std::abs(w.pred) < opt.window_floor * pmax || w.pred == 0.0) continue;
      const double rel = std::abs(w.meas - w.pred) / std::abs(w.pred);
      sum += rel;
      run.max_rel_dev = std::max(run.max_rel_dev, rel);
      ++run.windows;
      const double q = w.pred / run.pred_scale;
      num += w.meas * q;
      den += q * q;
    }
  if (run.windows == 0) fail(ErrorKind::ContractViolation, "no drift windows above the prediction floor");
  run.mean_rel_dev = sum / static_cast<double>(run.windows);
  run.coefficient = num / den;
  for (double s : simulated) run.time_simulated += s;
  return run;
}

DriftReport validate_averaged_drift(const Analysis& a, const ControlParams& params, const SimOptions& sim,
                                    const ValidateOptions& opt) {
  params.validate();
  const double mu = params.mu(), nu = params.nu();
  if (mu > 0.1 || nu > 1e-2)
    fail(ErrorKind::RegimeViolation,
         "averaging regime needs mu <= 0.1 and nu <= 0.01, got mu=" + fmt(mu) + ", nu=" + fmt(nu));
  const double beta0 = a.orbit.beta0();
  DriftReport rep;
  rep.mu = mu;
  rep.nu = nu;
  rep.delta = mu > 0.0 ? params.delta(beta0) : 0.0;
  rep.full = measure_drift(a, params, sim, opt);
  ControlParams half = params;
  half.gamma = params.gamma / 2.0;
  half.beta = beta0 + (params.beta - beta0) / 4.0;
  rep.half = measure_drift(a, half, sim, opt);
  rep.drift_ratio = rep.half.coefficient / rep.full.coefficient;
  return rep;
}

// ---------------------------------------------------------------------------

BoundaryResult find_locking_boundary(const LockProbe& probe, double delta_locked, double delta_unlocked,
                                     double tol) {
  require(tol > 0.0, "bisection tolerance must be positive");
  require(delta_locked != delta_unlocked, "bracket endpoints coincide");
  BoundaryResult out;
  const Classification c_lo = probe(delta_locked);
  const Classification c_hi = probe(delta_unlocked);
  out.evaluations = 2;
  out.history.emplace_back(delta_locked, c_lo);
  out.history.emplace_back(delta_unlocked, c_hi);
  if (!c_lo.locked() || c_hi.locked())
    fail(ErrorKind::BracketFailure, "invalid bracket: Delta=" + fmt(delta_locked) + " is " + to_string(c_lo.kind) +
                                        ", Delta=" + fmt(delta_unlocked) + " is " + to_string(c_hi.kind));
  double lo = delta_locked, hi = delta_unlocked;
  while (std::abs(hi - lo) > tol) {
    const double mid = 0.5 * (lo + hi);
    const Classification c = probe(mid);
    ++out.evaluations;
    out.history.emplace_back(mid, c);
    (c.locked() ? lo : hi) = mid;
  }
  out.lo = lo;
  out.hi = hi;
  out.delta_c = 0.5 * (lo + hi);
  return out;
}

BoundaryResult find_locking_boundary(const Analysis& a, double alpha, double gamma, Side side,
                                     const SimOptions& sim, const BoundaryOptions& opt) {
  const LockingFunction& G = a.G;
  require(G.has_singular_data() && !G.singular_points().empty(), "boundary search needs singular data of G");
  require(alpha > 0.0 && gamma > 0.0, "boundary search needs alpha > 0 and gamma > 0");
  const double beta0 = a.orbit.beta0();
  const double mu = gamma / alpha, mu2 = mu * mu;
  const bool upper = side == Side::Upper;

  const SingularPoint* ext = nullptr;
  for (const auto& s : G.singular_points())
    if (!ext || (upper ? s.value > ext->value : s.value < ext->value)) ext = &s;
  const double edge = ext->value;
  const double curvature = std::max(std::abs(ext->second), 1e-12);
  const double range = G.G_plus() - G.G_minus();
  const double scale = edge != 0.0 ? std::abs(edge) : range;
  const double tol = opt.tol > 0.0 ? opt.tol : 0.03 * scale;
  const double thr = opt.drift_threshold > 0.0 ? opt.drift_threshold : tol;
  const double outward = upper ? 1.0 : -1.0;
  const double d_locked = 0.5 * (G.G_minus() + G.G_plus());
  const double d_unlocked = edge + outward * 0.5 * scale;

  const double period = kTwoPi / (beta0 + mu2 * d_locked);
  ClassifyOptions cls;
  cls.drift_threshold = mu2 * thr;

  // Started at the extremum, a locked run relaxes at rate mu^2 sqrt(2 |G''| d)
  // from an initial drift of at most 2 mu^2 d, d = |Delta - edge|; the tail
  // slope falls below the threshold once the decay factor reaches thr / 2d.
  auto horizon = [&](double delta) {
    const double u = std::max(std::abs(delta - edge) / thr, 0.5 * std::exp(2.0));
    const double lambda = mu2 * std::sqrt(2.0 * curvature * thr * u);
    const double relax = std::log(2.0 * u) / lambda;
    return std::max(2.0 * 1.25 * relax, std::max(opt.min_periods, 70.0) * period);
  };

  LockProbe probe = [&](double delta) {
    const ControlParams params = ControlParams::from_delta(alpha, gamma, delta, beta0);
    ProbeSpec spec;
    spec.psi1_0 = ext->psi;
    spec.horizon = horizon(delta);
    return run_probe(a, params, spec, sim, cls).classification;
  };
  BoundaryResult out = find_locking_boundary(probe, d_locked, d_unlocked, tol);
  out.beta_c = beta0 + mu2 * out.delta_c;
  return out;
}

// ---------------------------------------------------------------------------

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t threads = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, jobs)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next.store(count);
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::vector<SweepCell> sweep_grid(const Analysis& a, const SweepSpec& spec, const RegionSpec& region,
                                  const SimOptions& sim, const ClassifyOptions& cls) {
  require(spec.n_beta >= 1 && spec.n_gamma >= 1, "sweep grid needs at least one point per axis");
  require(spec.alpha > 0.0 && spec.beta_lo > 0.0 && spec.beta_hi >= spec.beta_lo,
          "sweep needs alpha > 0 and 0 < beta_lo <= beta_hi");
  require(spec.gamma_lo >= 0.0 && spec.gamma_hi >= spec.gamma_lo, "sweep needs 0 <= gamma_lo <= gamma_hi");
  require(spec.max_horizon > 0.0, "sweep max_horizon must be positive");
  const double beta0 = a.orbit.beta0();
  auto axis = [](double lo, double hi, int n, int i) { return n == 1 ? lo : lo + (hi - lo) * i / (n - 1); };

  const std::size_t count = static_cast<std::size_t>(spec.n_beta) * static_cast<std::size_t>(spec.n_gamma);
  std::vector<SweepCell> cells(count);
  parallel_for(count, spec.jobs, [&](std::size_t idx) {
    const auto start = std::chrono::steady_clock::now();
    SweepCell& cell = cells[idx];
    cell.index = idx;
    cell.alpha = spec.alpha;
    cell.gamma = axis(spec.gamma_lo, spec.gamma_hi, spec.n_gamma, static_cast<int>(idx) / spec.n_beta);
    cell.beta = axis(spec.beta_lo, spec.beta_hi, spec.n_beta, static_cast<int>(idx) % spec.n_beta);
    const ControlParams params{cell.alpha, cell.beta, cell.gamma};
    cell.mu = params.mu();
    cell.delta = cell.mu > 0.0 ? params.delta(beta0) : std::numeric_limits<double>::quiet_NaN();
    try {
      cell.predicted_inside = cell.mu > 0.0 && in_locking_region(params, beta0, a.G, region).inside;
      const double cut = transient_cut(a.G, params, beta0, spec.cut_factor);
      ProbeSpec probe;
      probe.psi1_0 = spec.psi1_0;
      probe.horizon = std::min(cut / (1.0 - cls.tail_fraction), spec.max_horizon);
      cell.classification = run_probe(a, params, probe, sim, cls).classification;
    } catch (const Error& e) {
      cell.error = e.what();
      cell.classification = Classification{};
      cell.classification.reason = e.what();
    }
    cell.wall_time = seconds_since(start);
  });
  return cells;
}

}  // namespace modlock
