#include <atomic>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "modlock/sim.hpp"

using namespace modlock;

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;

const Analysis& laser() {
  static const Analysis a = analyze(make_vdp_laser_model());
  return a;
}

double beta0() { return laser().orbit.beta0(); }

double slope(const std::vector<double>& t, const std::vector<double>& y, std::size_t from) {
  const double m = static_cast<double>(t.size() - from);
  double tb = 0, yb = 0;
  for (std::size_t i = from; i < t.size(); ++i) {
    tb += t[i] / m;
    yb += y[i] / m;
  }
  double num = 0, den = 0;
  for (std::size_t i = from; i < t.size(); ++i) {
    num += (t[i] - tb) * (y[i] - yb);
    den += (t[i] - tb) * (t[i] - tb);
  }
  return num / den;
}

std::vector<double> grid(std::size_t n, double dt) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = dt * static_cast<double>(i);
  return t;
}

LockingFunction sin_G() {
  const Complex I(0.0, 1.0);
  TrigSeries g({I / 2.0, 0.0, -I / 2.0});
  return find_singular_points(LockingFunction(g, g.derivative()));
}

}  // namespace

TEST_CASE("classify: constant series is locked") {
  const auto t = grid(2000, 0.1);
  const std::vector<double> psi(t.size(), 0.7);
  const Classification c = classify_locking(t, psi, 0.5, 0.15, 1e-4);
  CHECK(c.kind == Classification::Locked);
  CHECK(c.theta == doctest::Approx(0.7));
}

TEST_CASE("classify: linear drift is drifting with its rate") {
  const auto t = grid(4000, 1.0);
  std::vector<double> psi(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) psi[i] = 0.01 * t[i];
  const Classification c = classify_locking(t, psi, 0.5, 0.15, 1e-4);
  CHECK(c.kind == Classification::Drifting);
  CHECK(c.rate == doctest::Approx(0.01));
}

TEST_CASE("classify: small fast ripple stays locked") {
  const auto t = grid(5000, 0.05);
  std::vector<double> psi(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) psi[i] = 2.0 + 0.001 * std::sin(1.38 * t[i]);
  const Classification c = classify_locking(t, psi, 0.5, 0.15, 1e-4);
  CHECK(c.kind == Classification::Locked);
  CHECK(c.tail_range <= 0.15);
  CHECK(c.theta == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("classify: short series is indeterminate") {
  const auto t = grid(100, 0.1);
  const std::vector<double> psi(t.size(), 0.0);
  CHECK(classify_locking(t, psi, 0.5, 0.15, 1e-4).kind == Classification::Indeterminate);
}

TEST_CASE("classify: slow creep below a full turn is indeterminate") {
  const auto t = grid(4000, 1.0);
  std::vector<double> psi(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) psi[i] = 1e-3 * t[i];
  CHECK(classify_locking(t, psi, 0.5, 0.15, 1e-4).kind == Classification::Indeterminate);
}

TEST_CASE("unforced run from the cycle follows the cycle") {
  const Analysis& a = laser();
  const double psi0 = 0.9;
  SimOptions opt;
  opt.tol = {1e-10, 1e-12};
  const ControlParams p{200.0, beta0(), 0.0};
  const Trajectory tr =
      simulate_full(a.model, p, probe_initial_state(a, {psi0, 0.0, 1.0, 0.0}), 10 * a.orbit.period(), opt);
  double err = 0.0;
  for (std::size_t i = 0; i < tr.size(); ++i)
    err = std::max(err, std::abs(tr.state(i)[0] - a.orbit.z(beta0() * tr.t[i] + psi0)[0]));
  CHECK(err <= 100 * opt.tol.rtol);
}

TEST_CASE("unforced run from a scaled amplitude returns to the cycle") {
  const Analysis& a = laser();
  const ControlParams p{200.0, beta0(), 0.0};
  FullState init = probe_initial_state(a, {0.0, 0.0, 1.0, 0.0});
  init.y *= 1.5;
  SimOptions opt;
  opt.tol = {1e-10, 1e-12};
  opt.delta_proj = 1.0;
  const double T = a.orbit.period();
  const Trajectory tr = simulate_full(a.model, p, init, 8 * T, opt);
  const PhaseSeries ph = extract_phase(a.orbit, a.offsets, a.model, p, tr, 1.0);
  std::vector<double> avg(8, 0.0);
  std::vector<int> cnt(8, 0);
  for (std::size_t i = 0; i < ph.t.size(); ++i) {
    const auto k = static_cast<std::size_t>(ph.t[i] / T);
    if (k >= avg.size()) continue;
    avg[k] += ph.distance[i];
    ++cnt[k];
  }
  for (std::size_t k = 1; k < avg.size(); ++k) CHECK(avg[k] / cnt[k] < avg[k - 1] / cnt[k - 1]);
}

TEST_CASE("forced run at mu = 0.005 stays near the torus") {
  const Analysis& a = laser();
  const SimResult r = run_probe(a, {200.0, beta0(), 1.0}, {0.0, 0.0, 3000.0, 0.0}, {}, {});
  CHECK(r.max_distance < 0.1);
}

TEST_CASE("phase extraction is exact on cycle data") {
  const Analysis& a = laser();
  const ControlParams p{200.0, beta0(), 0.0};
  Trajectory tr;
  tr.n = 1;
  tr.deforced = true;
  tr.params = p;
  const double c = 0.4;
  for (int i = 0; i < 2000; ++i) {
    const double t = 0.01 * i;
    const Vec z = a.orbit.z(beta0() * t + c);
    tr.t.push_back(t);
    tr.states.insert(tr.states.end(), {z[0], z[1], 0.0});
  }
  const PhaseSeries ph = extract_phase(a.orbit, a.offsets, a.model, p, tr);
  double err = 0.0;
  for (std::size_t i = 0; i < ph.t.size(); ++i) err = std::max(err, std::abs(ph.psi_hat[i] - (beta0() * ph.t[i] + c)));
  CHECK(err <= 1e-8);
}

TEST_CASE("phase projection tolerates a small normal perturbation") {
  const Analysis& a = laser();
  const PhaseProjector proj(a.orbit);
  double worst = 0.0;
  for (int i = 0; i < 64; ++i) {
    const double psi = kTwoPi * (i + 0.5) / 64;
    const Vec d = a.orbit.z_prime(psi);
    Vec n(2);
    n << -d[1], d[0];
    const Vec z = a.orbit.z(psi) + 1e-4 * n / n.norm();
    const auto r = proj.project(z, psi + 0.01);
    worst = std::max(worst, circular_distance(r.psi, psi));
  }
  CHECK(worst <= 1e-3);
}

TEST_CASE("unforced relative phase drifts at beta0 - beta") {
  const Analysis& a = laser();
  const ControlParams p{200.0, beta0() + 0.01, 0.0};
  ClassifyOptions cls;
  cls.drift_threshold = 1e-4;
  const SimResult r = run_probe(a, p, {1.0, 0.0, 300.0, 0.0}, {}, cls);
  CHECK(std::abs(slope(r.t, r.psi1_hat, 0) - (beta0() - p.beta)) <= 1e-6);
}

TEST_CASE("unforced drift validation matches exactly") {
  const Analysis& a = laser();
  ValidateOptions opt;
  opt.n_probe = 2;
  const DriftReport rep = validate_averaged_drift(a, {200.0, beta0() + 0.01, 0.0}, {}, opt);
  CHECK(rep.full.mean_rel_dev <= 1e-4);
  CHECK(rep.half.mean_rel_dev <= 1e-4);
  CHECK(rep.drift_ratio == doctest::Approx(0.25).epsilon(1e-4));
}

TEST_CASE("drift validation refuses parameters outside the averaging regime") {
  try {
    validate_averaged_drift(laser(), {50.0, beta0(), 1.0}, {});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::RegimeViolation);
  }
}

TEST_CASE("bisection on the averaged sin model finds Delta_c = +-1") {
  const LockingFunction G = sin_G();
  const double thr = 2.5e-4;
  auto probe_from = [&](double psi0) {
    return [&G, psi0, thr](double delta) {
      const DenseOutput d = integrate_averaged_phase(averaged_equilibria(delta, G), 1.0, psi0, 2000.0);
      std::vector<double> t, psi;
      for (int i = 0; i <= 20000; ++i) {
        t.push_back(0.1 * i);
        psi.push_back(d(t.back())[0]);
      }
      return classify_locking(t, psi, 0.5, 0.15, thr);
    };
  };
  const BoundaryResult up = find_locking_boundary(probe_from(std::numbers::pi / 2), 0.0, 1.5, 5e-4);
  CHECK(std::abs(up.delta_c - 1.0) <= 1e-3);
  const BoundaryResult lo = find_locking_boundary(probe_from(3 * std::numbers::pi / 2), 0.0, -1.5, 5e-4);
  CHECK(std::abs(lo.delta_c + 1.0) <= 1e-3);
  try {
    find_locking_boundary(probe_from(std::numbers::pi / 2), 0.0, 0.5, 5e-4);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::BracketFailure);
  }
}

TEST_CASE("transient cut is at least fifty modulation periods") {
  const ControlParams p = ControlParams::from_delta(200.0, 4.0, -0.9, beta0());
  const double cut = transient_cut(laser().G, p, beta0());
  CHECK(cut >= 50 * kTwoPi / p.beta);
  const AveragedPhaseModel eq = averaged_equilibria(-0.9, laser().G);
  CHECK(cut >= 20.0 / (p.mu() * p.mu() * eq.min_abs_slope()) * (1 - 1e-12));
}

TEST_CASE("parallel_for visits every index once") {
  std::vector<std::atomic<int>> hits(97);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
  for (const auto& h : hits) CHECK(h.load() == 1);
}

TEST_CASE("sweep straddling the tongue forms a locked band") {
  const Analysis& a = laser();
  const double m2 = 6.25e-4;
  SweepSpec spec;
  spec.alpha = 200.0;
  spec.beta_lo = beta0() - 0.9 * m2;
  spec.beta_hi = beta0() + 0.6 * m2;
  spec.gamma_lo = 4.0;
  spec.gamma_hi = 6.0;
  spec.n_beta = 3;
  spec.n_gamma = 3;
  spec.max_horizon = 1e5;
  spec.cut_factor = 10.0;
  const auto cells = sweep_grid(a, spec, RegionSpec::defaults_for(a.G), {}, {});
  REQUIRE(cells.size() == 9);
  int agree = 0;
  for (const auto& c : cells) {
    CHECK(c.error.empty());
    const bool locked = c.classification.locked();
    if (locked == c.predicted_inside) ++agree;
  }
  CHECK(agree >= 7);
  for (int ig = 0; ig < 3; ++ig) {
    CHECK(cells[ig * 3 + 0].classification.locked());
    CHECK(cells[ig * 3 + 1].classification.locked());
    CHECK_FALSE(cells[ig * 3 + 2].classification.locked());
  }
}

TEST_CASE("sweep below the amplitude window never locks") {
  const Analysis& a = laser();
  SweepSpec spec;
  spec.alpha = 200.0;
  spec.beta_lo = spec.beta_hi = beta0();
  spec.gamma_lo = 1e-4;
  spec.gamma_hi = 1e-3;
  spec.n_beta = 1;
  spec.n_gamma = 2;
  spec.max_horizon = 2000.0;
  for (const auto& c : sweep_grid(a, spec, RegionSpec::defaults_for(a.G), {}, {})) {
    CHECK_FALSE(c.predicted_inside);
    CHECK_FALSE(c.classification.locked());
  }
}

TEST_CASE("sweep beyond 1.5 G+ drifts everywhere") {
  const Analysis& a = laser();
  SweepSpec spec;
  spec.alpha = 200.0;
  const double d = 2.0 * a.G.G_plus();
  spec.gamma_lo = 5.0;
  spec.gamma_hi = 6.0;
  spec.beta_lo = spec.beta_hi = beta0() + d * 9e-4;  // Delta from 2 G+ to 2.9 G+
  spec.n_beta = 1;
  spec.n_gamma = 2;
  for (const auto& c : sweep_grid(a, spec, RegionSpec::defaults_for(a.G), {}, {})) {
    CHECK(c.delta > 1.5 * a.G.G_plus());
    CHECK(c.classification.kind == Classification::Drifting);
  }
}

TEST_CASE("sweep cells do not depend on the thread count") {
  const Analysis& a = laser();
  SweepSpec spec;
  spec.alpha = 200.0;
  spec.gamma_lo = 5.0;
  spec.gamma_hi = 6.0;
  spec.beta_lo = beta0() + 1e-3;
  spec.beta_hi = beta0() + 2e-3;
  spec.n_beta = 2;
  spec.n_gamma = 2;
  spec.max_horizon = 3000.0;
  const auto one = sweep_grid(a, spec, RegionSpec::defaults_for(a.G), {}, {});
  spec.jobs = 3;
  const auto many = sweep_grid(a, spec, RegionSpec::defaults_for(a.G), {}, {});
  REQUIRE(one.size() == many.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i].classification.kind == many[i].classification.kind);
    CHECK(one[i].classification.rate == many[i].classification.rate);
  }
}
