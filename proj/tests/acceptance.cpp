// Acceptance checks: one line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "modlock/cli.hpp"
#include "modlock/sim.hpp"

namespace fs = std::filesystem;
using namespace modlock;

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;

// Tolerances.
constexpr double kClosureTol = 1e-9;
constexpr double kPeriodRelTol = 1e-6;
constexpr double kTrivialTol = 1e-6;
constexpr double kLiouvilleRelTol = 1e-6;
constexpr double kNormalizationTol = 1e-6;
constexpr double kMeanReHTol = 1e-8;
constexpr double kGOracleTol = 1e-6;
constexpr double kGConstTol = 1e-8;
constexpr double kDriftDevTol = 0.2;
constexpr double kRatioLo = 0.2, kRatioHi = 0.3;
constexpr double kBoundaryRelTol = 0.10;
constexpr double kThetaTol = 0.15;
constexpr double kResidualTol = 0.05;
constexpr double kTransitFactor = 1.5;
constexpr double kTransitDelta = 0.2;

constexpr double kAlpha = 200.0;
constexpr double kGammaCoarse = 2.0;  // mu = 0.01
constexpr double kGammaFine = 1.0;    // mu = 0.005
constexpr double kGammaLocked = 4.0;  // mu = 0.02

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail, double seconds) {
  if (!ok) ++failures;
  std::printf("criterion %2d: %s  %s  [%s] (%.1fs)\n", id, ok ? "PASS" : "FAIL", what.c_str(), detail.c_str(),
              seconds);
  std::fflush(stdout);
}

template <class... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Runs one criterion; library errors count as failures.
void criterion(int id, const std::string& what, const std::function<std::pair<bool, std::string>()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const auto [ok, detail] = body();
    report(id, ok, what, detail, since(t0));
  } catch (const std::exception& e) {
    report(id, false, what, std::string("error: ") + e.what(), since(t0));
  }
}

double poincare_period(const ModelDef& model) {
  Vec z0(2);
  z0 << 0.1, 0.5;
  const DenseOutput d = integrate_adaptive(planar_field(model), z0, {0.0, 120.0}, {1e-12, 1e-14});
  std::vector<double> crossings;
  const auto& k = d.knots();
  for (std::size_t i = 1; i < k.size(); ++i) {
    double a = k[i - 1], b = k[i];
    if (a < 60.0 || !(d.component(a, 0) < 0 && d.component(b, 0) >= 0)) continue;
    for (int it = 0; it < 200 && b - a > 1e-14; ++it) {
      const double m = 0.5 * (a + b);
      (d.component(m, 0) < 0 ? a : b) = m;
    }
    crossings.push_back(0.5 * (a + b));
  }
  if (crossings.size() < 2) fail(ErrorKind::NoConvergence, "too few Poincare crossings");
  return (crossings.back() - crossings.front()) / static_cast<double>(crossings.size() - 1);
}

double trapezoid_G(const Analysis& a, const ForcingProfile& f, double psi, int n = 8192) {
  double sum = 0.0;
  Vec g(a.model.n());
  for (int i = 0; i < n; ++i) {
    const double xi = kTwoPi * i / n;
    a.model.system->g(a.orbit.z(xi + psi).head(a.model.n()), g);
    sum += a.adjoint.p(xi + psi).head(a.model.n()).dot(g) * f.intensity(xi);
  }
  return sum / n;
}

double rel_dev(double value, double edge) { return std::abs(value - edge) / std::abs(edge); }

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "modlock");
  std::vector<char*> argv;
  for (auto& s : args) argv.push_back(s.data());
  std::ostringstream out, err;
  return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

int main() {
  const Analysis a = analyze(make_vdp_laser_model());
  const double b0 = a.orbit.beta0();
  const LockingFunction& G = a.G;
  const SimOptions sim;

  criterion(1, "orbit closure and period", [&] {
    const double closure = a.orbit.closure_residual();
    const double err = std::abs(a.orbit.period() - poincare_period(a.model)) / a.orbit.period();
    return std::pair{closure <= kClosureTol && err <= kPeriodRelTol,
                     fmt("closure=%.2e<=%.0e period_rel_err=%.2e<=%.0e T=%.12f", closure, kClosureTol, err,
                         kPeriodRelTol, a.orbit.period())};
  });

  criterion(2, "Floquet multipliers", [&] {
    const auto& fl = a.floquet;
    const double lam = std::abs(fl.multipliers.at(1));
    const double liouville = std::exp(trace_integral(a.orbit, 128)) / std::abs(fl.multipliers.at(0));
    const double err = std::abs(lam - liouville) / liouville;
    return std::pair{fl.trivial_multiplier_error <= kTrivialTol && lam < 1.0 && err <= kLiouvilleRelTol,
                     fmt("trivial_err=%.2e<=%.0e |lambda|=%.11f<1 liouville_rel_err=%.2e<=%.0e",
                         fl.trivial_multiplier_error, kTrivialTol, lam, err, kLiouvilleRelTol)};
  });

  criterion(3, "adjoint normalization and zero-mean Re h", [&] {
    double worst = 0.0;
    for (int i = 0; i < 512; ++i) {
      const double psi = kTwoPi * i / 512;
      worst = std::max(worst, std::abs(a.adjoint.p(psi).dot(a.orbit.z_prime(psi)) - 1.0));
    }
    const double mrh = std::abs(mean_re_h(a.model, a.orbit));
    return std::pair{worst <= kNormalizationTol && mrh <= kMeanReHTol,
                     fmt("max|p.z0'-1|=%.2e<=%.0e |mean Re h|=%.2e<=%.0e", worst, kNormalizationTol, mrh,
                         kMeanReHTol)};
  });

  criterion(4, "locking function G", [&] {
    double oracle = 0.0;
    for (int i = 0; i < 128; ++i) {
      const double psi = kTwoPi * i / 128;
      oracle = std::max(oracle, std::abs(G.value(psi) - trapezoid_G(a, a.model.forcing, psi)));
    }
    const LockingFunction zero = compute_G(a.model, a.orbit, a.adjoint, ForcingProfile(std::vector<Complex>{0.0}));
    double zmax = 0.0;
    for (double v : zero.samples()) zmax = std::max(zmax, std::abs(v));
    const LockingFunction cst = compute_G(a.model, a.orbit, a.adjoint, ForcingProfile(std::vector<Complex>{0.7}));
    double cspread = 0.0;
    for (double v : cst.samples()) cspread = std::max(cspread, std::abs(v - cst.samples()[0]));
    for (double v : cst.derivative_samples()) cspread = std::max(cspread, std::abs(v));
    const LockingFunction two = find_singular_points(
        compute_G(a.model, a.orbit, a.adjoint, ForcingProfile({{1.0, 0.0}, {0.4, 0.0}, {-0.8, 0.0}})));
    bool alternating = true;
    const auto& sp = two.singular_points();
    for (std::size_t i = 0; i < sp.size(); ++i)
      alternating = alternating && sp[i].second * sp[(i + 1) % sp.size()].second < 0.0;
    const bool ok = oracle <= kGOracleTol && zmax == 0.0 && cspread <= kGConstTol &&
                    G.singular_points().size() == 2 && sp.size() == 4 && alternating;
    return std::pair{ok, fmt("oracle_sup=%.2e<=%.0e zero_sup=%.1e const_spread=%.2e<=%.0e case1_points=%zu "
                             "case2_points=%zu alternating=%d",
                             oracle, kGOracleTol, zmax, cspread, kGConstTol, G.singular_points().size(), sp.size(),
                             int(alternating))};
  });

  criterion(5, "averaged drift at mu=0.01 and mu=0.005", [&] {
    const ControlParams p = ControlParams::from_delta(kAlpha, kGammaCoarse, 0.0, b0);
    const DriftReport r = validate_averaged_drift(a, p, sim);
    const bool ok = r.full.mean_rel_dev <= kDriftDevTol && r.half.mean_rel_dev <= kDriftDevTol &&
                    r.drift_ratio >= kRatioLo && r.drift_ratio <= kRatioHi;
    return std::pair{ok, fmt("dev(mu=0.01)=%.3f dev(mu=0.005)=%.3f <=%.1f ratio=%.3f in [%.1f,%.1f]",
                             r.full.mean_rel_dev, r.half.mean_rel_dev, kDriftDevTol, r.drift_ratio, kRatioLo,
                             kRatioHi)};
  });

  // Boundaries at both amplitudes, shared by criteria 6 and 9.
  struct Edges {
    double upper = 0.0, lower = 0.0;
  };
  Edges coarse, fine;
  std::string boundary_error;
  const auto tb = std::chrono::steady_clock::now();
  try {
    coarse.upper = find_locking_boundary(a, kAlpha, kGammaCoarse, Side::Upper, sim).delta_c;
    coarse.lower = find_locking_boundary(a, kAlpha, kGammaCoarse, Side::Lower, sim).delta_c;
    fine.upper = find_locking_boundary(a, kAlpha, kGammaFine, Side::Upper, sim).delta_c;
    fine.lower = find_locking_boundary(a, kAlpha, kGammaFine, Side::Lower, sim).delta_c;
  } catch (const std::exception& e) {
    boundary_error = e.what();
  }
  const double boundary_time = since(tb);

  criterion(6, "locking boundary", [&] {
    if (!boundary_error.empty()) return std::pair{false, "error: " + boundary_error};
    const double du = rel_dev(coarse.upper, G.G_plus()), dl = rel_dev(coarse.lower, G.G_minus());
    const double fu = rel_dev(fine.upper, G.G_plus()), fl = rel_dev(fine.lower, G.G_minus());
    const bool ok = du <= kBoundaryRelTol && dl <= kBoundaryRelTol && fu <= du && fl <= dl;
    return std::pair{ok, fmt("mu=0.01: upper=%.5f (%.2f%%) lower=%.5f (%.2f%%) <=%.0f%%; mu=0.005: upper=%.5f "
                             "(%.2f%%) lower=%.5f (%.2f%%) not above mu=0.01; G+=%.5f G-=%.5f; boundary runs %.0fs",
                             coarse.upper, 100 * du, coarse.lower, 100 * dl, 100 * kBoundaryRelTol, fine.upper,
                             100 * fu, fine.lower, 100 * fl, G.G_plus(), G.G_minus(), boundary_time)};
  });

  criterion(7, "locked-state geometry at mu=0.02", [&] {
    const double mid = 0.5 * (G.G_minus() + G.G_plus());
    const ControlParams p = ControlParams::from_delta(kAlpha, kGammaLocked, mid, b0);
    const RegionVerdict v = in_locking_region(p, b0, G, RegionSpec::defaults_for(G));
    const AveragedPhaseModel eq = averaged_equilibria(mid, G);
    const ClassifyOptions cls;
    const double horizon = transient_cut(G, p, b0) / (1.0 - cls.tail_fraction);
    std::vector<ProbeSpec> probes;
    for (int k = 0; k < 9; ++k) probes.push_back({kTwoPi * k / 9, 0.0, horizon, 0.0});
    probes.push_back({1.0, 0.05, horizon, 0.0});
    int locked = 0, excused = 0, bad = 0;
    double worst_theta = 0.0, worst_res = 0.0;
    for (const auto& pr : probes) {
      const SimResult r = run_probe(a, p, pr, sim, cls);
      if (!r.classification.locked()) {
        bool near_unstable = false;
        for (const auto& e : eq.equilibria)
          near_unstable = near_unstable || (!e.stable && circular_distance(e.psi, pr.psi1_0) <= 10 * cls.lock_band);
        (near_unstable && r.classification.kind == Classification::Indeterminate ? excused : bad) += 1;
        continue;
      }
      ++locked;
      const Equilibrium& s = eq.nearest_stable(r.classification.theta);
      worst_theta = std::max(worst_theta, circular_distance(s.psi, r.classification.theta));
      if (s.slope >= 0.0) ++bad;
      worst_res = std::max(worst_res, r.residual_sup);
    }
    const bool ok = v.inside && bad == 0 && locked >= 8 && worst_theta <= kThetaTol && worst_res <= kResidualTol;
    return std::pair{ok, fmt("inside=%d probes=%zu locked=%d excused=%d failed=%d max|theta-stable|=%.4f<=%.2f "
                             "residual_sup=%.4f<=%.2f",
                             int(v.inside), probes.size(), locked, excused, bad, worst_theta, kThetaTol, worst_res,
                             kResidualTol)};
  });

  criterion(8, "transit time", [&] {
    const double mid = 0.5 * (G.G_minus() + G.G_plus());
    const ControlParams p = ControlParams::from_delta(kAlpha, kGammaLocked, mid, b0);
    const double mu = p.mu();
    const TransitBound b = transit_time_bound(G, mid, kTransitDelta, mu);
    double reached = -1.0;
    const StopRule stop = [&](const PhaseTracker::Sample& s) {
      if (s.psi1_hat >= b.to) {
        reached = s.t;
        return true;
      }
      return false;
    };
    ClassifyOptions cls;
    cls.min_samples = 0;
    run_probe(a, p, {b.from, 0.0, 3.0 * b.T, 0.0}, sim, cls, stop);
    const bool ok = reached > 0.0 && reached <= kTransitFactor * b.T;
    return std::pair{ok, fmt("from=%.4f to=%.4f measured=%.1f bound=%.1f ratio=%.3f<=%.1f", b.from, b.to, reached,
                             b.T, reached / b.T, kTransitFactor)};
  });

  criterion(9, "tongue half-width scaling", [&] {
    if (!boundary_error.empty()) return std::pair{false, "error: " + boundary_error};
    const double mc = kGammaCoarse / kAlpha, mf = kGammaFine / kAlpha;
    const double wc = mc * mc * (coarse.upper - coarse.lower), wf = mf * mf * (fine.upper - fine.lower);
    const double ratio = wf / wc;
    return std::pair{ratio >= kRatioLo && ratio <= kRatioHi,
                     fmt("beta width gamma=2: %.4e gamma=1: %.4e ratio=%.4f in [%.1f,%.1f]", wc, wf, ratio, kRatioLo,
                         kRatioHi)};
  });

  criterion(10, "determinism and exit codes", [&] {
    const fs::path root = fs::temp_directory_path() / "modlock_acceptance";
    fs::remove_all(root);
    const std::vector<std::string> sets = {"--set", "sweep.n_beta=3",     "--set", "sweep.n_gamma=2",
                                           "--set", "sweep.gamma_lo=4",   "--set", "sweep.gamma_hi=5",
                                           "--set", "sweep.max_horizon=3000"};
    std::vector<std::string> r1 = {"sweep", "--out", (root / "a").string(), "--jobs", "1"};
    std::vector<std::string> r2 = {"sweep", "--out", (root / "b").string(), "--jobs", "2"};
    r1.insert(r1.end(), sets.begin(), sets.end());
    r2.insert(r2.end(), sets.begin(), sets.end());
    const bool ran = run_cli(r1) == 0 && run_cli(r2) == 0;
    const bool same = ran && slurp(root / "a" / "sweep.csv") == slurp(root / "b" / "sweep.csv") &&
                      !slurp(root / "a" / "sweep.csv").empty();
    const std::string out = (root / "codes").string();
    const std::vector<std::pair<std::vector<std::string>, int>> cases = {
        {{"orbit", "--out", out}, 0},
        {{"orbit", "--out", out, "--set", "model.bogus=1"}, 2},
        {{"frobnicate"}, 2},
        {{"orbit", "--out", out, "--set", "model.eta=-1"}, 3},
        {{"gfun", "--out", out, "--set", "locking.nondeg_tol=10"}, 4},
        {{"validate", "--out", out, "--set", "control.gamma=50"}, 4},
        {{"simulate", "--out", out, "--set", "control.gamma=2", "--set", "sim.normal_offset=-5"}, 6},
        {{"orbit", "--config", "/nonexistent/modlock.cfg", "--out", out}, 7},
    };
    int codes_ok = 0;
    std::string got;
    for (const auto& [args, code] : cases) {
      const int c = run_cli(args);
      codes_ok += c == code;
      got += std::to_string(c);
    }
    bool table = true;
    for (int k = 0; k <= static_cast<int>(ErrorKind::Io); ++k) {
      const int c = exit_code(static_cast<ErrorKind>(k));
      table = table && c >= 2 && c <= 7;
    }
    const bool ok = same && codes_ok == static_cast<int>(cases.size()) && table;
    return std::pair{ok, fmt("sweep_identical=%d exit_codes=%s expected=02234467 table_ok=%d", int(same), got.c_str(),
                             int(table))};
  });

  std::printf("acceptance: %d failed\n", failures);
  return failures == 0 ? 0 : 1;
}
