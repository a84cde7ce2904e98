#include "modlock/locking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "modlock/quadrature.hpp"

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

template <class Fn>
double bisect_root(Fn&& fn, double a, double b, double fa, double tol = 1e-13) {
  for (int i = 0; i < 200 && b - a > tol; ++i) {
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

}  // namespace

double circular_distance(double a, double b) {
  const double d = std::abs(wrap(a) - wrap(b));
  return std::min(d, kTwoPi - d);
}

// ---------------------------------------------------------------------------

TrigSeries::TrigSeries(std::vector<Complex> coeffs) : coeffs_(std::move(coeffs)) {
  require(coeffs_.size() % 2 == 1, "trigonometric series needs 2M+1 coefficients");
  order_ = static_cast<int>(coeffs_.size() / 2);
}

Complex TrigSeries::coeff(int k) const {
  if (coeffs_.empty() || std::abs(k) > order_) return 0.0;
  return coeffs_[k + order_];
}

double TrigSeries::value(double psi) const {
  if (coeffs_.empty()) return 0.0;
  const Complex z = std::polar(1.0, psi);
  Complex p = 1.0;
  double sum = coeffs_[order_].real();
  for (int k = 1; k <= order_; ++k) {
    p *= z;
    sum += (coeffs_[order_ + k] * p + coeffs_[order_ - k] * std::conj(p)).real();
  }
  return sum;
}

TrigSeries TrigSeries::derivative() const {
  std::vector<Complex> d(coeffs_.size());
  for (int k = -order_; k <= order_; ++k) d[k + order_] = Complex(0.0, k) * coeffs_[k + order_];
  return coeffs_.empty() ? TrigSeries() : TrigSeries(std::move(d));
}

// ---------------------------------------------------------------------------

LockingFunction::LockingFunction(TrigSeries g, TrigSeries dg, int n_grid)
    : g_(std::move(g)), dg_(std::move(dg)), d2g_(dg_.derivative()) {
  require(n_grid >= 16, "locking function grid needs at least 16 points");
  grid_.resize(n_grid);
  values_.resize(n_grid);
  derivs_.resize(n_grid);
  for (int i = 0; i < n_grid; ++i) {
    grid_[i] = kTwoPi * i / n_grid;
    values_[i] = g_.value(grid_[i]);
    derivs_[i] = dg_.value(grid_[i]);
  }
  g_minus_ = *std::min_element(values_.begin(), values_.end());
  g_plus_ = *std::max_element(values_.begin(), values_.end());
}

std::vector<double> LockingFunction::singular_values() const {
  std::vector<double> s;
  for (const auto& p : singular_) s.push_back(p.value);
  return s;
}

// ---------------------------------------------------------------------------

LockingIntegrand locking_integrand(const ModelDef& model, const PeriodicOrbit& orbit, const AdjointOrbit& adjoint,
                                   int order, int n_quad) {
  require(order >= 0, "integrand order must be non-negative");
  require(n_quad >= 8 && n_quad % 8 == 0, "n_quad must be a positive multiple of 8");
  const int n = model.n();
  const GaussRule rule = composite_gauss(0.0, kTwoPi, n_quad / 8, 8);

  LockingIntegrand out;
  out.order = order;
  out.w.assign(2 * order + 1, 0.0);
  out.dw.assign(2 * order + 1, 0.0);
  Vec gx(n);
  Mat dgx(n, n);
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double s = rule.nodes[i];
    const Vec z = orbit.z(s);
    const Vec zp = orbit.z_prime(s);
    const Vec p = adjoint.p(s);
    const Vec pp = adjoint.p_prime(s);
    const auto x = z.head(n);
    model.system->g(x, gx);
    model.system->dg(x, dgx);
    const double w = p.head(n).dot(gx);
    const double dw = pp.head(n).dot(gx) + p.head(n).dot(dgx * zp.head(n));
    const double weight = rule.weights[i] / kTwoPi;
    for (int j = -order; j <= order; ++j) {
      const Complex e = std::polar(weight, -j * s);
      out.w[j + order] += w * e;
      out.dw[j + order] += dw * e;
    }
  }
  out.mean = out.w[order].real();
  return out;
}

LockingFunction compute_G(const ModelDef& model, const PeriodicOrbit& orbit, const AdjointOrbit& adjoint,
                          const ForcingProfile& forcing, int n_grid, int n_quad) {
  if (!(adjoint.normalization_residual() <= 1e-4))
    fail(ErrorKind::ContractViolation, "orbit and adjoint are inconsistent (normalization residual " +
                                           fmt(adjoint.normalization_residual()) + ")");
  const int K = std::max(forcing.order(), 0);
  const std::vector<Complex> c = forcing.intensity_harmonics();
  const LockingIntegrand wi = locking_integrand(model, orbit, adjoint, 2 * K, n_quad);

  // G(psi) = sum_m c_m w_{-m} e^{-im psi}: coefficient of e^{ik psi} is c_{-k} w_k.
  std::vector<Complex> g(2 * K + 1, 0.0), dg(2 * K + 1, 0.0);
  if (!c.empty())
    for (int k = -K; k <= K; ++k) {
      g[k + K] = c[-k + K] * wi.w[k + 2 * K];
      dg[k + K] = c[-k + K] * wi.dw[k + 2 * K];
    }
  return LockingFunction(TrigSeries(std::move(g)), TrigSeries(std::move(dg)), n_grid);
}

LockingFunction find_singular_points(const LockingFunction& G, double nondeg_tol) {
  LockingFunction out = G;
  out.singular_.clear();
  out.warning_.clear();
  out.flat_ = false;
  out.has_singular_ = true;

  const auto& grid = G.grid();
  const auto& d = G.derivative_samples();
  const int N = static_cast<int>(grid.size());
  const double scale = std::max(1.0, G.max_abs());
  double dmax = 0.0;
  for (double v : d) dmax = std::max(dmax, std::abs(v));
  if (dmax <= 1e-9 * scale) {
    out.flat_ = true;
    out.warning_ = "degenerate G: constant in psi, no singular points";
    return out;
  }
  if (nondeg_tol <= 0.0) nondeg_tol = 1e-4 * G.max_abs();

  auto dfn = [&](double psi) { return G.derivative(psi); };
  for (int i = 0; i < N; ++i) {
    const double a = grid[i];
    const double b = i + 1 < N ? grid[i + 1] : kTwoPi;
    const double fa = d[i];
    const double fb = d[(i + 1) % N];
    if ((fa > 0.0) == (fb > 0.0)) continue;
    const double psi = wrap(bisect_root(dfn, a, b, fa));
    const double second = G.second_derivative(psi);
    if (std::abs(second) <= nondeg_tol) {
      fail(ErrorKind::Nondegeneracy, "singular point of G at psi=" + fmt(psi) + " has |G''|=" +
                                         fmt(std::abs(second)) + " <= " + fmt(nondeg_tol));
    }
    out.singular_.push_back({psi, G.value(psi), second});
  }
  std::sort(out.singular_.begin(), out.singular_.end(), [](auto& x, auto& y) { return x.psi < y.psi; });

  if (!out.singular_.empty()) {
    out.g_minus_ = std::numeric_limits<double>::infinity();
    out.g_plus_ = -std::numeric_limits<double>::infinity();
    for (const auto& s : out.singular_) {
      out.g_minus_ = std::min(out.g_minus_, s.value);
      out.g_plus_ = std::max(out.g_plus_, s.value);
    }
  }
  const std::size_t count = out.singular_.size();
  bool alternating = count % 2 == 0;
  for (std::size_t i = 0; i + 1 < count && alternating; ++i)
    alternating = (out.singular_[i].second > 0.0) != (out.singular_[i + 1].second > 0.0);
  if (!alternating) out.warning_ = "singular points do not alternate in the sign of G''";
  return out;
}

// ---------------------------------------------------------------------------

RegionSpec RegionSpec::defaults_for(const LockingFunction& G) {
  RegionSpec spec;
  spec.margin = 0.05 * (G.G_plus() - G.G_minus());
  return spec;
}

void RegionSpec::validate() const {
  if (!(mu_star_low > 0.0)) fail(ErrorKind::Config, "region.mu_star_low must be > 0");
  if (!(mu_star_high > 0.0)) fail(ErrorKind::Config, "region.mu_star_high must be > 0");
  if (!(margin > 0.0)) fail(ErrorKind::Config, "region.margin must be > 0");
}

RegionVerdict in_locking_region(const ControlParams& params, double beta0, const LockingFunction& G,
                                const RegionSpec& spec) {
  require(G.has_singular_data(), "locking function has no singular data");
  RegionVerdict v;
  const double a = params.alpha, g = params.gamma;
  if (!(spec.mu_star_low / a < g && g < spec.mu_star_high * a)) v.violations.push_back("amplitude-window");
  if (g > 0.0) {
    v.delta = params.delta(beta0);
    if (!(G.G_minus() < v.delta && v.delta < G.G_plus())) v.violations.push_back("detuning");
    std::vector<double> S = G.singular_values();
    if (S.empty()) S = {G.G_minus(), G.G_plus()};
    v.distance_to_S = std::numeric_limits<double>::infinity();
    for (double s : S) v.distance_to_S = std::min(v.distance_to_S, std::abs(v.delta - s));
    if (!(v.distance_to_S > spec.margin)) v.violations.push_back("singular-margin");
  } else {
    v.delta = std::numeric_limits<double>::quiet_NaN();
    v.distance_to_S = std::numeric_limits<double>::quiet_NaN();
  }
  v.inside = v.violations.empty();
  return v;
}

// ---------------------------------------------------------------------------

int BoundaryCurves::curve_count() const {
  return static_cast<int>(std::count_if(branches.begin(), branches.end(), [](auto& b) { return !b.is_line; }));
}

int BoundaryCurves::line_count() const {
  return static_cast<int>(std::count_if(branches.begin(), branches.end(), [](auto& b) { return b.is_line; }));
}

BoundaryCurves boundary_curves(const LockingFunction& G, const RegionSpec& spec, const Section& section,
                               double beta0) {
  require(G.has_singular_data(), "locking function has no singular data");
  require(section.points >= 2 && section.hi > section.lo, "section needs points >= 2 and hi > lo");
  spec.validate();
  BoundaryCurves out;

  // Candidate G~ values: inner edges of [G-, G+] and both sides of every
  // interior singular value.
  std::vector<std::pair<std::string, double>> cands;
  const double eps = spec.margin;
  cands.emplace_back("G_minus", G.G_minus() + eps);
  int j = 0;
  for (const auto& s : G.singular_points()) {
    ++j;
    if (s.value == G.G_minus() || s.value == G.G_plus()) continue;
    cands.emplace_back("S" + std::to_string(j) + "-", s.value - eps);
    cands.emplace_back("S" + std::to_string(j) + "+", s.value + eps);
  }
  cands.emplace_back("G_plus", G.G_plus() - eps);

  auto grid_at = [&](int i) { return section.lo + (section.hi - section.lo) * i / (section.points - 1); };

  if (section.kind == Section::AlphaConst) {
    const double alpha = section.fixed;
    require(alpha > 0.0, "alpha must be positive");
    const double g_lo = spec.mu_star_low / alpha, g_hi = spec.mu_star_high * alpha;
    if (!(g_lo < g_hi)) {
      out.diagnostic = "empty section: amplitude window (" + fmt(g_lo) + ", " + fmt(g_hi) + ") is empty";
      return out;
    }
    for (const auto& [label, gt] : cands) {
      if (gt == 0.0) continue;
      Branch b{label, false, gt, {}};
      for (int i = 0; i < section.points; ++i) {
        const double beta = grid_at(i);
        const double q = (beta - beta0) / gt;
        if (!(q > 0.0)) continue;
        const double gamma = alpha * std::sqrt(q);
        if (g_lo < gamma && gamma < g_hi) b.points.push_back({beta, gamma});
      }
      if (!b.points.empty()) out.branches.push_back(std::move(b));
    }
    Branch low{"window_low", true, 0.0, {}}, high{"window_high", true, 0.0, {}};
    for (int i = 0; i < section.points; ++i) {
      low.points.push_back({grid_at(i), g_lo});
      high.points.push_back({grid_at(i), g_hi});
    }
    out.branches.push_back(std::move(low));
    out.branches.push_back(std::move(high));
  } else {
    const double beta = section.fixed;
    require(section.lo > 0.0, "1/alpha range must be positive");
    for (const auto& [label, gt] : cands) {
      if (gt == 0.0) continue;
      const double q = (beta - beta0) / gt;
      if (!(q > 0.0)) continue;
      Branch b{label, false, gt, {}};
      for (int i = 0; i < section.points; ++i) {
        const double x = grid_at(i);
        const double gamma = std::sqrt(q) / x;
        if (spec.mu_star_low * x < gamma && gamma < spec.mu_star_high / x) b.points.push_back({x, gamma});
      }
      if (!b.points.empty()) out.branches.push_back(std::move(b));
    }
    Branch low{"window_low", true, 0.0, {}}, high{"window_high", true, 0.0, {}};
    for (int i = 0; i < section.points; ++i) {
      const double x = grid_at(i);
      low.points.push_back({x, spec.mu_star_low * x});
      high.points.push_back({x, spec.mu_star_high / x});
    }
    out.branches.push_back(std::move(low));
    out.branches.push_back(std::move(high));
  }
  if (out.curve_count() == 0) out.diagnostic = "no boundary branch intersects the section";
  return out;
}

// ---------------------------------------------------------------------------

const Equilibrium& AveragedPhaseModel::nearest_stable(double psi) const {
  const Equilibrium* best = nullptr;
  for (const auto& e : equilibria)
    if (e.stable && (!best || circular_distance(e.psi, psi) < circular_distance(best->psi, psi))) best = &e;
  require(best != nullptr, "averaged model has no stable equilibrium");
  return *best;
}

double AveragedPhaseModel::min_abs_slope() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& e : equilibria) m = std::min(m, std::abs(e.slope));
  return m;
}

AveragedPhaseModel averaged_equilibria(double delta, const LockingFunction& G) {
  require(G.has_singular_data(), "locking function has no singular data");
  AveragedPhaseModel out;
  out.delta = delta;
  out.G = G;
  const double range = std::max(G.G_plus() - G.G_minus(), 1e-300);
  if (G.flat() || !(G.G_minus() <= delta && delta <= G.G_plus())) {
    out.drifting = true;
    return out;
  }
  for (double s : G.singular_values())
    if (std::abs(delta - s) <= 1e-6 * std::max(1.0, range)) {
      out.ill_conditioned = true;
      out.warning = "Delta=" + fmt(delta) + " is within " + fmt(std::abs(delta - s)) + " of singular value " + fmt(s);
    }

  std::vector<double> nodes = G.grid();
  for (const auto& s : G.singular_points()) nodes.push_back(s.psi);
  std::sort(nodes.begin(), nodes.end());
  auto f = [&](double psi) { return G.value(psi) - delta; };
  const std::size_t N = nodes.size();
  std::vector<double> fv(N);
  for (std::size_t i = 0; i < N; ++i) fv[i] = f(nodes[i]);
  for (std::size_t i = 0; i < N; ++i) {
    const double a = nodes[i];
    const double b = i + 1 < N ? nodes[i + 1] : kTwoPi;
    const double fa = fv[i], fb = fv[(i + 1) % N];
    if ((fa > 0.0) == (fb > 0.0)) continue;
    const double psi = wrap(bisect_root(f, a, b, fa, 1e-14));
    const double slope = G.derivative(psi);
    out.equilibria.push_back({psi, slope < 0.0, slope});
  }
  std::sort(out.equilibria.begin(), out.equilibria.end(), [](auto& x, auto& y) { return x.psi < y.psi; });
  out.drifting = out.equilibria.empty();
  return out;
}

DenseOutput integrate_averaged_phase(const AveragedPhaseModel& model, double mu, double psi0, double horizon,
                                     Tolerances tol) {
  require(mu > 0.0, "averaged phase integration requires mu > 0");
  const double mu2 = mu * mu;
  const LockingFunction* G = &model.G;
  const double delta = model.delta;
  VectorField field;
  field.dim = 1;
  field.rhs = [G, mu2, delta](double, const ConstVecRef& y, VecRef dy) { dy[0] = mu2 * (G->value(y[0]) - delta); };
  field.jacobian = [G, mu2](double, const ConstVecRef& y, MatRef j) { j(0, 0) = mu2 * G->derivative(y[0]); };
  Vec y0(1);
  y0[0] = psi0;
  return integrate_adaptive(field, y0, {0.0, horizon}, tol);
}

TransitBound transit_time_bound(const LockingFunction& G, double delta_detuning, double delta, double mu,
                                double m0) {
  require(delta > 0.0 && mu > 0.0 && m0 >= 0.0, "transit bound needs delta > 0, mu > 0, m0 >= 0");
  const AveragedPhaseModel eq = averaged_equilibria(delta_detuning, G);
  if (eq.equilibria.size() < 2) fail(ErrorKind::BoundUnavailable, "no pair of averaged equilibria");

  auto f = [&](double psi) { return G.value(psi) - delta_detuning; };
  TransitBound best;
  best.m = std::numeric_limits<double>::infinity();
  const std::size_t n = eq.equilibria.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Equilibrium& u = eq.equilibria[i];
    if (u.stable) continue;
    double next = eq.equilibria[(i + 1) % n].psi;
    if (next <= u.psi) next += kTwoPi;
    const double from = u.psi + delta, to = next - delta;
    if (!(to > from)) fail(ErrorKind::BoundUnavailable, "delta exceeds half the gap between equilibria");
    double m = std::min(f(from), f(to));
    for (const auto& s : G.singular_points())
      for (double shift : {0.0, kTwoPi})
        if (s.psi + shift > from && s.psi + shift < to) m = std::min(m, s.value - delta_detuning);
    if (m < best.m) best = TransitBound{0.0, m, from, to};
  }
  if (!(best.m > m0))
    fail(ErrorKind::BoundUnavailable, "empty margin: m=" + fmt(best.m) + " <= m0=" + fmt(m0));
  best.T = kTwoPi / (mu * mu * (best.m - m0));
  return best;
}

}  // namespace modlock
