#include "modlock/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

namespace modlock::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

Level log_level() {
  const char* env = std::getenv("MODLOCK_LOG");
  if (!env) return Level::Warn;
  const std::string v = env;
  if (v == "error" || v == "quiet") return Level::Error;
  if (v == "info") return Level::Info;
  if (v == "debug") return Level::Debug;
  return Level::Warn;
}

void log(Level level, const std::string& msg) {
  static const Level threshold = log_level();
  if (level > threshold) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::cerr << "[modlock " << names[static_cast<int>(level)] << "] " << msg << '\n';
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const RunContext& ctx, const std::string& name, const std::string& hash,
            const std::vector<std::string>& columns)
      : path_((fs::path(ctx.out_dir) / name).string()), out_(path_) {
    if (!out_) fail(ErrorKind::Io, "cannot write '" + path_ + "'");
    out_ << "# modlock " << kVersion << '\n';
    out_ << "# command=" << ctx.command << '\n';
    out_ << "# manifest_hash=" << hash << '\n';
    for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
    out_ << '\n';
  }

  template <class... Cells>
  void row(const Cells&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
    out_ << '\n';
  }

  void row(const std::vector<double>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << num(cells[i]);
    out_ << '\n';
  }

  void close() {
    out_.close();
    if (!out_) fail(ErrorKind::Io, "failed writing '" + path_ + "'");
  }

 private:
  static std::string cell(double v) { return num(v); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }

  std::string path_;
  std::ofstream out_;
};

void write_json(const RunContext& ctx, const std::string& name, const json& j) {
  const std::string path = (fs::path(ctx.out_dir) / name).string();
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorKind::Io, "failed writing '" + path + "'");
}

json singular_json(const LockingFunction& G) {
  json pts = json::array();
  for (const auto& s : G.singular_points()) pts.push_back({{"psi", s.psi}, {"value", s.value}, {"second", s.second}});
  return pts;
}

json classification_json(const Classification& c) {
  return {{"classification", to_string(c.kind)},
          {"theta_lock", c.locked() ? json(c.theta) : json(nullptr)},
          {"drift_rate", c.rate},
          {"j_parity", c.j_parity},
          {"tail_range", c.tail_range},
          {"total_change", c.total_change},
          {"tail_samples", c.tail_samples},
          {"reason", c.reason}};
}

Analysis run_analysis(const Config& cfg) {
  log(Level::Info, "analysing unforced cycle of family " + cfg.family);
  Analysis a = analyze(cfg.model(), cfg.analysis);
  log(Level::Info, "T=" + num(a.orbit.period()) + " G-=" + num(a.G.G_minus()) + " G+=" + num(a.G.G_plus()));
  if (!a.G.warning().empty()) log(Level::Warn, a.G.warning());
  return a;
}

std::vector<std::string> state_columns(int n, const std::string& prefix) {
  std::vector<std::string> cols;
  for (int i = 0; i < n; ++i) cols.push_back(n == 1 ? prefix + "x" : prefix + "x" + std::to_string(i));
  cols.push_back(prefix + "r");
  return cols;
}

}  // namespace

std::string manifest_hash(const Config& cfg, const RunContext& ctx) {
  std::ostringstream canon;
  canon << "modlock " << kVersion << '\n' << ctx.command << "\nseed=" << ctx.seed << '\n';
  for (const auto& [k, v] : cfg.entries()) canon << k << '=' << v << '\n';
  // FNV-1a, 64 bit.
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : canon.str()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------

CommandOutput cmd_orbit(const Config& cfg, const RunContext& ctx) {
  const std::string hash = manifest_hash(cfg, ctx);
  const Analysis a = run_analysis(cfg);
  const int n = a.model.n();
  CommandOutput out;

  json mult = json::array();
  for (const auto& m : a.floquet.multipliers) mult.push_back({m.real(), m.imag()});
  out.summary = {{"manifest_hash", hash},
                 {"T", a.orbit.period()},
                 {"beta0", a.orbit.beta0()},
                 {"alpha0", a.offsets.alpha0()},
                 {"multipliers", mult},
                 {"trivial_multiplier_error", a.floquet.trivial_multiplier_error},
                 {"hyperbolic", a.floquet.hyperbolic},
                 {"spectral_gap", a.floquet.spectral_gap},
                 {"normalization_residual", a.adjoint.normalization_residual()},
                 {"periodicity_error", a.adjoint.periodicity_error()},
                 {"closure_residual", a.orbit.closure_residual()},
                 {"newton_iterations", a.orbit.iterations()},
                 {"min_r", a.orbit.min_last()},
                 {"mean_re_h", mean_re_h(a.model, a.orbit)}};

  std::vector<std::string> cols{"psi"};
  for (const auto& c : state_columns(n, "")) cols.push_back(c);
  for (const auto& c : state_columns(n, "p_")) cols.push_back(c);
  CsvWriter csv(ctx, "orbit.csv", hash, cols);
  constexpr int rows = 512;
  for (int i = 0; i < rows; ++i) {
    const double psi = kTwoPi * i / rows;
    const Vec z = a.orbit.z(psi), p = a.adjoint.p(psi);
    std::vector<double> r{psi};
    r.insert(r.end(), z.data(), z.data() + z.size());
    r.insert(r.end(), p.data(), p.data() + p.size());
    csv.row(r);
  }
  csv.close();
  out.files.push_back("orbit.csv");
  return out;
}

CommandOutput cmd_gfun(const Config& cfg, const RunContext& ctx) {
  const std::string hash = manifest_hash(cfg, ctx);
  const Analysis a = run_analysis(cfg);
  const LockingFunction& G = a.G;
  CommandOutput out;
  out.summary = {{"manifest_hash", hash},
                 {"G_minus", G.G_minus()},
                 {"G_plus", G.G_plus()},
                 {"mean", G.mean()},
                 {"n_grid", G.n_grid()},
                 {"singular_points", singular_json(G)},
                 {"singular_values", G.singular_values()},
                 {"flat", G.flat()},
                 {"warning", G.warning()}};
  CsvWriter csv(ctx, "gfun.csv", hash, {"psi", "G", "dG"});
  for (int i = 0; i < G.n_grid(); ++i) csv.row(G.grid()[i], G.samples()[i], G.derivative_samples()[i]);
  csv.close();
  out.files.push_back("gfun.csv");
  return out;
}

CommandOutput cmd_region(const Config& cfg, const RunContext& ctx) {
  const std::string hash = manifest_hash(cfg, ctx);
  const Analysis a = run_analysis(cfg);
  const double beta0 = a.orbit.beta0();
  const RegionSpec spec = cfg.region_for(a.G);
  Section sec = cfg.section;
  if (sec.fixed == 0.0) sec.fixed = sec.kind == Section::AlphaConst ? cfg.control.alpha : cfg.control.beta;
  if (sec.lo == 0.0 && sec.hi == 0.0) {
    if (sec.kind == Section::AlphaConst) {
      const double m2 = spec.mu_star_high * spec.mu_star_high;
      const double range = a.G.G_plus() - a.G.G_minus();
      sec.lo = beta0 + m2 * (a.G.G_minus() - 0.25 * range);
      sec.hi = beta0 + m2 * (a.G.G_plus() + 0.25 * range);
    } else {
      sec.lo = 1e-3;
      sec.hi = 2e-2;
    }
  }
  const BoundaryCurves bc = boundary_curves(a.G, spec, sec, beta0);
  CommandOutput out;
  json branches = json::array();
  for (const auto& b : bc.branches)
    branches.push_back({{"label", b.label}, {"is_line", b.is_line}, {"g_tilde", b.g_tilde}, {"points", b.points.size()}});
  out.summary = {{"manifest_hash", hash},
                 {"section", sec.kind == Section::AlphaConst ? "alpha_const" : "beta_const"},
                 {"fixed", sec.fixed},
                 {"lo", sec.lo},
                 {"hi", sec.hi},
                 {"beta0", beta0},
                 {"margin", spec.margin},
                 {"curve_count", bc.curve_count()},
                 {"line_count", bc.line_count()},
                 {"branches", branches},
                 {"diagnostic", bc.diagnostic}};
  if (cfg.control.gamma > 0.0) {
    const ControlParams p = cfg.resolved_control(beta0);
    const RegionVerdict v = in_locking_region(p, beta0, a.G, spec);
    out.summary["inside"] = v.inside;
    out.summary["violations"] = v.violations;
    out.summary["Delta"] = v.delta;
    out.summary["distance_to_S"] = v.distance_to_S;
  }
  const bool alpha_const = sec.kind == Section::AlphaConst;
  CsvWriter csv(ctx, "region.csv", hash,
                {alpha_const ? "beta" : "inv_alpha", "gamma", "branch"});
  for (const auto& b : bc.branches)
    for (const auto& p : b.points) csv.row(p[0], p[1], b.label);
  csv.close();
  out.files.push_back("region.csv");
  return out;
}

CommandOutput cmd_simulate(const Config& cfg, const RunContext& ctx) {
  const std::string hash = manifest_hash(cfg, ctx);
  const Analysis a = run_analysis(cfg);
  const double beta0 = a.orbit.beta0();
  const ControlParams p = cfg.resolved_control(beta0);
  ProbeSpec probe;
  probe.psi1_0 = cfg.psi1_0;
  probe.normal_offset = cfg.normal_offset;
  probe.theta0 = cfg.theta0;
  probe.horizon = cfg.horizon > 0.0 ? cfg.horizon
                                    : transient_cut(a.G, p, beta0) / (1.0 - cfg.classify.tail_fraction);
  log(Level::Info, "simulating horizon " + num(probe.horizon));
  const SimResult r = run_probe(a, p, probe, cfg.sim, cfg.classify);
  CommandOutput out;
  out.summary = classification_json(r.classification);
  out.summary["manifest_hash"] = hash;
  out.summary["alpha"] = p.alpha;
  out.summary["beta"] = p.beta;
  out.summary["gamma"] = p.gamma;
  out.summary["mu"] = p.mu();
  out.summary["nu"] = p.nu();
  out.summary["Delta"] = p.mu() > 0.0 ? json(p.delta(beta0)) : json(nullptr);
  out.summary["horizon"] = r.horizon;
  out.summary["sigma_hat"] = r.classification.locked() ? json(r.sigma_hat) : json(nullptr);
  out.summary["residual_sup"] = r.classification.locked() ? json(r.residual_sup) : json(nullptr);
  out.summary["max_distance"] = r.max_distance;
  out.summary["steps"] = r.steps;
  if (p.mu() > 0.0) {
    const RegionVerdict v = in_locking_region(p, beta0, a.G, cfg.region_for(a.G));
    out.summary["predicted_inside"] = v.inside;
    out.summary["violations"] = v.violations;
  }
  CsvWriter csv(ctx, "simulate.csv", hash, {"t", "psi1_hat", "residual"});
  for (std::size_t i = 0; i < r.t.size(); ++i)
    csv.row(r.t[i], r.psi1_hat[i], r.residual.empty() ? std::nan("") : r.residual[i]);
  csv.close();
  out.files.push_back("simulate.csv");
  return out;
}

CommandOutput cmd_validate(const Config& cfg, const RunContext& ctx) {
  const std::string hash = manifest_hash(cfg, ctx);
  const Analysis a = run_analysis(cfg);
  const double beta0 = a.orbit.beta0();
  const ControlParams p = cfg.resolved_control(beta0);
  ValidateOptions vo = cfg.validate;
  vo.jobs = ctx.jobs;
  const DriftReport rep = validate_averaged_drift(a, p, cfg.sim, vo);
  CommandOutput out;
  out.summary = {{"manifest_hash", hash},
                 {"mu", rep.mu},
                 {"nu", rep.nu},
                 {"Delta", rep.delta},
                 {"mean_rel_dev", rep.full.mean_rel_dev},
                 {"max_rel_dev", rep.full.max_rel_dev},
                 {"windows", rep.full.windows},
                 {"drift_coefficient", rep.full.coefficient},
                 {"pred_scale", rep.full.pred_scale},
                 {"half_mean_rel_dev", rep.half.mean_rel_dev},
                 {"half_windows", rep.half.windows},
                 {"half_drift_coefficient", rep.half.coefficient},
                 {"drift_ratio", rep.drift_ratio}};
  if (cfg.validate_boundary) {
    auto measure = [&](Side side, const std::string& tag, double edge) {
      const BoundaryResult b = find_locking_boundary(a, p.alpha, p.gamma, side, cfg.sim, cfg.boundary);
      out.summary["delta_c_" + tag] = b.delta_c;
      out.summary["beta_c_" + tag] = b.beta_c;
      out.summary["G_" + tag] = edge;
      out.summary["rel_dev_" + tag] = std::abs(b.delta_c - edge) / std::abs(edge);
      out.summary["evaluations_" + tag] = b.evaluations;
    };
    if (cfg.boundary_side != BoundarySide::Lower) measure(Side::Upper, "plus", a.G.G_plus());
    if (cfg.boundary_side != BoundarySide::Upper) measure(Side::Lower, "minus", a.G.G_minus());
  }
  return out;
}

CommandOutput cmd_sweep(const Config& cfg, const RunContext& ctx) {
  const std::string hash = manifest_hash(cfg, ctx);
  const Analysis a = run_analysis(cfg);
  const double beta0 = a.orbit.beta0();
  SweepSpec spec = cfg.sweep;
  spec.jobs = ctx.jobs;
  if (spec.gamma_lo == 0.0 && spec.gamma_hi == 0.0) {
    spec.gamma_lo = 1.0;
    spec.gamma_hi = 4.0;
  }
  if (spec.beta_lo == 0.0 && spec.beta_hi == 0.0) {
    const double mu = 0.5 * (spec.gamma_lo + spec.gamma_hi) / spec.alpha;
    spec.beta_lo = beta0 + mu * mu * 1.5 * a.G.G_minus();
    spec.beta_hi = beta0 + mu * mu * 1.5 * a.G.G_plus();
  }
  const std::vector<SweepCell> cells = sweep_grid(a, spec, cfg.region_for(a.G), cfg.sim, cfg.classify);

  int locked = 0, drifting = 0, indeterminate = 0, errors = 0, agree = 0;
  CsvWriter csv(ctx, "sweep.csv", hash,
                {"alpha", "beta", "gamma", "mu", "Delta", "classification", "theta_lock", "drift_rate"});
  for (const auto& c : cells) {
    const auto& k = c.classification;
    locked += k.kind == Classification::Locked;
    drifting += k.kind == Classification::Drifting;
    indeterminate += k.kind == Classification::Indeterminate;
    errors += !c.error.empty();
    agree += k.locked() == c.predicted_inside;
    if (!c.error.empty()) log(Level::Warn, "cell " + std::to_string(c.index) + ": " + c.error);
    csv.row(c.alpha, c.beta, c.gamma, c.mu, c.delta, to_string(k.kind), k.locked() ? k.theta : std::nan(""), k.rate);
  }
  csv.close();
  CommandOutput out;
  out.summary = {{"manifest_hash", hash},
                 {"cells", cells.size()},
                 {"locked", locked},
                 {"drifting", drifting},
                 {"indeterminate", indeterminate},
                 {"errors", errors},
                 {"agree_with_prediction", agree},
                 {"beta_lo", spec.beta_lo},
                 {"beta_hi", spec.beta_hi},
                 {"gamma_lo", spec.gamma_lo},
                 {"gamma_hi", spec.gamma_hi}};
  out.files.push_back("sweep.csv");
  return out;
}

// ---------------------------------------------------------------------------

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"modlock: modulation-frequency locking of forced S1-equivariant systems"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  RunContext ctx;
  std::vector<std::string> overrides;
  const unsigned hw = std::thread::hardware_concurrency();
  ctx.jobs = hw == 0 ? 1 : static_cast<int>(hw);
  app.add_option("--config", ctx.config_path, "key = value configuration file");
  app.add_option("--out", ctx.out_dir, "output directory")->capture_default_str();
  app.add_option("--seed", ctx.seed, "recorded in the manifest; all algorithms are deterministic");
  app.add_option("--jobs", ctx.jobs, "parallel workers for probes and sweeps")->check(CLI::PositiveNumber);
  app.add_option("--set", overrides, "override a config entry, key=value (repeatable)");
  app.fallthrough();

  using Fn = CommandOutput (*)(const Config&, const RunContext&);
  const std::vector<std::pair<std::string, std::pair<std::string, Fn>>> commands = {
      {"orbit", {"periodic orbit, Floquet multipliers and adjoint", &cmd_orbit}},
      {"gfun", {"locking function G and its singular points", &cmd_gfun}},
      {"region", {"locking-region boundary curves on a section", &cmd_region}},
      {"simulate", {"simulate the forced system and classify locking", &cmd_simulate}},
      {"validate", {"compare measured phase drift with the averaged equation", &cmd_validate}},
      {"sweep", {"classify locking on a (beta, gamma) grid", &cmd_sweep}},
  };
  std::vector<CLI::App*> subs;
  for (const auto& [name, info] : commands) subs.push_back(app.add_subcommand(name, info.first));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : exit_code(ErrorKind::Config);
  }

  try {
    const auto start = std::chrono::steady_clock::now();
    Fn fn = nullptr;
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (subs[i]->parsed()) {
        ctx.command = commands[i].first;
        fn = commands[i].second.second;
      }
    Config cfg = ctx.config_path.empty() ? Config{} : load_config(ctx.config_path);
    for (const auto& o : overrides) apply_override(cfg, o);
    std::error_code ec;
    fs::create_directories(ctx.out_dir, ec);
    if (ec) fail(ErrorKind::Io, "cannot create output directory '" + ctx.out_dir + "': " + ec.message());

    CommandOutput result = fn(cfg, ctx);
    write_json(ctx, ctx.command + ".json", result.summary);
    result.files.insert(result.files.begin(), ctx.command + ".json");

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json manifest = {{"tool", "modlock"},
                     {"tool_version", kVersion},
                     {"command", ctx.command},
                     {"config_path", ctx.config_path},
                     {"manifest_hash", manifest_hash(cfg, ctx)},
                     {"seed", ctx.seed},
                     {"jobs", ctx.jobs},
                     {"parameters", cfg.entries()},
                     {"outputs", result.files},
                     {"wall_time", wall},
                     {"timestamp", static_cast<long long>(std::time(nullptr))}};
    write_json(ctx, "manifest.json", manifest);
    out << result.summary.dump(2) << '\n';
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: unexpected: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace modlock::cli
