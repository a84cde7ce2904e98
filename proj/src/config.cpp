#include "modlock/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace modlock {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  const char* end = value.data() + value.size();
  const auto res = std::from_chars(value.data(), end, v);
  if (res.ec != std::errc{} || res.ptr != end || value.empty())
    fail(ErrorKind::Config, key + ": expected a number, got '" + value + "'");
  if (!std::isfinite(v)) fail(ErrorKind::Config, key + ": value must be finite");
  return v;
}

long parse_long(const std::string& key, const std::string& value) {
  long v = 0;
  const char* end = value.data() + value.size();
  const auto res = std::from_chars(value.data(), end, v);
  if (res.ec != std::errc{} || res.ptr != end || value.empty())
    fail(ErrorKind::Config, key + ": expected an integer, got '" + value + "'");
  return v;
}

double positive(const std::string& key, double v) {
  if (!(v > 0.0)) fail(ErrorKind::Config, key + ": must be > 0");
  return v;
}

double non_negative(const std::string& key, double v) {
  if (v < 0.0) fail(ErrorKind::Config, key + ": must be >= 0");
  return v;
}

struct KeySpec {
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string& key, const std::string& value)> set;
};

// sign: 1 positive, 0 non-negative, -1 any finite value.
template <class Get>
KeySpec real(Get get, int sign = 0) {
  return KeySpec{[get](const Config& c) { return num(get(const_cast<Config&>(c))); },
                 [get, sign](Config& c, const std::string& k, const std::string& v) {
                   double x = parse_double(k, v);
                   if (sign > 0) x = positive(k, x);
                   if (sign == 0) x = non_negative(k, x);
                   get(c) = x;
                 }};
}

template <class Get>
KeySpec integer(Get get, long min) {
  return KeySpec{[get](const Config& c) { return std::to_string(get(const_cast<Config&>(c))); },
                 [get, min](Config& c, const std::string& k, const std::string& v) {
                   const long x = parse_long(k, v);
                   if (x < min) fail(ErrorKind::Config, k + ": must be >= " + std::to_string(min));
                   get(c) = static_cast<std::remove_reference_t<decltype(get(c))>>(x);
                 }};
}

const std::map<std::string, KeySpec>& registry() {
  static const std::map<std::string, KeySpec> keys = {
      {"model.family", {[](const Config& c) { return c.family; },
                        [](Config& c, const std::string& k, const std::string& v) {
                          if (!model_families().contains(v)) fail(ErrorKind::Config, k + ": unknown family '" + v + "'");
                          if (v != c.family) c.model_params.clear();
                          c.family = v;
                        }}},
      {"control.alpha", real([](Config& c) -> double& { return c.control.alpha; }, 1)},
      {"control.beta", real([](Config& c) -> double& { return c.control.beta; }, 1)},
      {"control.gamma", real([](Config& c) -> double& { return c.control.gamma; }, 0)},
      {"control.delta",
       {[](const Config& c) { return c.delta ? num(*c.delta) : std::string("none"); },
        [](Config& c, const std::string& k, const std::string& v) {
          if (v == "none")
            c.delta.reset();
          else
            c.delta = parse_double(k, v);
        }}},
      {"numeric.rtol", real([](Config& c) -> double& { return c.sim.tol.rtol; }, 1)},
      {"numeric.atol", real([](Config& c) -> double& { return c.sim.tol.atol; }, 1)},
      {"numeric.analysis_rtol", real([](Config& c) -> double& { return c.analysis.tol.rtol; }, 1)},
      {"numeric.analysis_atol", real([](Config& c) -> double& { return c.analysis.tol.atol; }, 1)},
      {"shooting.tol", real([](Config& c) -> double& { return c.analysis.shooting.tol; }, 1)},
      {"shooting.max_iter", integer([](Config& c) -> int& { return c.analysis.shooting.max_iter; }, 1)},
      {"locking.n_grid", integer([](Config& c) -> int& { return c.analysis.n_grid; }, 16)},
      {"locking.n_quad", integer([](Config& c) -> int& { return c.analysis.n_quad; }, 16)},
      {"locking.nondeg_tol", real([](Config& c) -> double& { return c.analysis.nondeg_tol; }, 0)},
      {"region.mu_star_low", real([](Config& c) -> double& { return c.region.mu_star_low; }, 1)},
      {"region.mu_star_high", real([](Config& c) -> double& { return c.region.mu_star_high; }, 1)},
      {"region.margin",
       {[](const Config& c) { return c.region_margin_set ? num(c.region.margin) : std::string("auto"); },
        [](Config& c, const std::string& k, const std::string& v) {
          if (v == "auto") {
            c.region_margin_set = false;
            c.region.margin = 0.0;
            return;
          }
          c.region.margin = non_negative(k, parse_double(k, v));
          c.region_margin_set = true;
        }}},
      {"sim.frame", {[](const Config& c) { return std::string(c.sim.deforced_frame ? "deforced" : "original"); },
                     [](Config& c, const std::string& k, const std::string& v) {
                       if (v == "deforced")
                         c.sim.deforced_frame = true;
                       else if (v == "original")
                         c.sim.deforced_frame = false;
                       else
                         fail(ErrorKind::Config, k + ": expected 'deforced' or 'original', got '" + v + "'");
                     }}},
      {"sim.horizon", real([](Config& c) -> double& { return c.horizon; }, 0)},
      {"sim.psi1_0", real([](Config& c) -> double& { return c.psi1_0; }, -1)},
      {"sim.normal_offset", real([](Config& c) -> double& { return c.normal_offset; }, -1)},
      {"sim.theta0", real([](Config& c) -> double& { return c.theta0; }, -1)},
      {"sim.stride", real([](Config& c) -> double& { return c.sim.stride; }, 0)},
      {"sim.max_samples", integer([](Config& c) -> std::size_t& { return c.sim.max_samples; }, 2)},
      {"sim.delta_proj", real([](Config& c) -> double& { return c.sim.delta_proj; }, 1)},
      {"classify.tail_fraction", real([](Config& c) -> double& { return c.classify.tail_fraction; }, 1)},
      {"classify.lock_band", real([](Config& c) -> double& { return c.classify.lock_band; }, 1)},
      {"classify.drift_threshold", real([](Config& c) -> double& { return c.classify.drift_threshold; }, 0)},
      {"classify.min_samples", integer([](Config& c) -> std::size_t& { return c.classify.min_samples; }, 0)},
      {"validate.n_probe", integer([](Config& c) -> int& { return c.validate.n_probe; }, 1)},
      {"validate.boundary", {[](const Config& c) { return std::string(c.validate_boundary ? "true" : "false"); },
                             [](Config& c, const std::string& k, const std::string& v) {
                               if (v == "true" || v == "1")
                                 c.validate_boundary = true;
                               else if (v == "false" || v == "0")
                                 c.validate_boundary = false;
                               else
                                 fail(ErrorKind::Config, k + ": expected true or false, got '" + v + "'");
                             }}},
      {"validate.window_floor", real([](Config& c) -> double& { return c.validate.window_floor; }, 0)},
      {"boundary.tol", real([](Config& c) -> double& { return c.boundary.tol; }, 0)},
      {"boundary.drift_threshold", real([](Config& c) -> double& { return c.boundary.drift_threshold; }, 0)},
      {"boundary.side",
       {[](const Config& c) {
          return std::string(c.boundary_side == BoundarySide::Upper   ? "upper"
                             : c.boundary_side == BoundarySide::Lower ? "lower"
                                                                      : "both");
        },
        [](Config& c, const std::string& k, const std::string& v) {
          if (v == "upper")
            c.boundary_side = BoundarySide::Upper;
          else if (v == "lower")
            c.boundary_side = BoundarySide::Lower;
          else if (v == "both")
            c.boundary_side = BoundarySide::Both;
          else
            fail(ErrorKind::Config, k + ": expected upper, lower or both, got '" + v + "'");
        }}},
      {"sweep.alpha", real([](Config& c) -> double& { return c.sweep.alpha; }, 1)},
      {"sweep.beta_lo", real([](Config& c) -> double& { return c.sweep.beta_lo; }, 0)},
      {"sweep.beta_hi", real([](Config& c) -> double& { return c.sweep.beta_hi; }, 0)},
      {"sweep.gamma_lo", real([](Config& c) -> double& { return c.sweep.gamma_lo; }, 0)},
      {"sweep.gamma_hi", real([](Config& c) -> double& { return c.sweep.gamma_hi; }, 0)},
      {"sweep.n_beta", integer([](Config& c) -> int& { return c.sweep.n_beta; }, 1)},
      {"sweep.n_gamma", integer([](Config& c) -> int& { return c.sweep.n_gamma; }, 1)},
      {"sweep.psi1_0", real([](Config& c) -> double& { return c.sweep.psi1_0; }, -1)},
      {"sweep.max_horizon", real([](Config& c) -> double& { return c.sweep.max_horizon; }, 1)},
      {"sweep.cut_factor", real([](Config& c) -> double& { return c.sweep.cut_factor; }, 1)},
      {"section.kind", {[](const Config& c) { return std::string(c.section.kind == Section::AlphaConst ? "alpha" : "beta"); },
                        [](Config& c, const std::string& k, const std::string& v) {
                          if (v == "alpha")
                            c.section.kind = Section::AlphaConst;
                          else if (v == "beta")
                            c.section.kind = Section::BetaConst;
                          else
                            fail(ErrorKind::Config, k + ": expected 'alpha' or 'beta', got '" + v + "'");
                        }}},
      {"section.fixed", real([](Config& c) -> double& { return c.section.fixed; }, 0)},
      {"section.lo", real([](Config& c) -> double& { return c.section.lo; }, 0)},
      {"section.hi", real([](Config& c) -> double& { return c.section.hi; }, 0)},
      {"section.points", integer([](Config& c) -> int& { return c.section.points; }, 2)},
  };
  return keys;
}

// forcing.a<k>_re / forcing.a<k>_im
bool parse_forcing_key(const std::string& key, std::size_t& index, bool& imag) {
  const std::string prefix = "forcing.a";
  if (key.rfind(prefix, 0) != 0) return false;
  const auto us = key.find('_', prefix.size());
  if (us == std::string::npos) return false;
  const std::string digits = key.substr(prefix.size(), us - prefix.size());
  const std::string part = key.substr(us + 1);
  if (digits.empty() || (part != "re" && part != "im")) return false;
  unsigned long k = 0;
  const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), k);
  if (res.ec != std::errc{} || res.ptr != digits.data() + digits.size() || k > 64) return false;
  index = k;
  imag = part == "im";
  return true;
}

}  // namespace

ModelDef Config::model() const {
  ModelDef m;
  m.system = make_family(family, model_params);
  m.forcing = ForcingProfile(forcing);
  return m;
}

ControlParams Config::resolved_control(double beta0) const {
  ControlParams p = control;
  if (delta) {
    if (!(control.gamma > 0.0)) fail(ErrorKind::Config, "control.delta needs control.gamma > 0");
    p = ControlParams::from_delta(control.alpha, control.gamma, *delta, beta0);
  }
  p.validate();
  return p;
}

RegionSpec Config::region_for(const LockingFunction& G) const {
  RegionSpec r = RegionSpec::defaults_for(G);
  r.mu_star_low = region.mu_star_low;
  r.mu_star_high = region.mu_star_high;
  if (region_margin_set) r.margin = region.margin;
  r.validate();
  return r;
}

std::map<std::string, std::string> Config::entries() const {
  std::map<std::string, std::string> out;
  for (const auto& [key, spec] : registry()) out[key] = spec.get(*this);
  const auto& families = model_families();
  std::map<std::string, double> params = model_params;
  if (auto it = families.find(family); it != families.end())
    for (const auto& [k, v] : it->second.defaults) params.emplace(k, v);
  for (const auto& [k, v] : params) out["model." + k] = num(v);
  for (std::size_t k = 0; k < forcing.size(); ++k) {
    out["forcing.a" + std::to_string(k) + "_re"] = num(forcing[k].real());
    out["forcing.a" + std::to_string(k) + "_im"] = num(forcing[k].imag());
  }
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [key, spec] : registry()) out.push_back(key);
  out.push_back("model.<parameter>");
  out.push_back("forcing.a<k>_re");
  out.push_back("forcing.a<k>_im");
  return out;
}

void set_config_value(Config& cfg, const std::string& key, const std::string& value) {
  const auto& reg = registry();
  if (auto it = reg.find(key); it != reg.end()) {
    it->second.set(cfg, key, value);
    return;
  }
  std::size_t index = 0;
  bool imag = false;
  if (parse_forcing_key(key, index, imag)) {
    const double v = parse_double(key, value);
    if (cfg.forcing.size() <= index) cfg.forcing.resize(index + 1, 0.0);
    Complex& a = cfg.forcing[index];
    a = imag ? Complex(a.real(), v) : Complex(v, a.imag());
    return;
  }
  if (key.rfind("model.", 0) == 0 && key.size() > 6 && key.find('.', 6) == std::string::npos) {
    const std::string name = key.substr(6);
    const auto& families = model_families();
    auto fam = families.find(cfg.family);
    if (fam != families.end() && !fam->second.defaults.count(name))
      fail(ErrorKind::Config, "unknown key '" + key + "' for model family '" + cfg.family + "'");
    cfg.model_params[name] = parse_double(key, value);
    return;
  }
  fail(ErrorKind::Config, "unknown key '" + key + "'");
}

Config parse_config(std::string_view text, const std::string& origin) {
  Config cfg;
  // The family must be known before its parameters are checked.
  std::vector<std::pair<std::string, std::string>> assignments;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Config, origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) fail(ErrorKind::Config, origin + ":" + std::to_string(lineno) + ": empty key");
    assignments.emplace_back(key, value);
  }
  for (const auto& [key, value] : assignments)
    if (key == "model.family") set_config_value(cfg, key, value);
  for (const auto& [key, value] : assignments) set_config_value(cfg, key, value);
  return cfg;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

void apply_override(Config& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) fail(ErrorKind::Config, "override '" + assignment + "' is not key=value");
  set_config_value(cfg, trim(std::string_view(assignment).substr(0, eq)),
                   trim(std::string_view(assignment).substr(eq + 1)));
}

}  // namespace modlock
