#include <algorithm>
#include <string>

#include "doctest.h"
#include "modlock/config.hpp"

using namespace modlock;

namespace {

ErrorKind kind_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Io;
}

std::string message_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("defaults describe the laser with the two-term forcing") {
  const Config cfg;
  CHECK(cfg.family == "vdp_laser");
  CHECK(cfg.forcing.size() == 2);
  const ModelDef m = cfg.model();
  CHECK(m.system->parameters().at("eta") == 0.2);
}

TEST_CASE("parser handles comments, blank lines and whitespace") {
  const Config cfg = parse_config("# header\n\n  control.alpha = 150   # inline\ncontrol.gamma=3\nmodel.eta = 0.3\n");
  CHECK(cfg.control.alpha == 150.0);
  CHECK(cfg.control.gamma == 3.0);
  CHECK(cfg.model().system->parameters().at("eta") == 0.3);
}

TEST_CASE("unknown keys and malformed values are config errors naming the key") {
  CHECK(kind_of("control.bogus = 1\n") == ErrorKind::Config);
  CHECK(message_of("control.bogus = 1\n").find("control.bogus") != std::string::npos);
  CHECK(kind_of("model.bogus = 1\n") == ErrorKind::Config);
  CHECK(kind_of("control.alpha = fast\n") == ErrorKind::Config);
  CHECK(message_of("control.alpha = fast\n").find("control.alpha") != std::string::npos);
  CHECK(kind_of("control.alpha = 1 2\n") == ErrorKind::Config);
  CHECK(kind_of("no equals sign\n") == ErrorKind::Config);
  CHECK(kind_of("sweep.n_beta = 0\n") == ErrorKind::Config);
  CHECK(kind_of("model.family = other\n") == ErrorKind::Config);
}

TEST_CASE("control.delta resolves against beta0") {
  const Config cfg = parse_config("control.alpha = 200\ncontrol.gamma = 2\ncontrol.delta = -0.5\n");
  const ControlParams p = cfg.resolved_control(1.4);
  CHECK(p.beta == doctest::Approx(1.4 - 0.5 * 1e-4));
}

TEST_CASE("effective entries round-trip through the parser") {
  Config cfg = parse_config("control.gamma = 2.5\nforcing.a2_im = 0.3\nsweep.n_beta = 5\nsection.kind = beta\n");
  std::string text;
  for (const auto& [k, v] : cfg.entries()) text += k + " = " + v + "\n";
  const Config back = parse_config(text);
  CHECK(back.entries() == cfg.entries());
}

TEST_CASE("command-line overrides use the same registry") {
  Config cfg;
  apply_override(cfg, "control.gamma=4");
  CHECK(cfg.control.gamma == 4.0);
  CHECK_THROWS_AS(apply_override(cfg, "control.gamma"), Error);
  CHECK_THROWS_AS(apply_override(cfg, "nope=1"), Error);
}

TEST_CASE("key listing covers every section") {
  const auto keys = config_keys();
  for (const char* k : {"control.alpha", "numeric.rtol", "sim.frame", "classify.lock_band", "boundary.side",
                        "sweep.max_horizon", "section.points", "validate.n_probe"})
    CHECK(std::find(keys.begin(), keys.end(), k) != keys.end());
}

TEST_CASE("missing config file is an I/O error") {
  try {
    load_config("/nonexistent/modlock.cfg");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
  }
}

TEST_CASE("every error kind has one documented exit code") {
  const std::vector<std::pair<ErrorKind, int>> table = {
      {ErrorKind::Config, 2},           {ErrorKind::InvalidModel, 2},       {ErrorKind::NoConvergence, 3},
      {ErrorKind::DegenerateOrbit, 3},  {ErrorKind::InvalidOrbit, 3},       {ErrorKind::BracketFailure, 3},
      {ErrorKind::AssumptionViolation, 4}, {ErrorKind::Nondegeneracy, 4},   {ErrorKind::RegimeViolation, 4},
      {ErrorKind::LeftNeighborhood, 4}, {ErrorKind::IntegrationFailure, 5}, {ErrorKind::InvalidField, 5},
      {ErrorKind::InvalidState, 5},     {ErrorKind::ContractViolation, 6},  {ErrorKind::DomainViolation, 6},
      {ErrorKind::BoundUnavailable, 6}, {ErrorKind::Io, 7}};
  for (const auto& [k, code] : table) CHECK(exit_code(k) == code);
}
