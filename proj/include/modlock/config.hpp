#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "modlock/locking.hpp"
#include "modlock/model.hpp"
#include "modlock/sim.hpp"

namespace modlock {

enum class BoundarySide { Upper, Lower, Both };

// Run configuration. Text form: one `section.key = value` per line, `#`
// starts a comment. Unknown keys are rejected.
struct Config {
  std::string family = "vdp_laser";
  std::map<std::string, double> model_params;
  std::vector<Complex> forcing = default_forcing().coeffs();
  ControlParams control;
  std::optional<double> delta;  // control.delta overrides control.beta

  AnalysisOptions analysis;
  SimOptions sim;
  ClassifyOptions classify;
  RegionSpec region;
  bool region_margin_set = false;
  ValidateOptions validate;
  bool validate_boundary = false;  // cmd validate also measures the boundaries
  BoundaryOptions boundary;
  BoundarySide boundary_side = BoundarySide::Both;
  SweepSpec sweep;
  Section section;

  double horizon = 0.0;  // 0: transient cut / (1 - tail_fraction)
  double psi1_0 = 0.0;
  double normal_offset = 0.0;
  double theta0 = 0.0;

  ModelDef model() const;
  // Control parameters with control.delta resolved against beta0.
  ControlParams resolved_control(double beta0) const;
  RegionSpec region_for(const LockingFunction& G) const;

  // Every effective key with its value, sorted by key.
  std::map<std::string, std::string> entries() const;
};

void set_config_value(Config& cfg, const std::string& key, const std::string& value);
Config parse_config(std::string_view text, const std::string& origin = "<config>");
Config load_config(const std::string& path);

// `key=value` override as given on the command line.
void apply_override(Config& cfg, const std::string& assignment);

std::vector<std::string> config_keys();

}  // namespace modlock
