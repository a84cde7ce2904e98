#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "modlock/config.hpp"

namespace modlock::cli {

inline constexpr const char* kVersion = "0.1.0";

struct RunContext {
  std::string command;
  std::string config_path;  // empty: built-in defaults
  std::string out_dir = ".";
  long seed = 0;
  int jobs = 1;
};

// Hash of the tool version, command, seed and every effective config entry.
std::string manifest_hash(const Config& cfg, const RunContext& ctx);

struct CommandOutput {
  nlohmann::json summary;           // also written to <out>/<command>.json
  std::vector<std::string> files;   // written files, relative to out_dir
};

CommandOutput cmd_orbit(const Config& cfg, const RunContext& ctx);
CommandOutput cmd_gfun(const Config& cfg, const RunContext& ctx);
CommandOutput cmd_region(const Config& cfg, const RunContext& ctx);
CommandOutput cmd_simulate(const Config& cfg, const RunContext& ctx);
CommandOutput cmd_validate(const Config& cfg, const RunContext& ctx);
CommandOutput cmd_sweep(const Config& cfg, const RunContext& ctx);

// Full command-line entry point; returns the process exit code.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace modlock::cli
