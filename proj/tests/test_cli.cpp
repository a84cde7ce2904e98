#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "modlock/cli.hpp"

namespace fs = std::filesystem;
using namespace modlock;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("modlock_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

int run_cli(std::vector<std::string> args, std::string* out_text = nullptr) {
  args.insert(args.begin(), "modlock");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("orbit command writes summary, CSV and manifest") {
  const fs::path dir = scratch("orbit");
  REQUIRE(run_cli({"orbit", "--out", dir.string()}) == 0);
  const auto summary = nlohmann::json::parse(slurp(dir / "orbit.json"));
  CHECK(summary.at("T").get<double>() == doctest::Approx(4.549864610713561).epsilon(1e-9));
  CHECK(summary.at("hyperbolic").get<bool>());
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  const std::string hash = manifest.at("manifest_hash");
  for (const auto& f : manifest.at("outputs")) CHECK(fs::exists(dir / f.get<std::string>()));
  const std::string csv = slurp(dir / "orbit.csv");
  CHECK(csv.rfind("# modlock ", 0) == 0);
  CHECK(csv.find("# manifest_hash=" + hash) != std::string::npos);
  CHECK(csv.find("psi,x,r,p_x,p_r\n") != std::string::npos);
}

TEST_CASE("manifest hash follows the configuration and seed") {
  Config cfg;
  cli::RunContext ctx;
  ctx.command = "orbit";
  const std::string h0 = cli::manifest_hash(cfg, ctx);
  CHECK(cli::manifest_hash(cfg, ctx) == h0);
  ctx.seed = 7;
  CHECK(cli::manifest_hash(cfg, ctx) != h0);
  ctx.seed = 0;
  cfg.control.gamma = 3.0;
  CHECK(cli::manifest_hash(cfg, ctx) != h0);
}

TEST_CASE("exit codes") {
  const fs::path dir = scratch("codes");
  const std::string out = dir.string();
  CHECK(run_cli({"orbit", "--out", out, "--set", "model.bogus=1"}) == 2);
  CHECK(run_cli({"orbit", "--out", out, "--set", "control.alpha=fast"}) == 2);
  CHECK(run_cli({"frobnicate"}) == 2);
  CHECK(run_cli({"orbit", "--jobs", "0"}) == 2);
  CHECK(run_cli({"orbit", "--out", out, "--set", "model.eta=-1"}) == 3);
  CHECK(run_cli({"gfun", "--out", out, "--set", "locking.nondeg_tol=10"}) == 4);
  CHECK(run_cli({"validate", "--out", out, "--set", "control.gamma=50"}) == 4);
  CHECK(run_cli({"simulate", "--out", out, "--set", "control.gamma=2", "--set", "sim.normal_offset=-5"}) == 6);
  CHECK(run_cli({"orbit", "--config", "/nonexistent/modlock.cfg", "--out", out}) == 7);
}

TEST_CASE("sweep CSV is byte-identical across runs and thread counts") {
  const fs::path a = scratch("sweep_a"), b = scratch("sweep_b");
  const std::vector<std::string> sets = {"--set", "sweep.n_beta=2",         "--set", "sweep.n_gamma=2",
                                         "--set", "sweep.gamma_lo=5",      "--set", "sweep.gamma_hi=6",
                                         "--set", "sweep.max_horizon=2000"};
  std::vector<std::string> ra = {"sweep", "--out", a.string(), "--jobs", "1"};
  std::vector<std::string> rb = {"sweep", "--out", b.string(), "--jobs", "2"};
  ra.insert(ra.end(), sets.begin(), sets.end());
  rb.insert(rb.end(), sets.begin(), sets.end());
  REQUIRE(run_cli(ra) == 0);
  REQUIRE(run_cli(rb) == 0);
  CHECK(slurp(a / "sweep.csv") == slurp(b / "sweep.csv"));
  CHECK(slurp(a / "sweep.json") == slurp(b / "sweep.json"));
}

TEST_CASE("gfun and region commands emit their tables") {
  const fs::path dir = scratch("gfun");
  REQUIRE(run_cli({"gfun", "--out", dir.string()}) == 0);
  CHECK(slurp(dir / "gfun.csv").find("psi,G,dG\n") != std::string::npos);
  REQUIRE(run_cli({"region", "--out", dir.string()}) == 0);
  CHECK(slurp(dir / "region.csv").find("beta,gamma,branch\n") != std::string::npos);
}
