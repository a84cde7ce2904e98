#pragma once

#include <functional>
#include <string>
#include <vector>

#include "modlock/locking.hpp"
#include "modlock/model.hpp"
#include "modlock/orbit.hpp"

namespace modlock {

// ---------------------------------------------------------------------------
// Unforced analysis bundle.

struct AnalysisOptions {
  ShootingOptions shooting;
  Tolerances tol{1e-11, 1e-13};
  int n_grid = 512;
  int n_quad = 512;
  double nondeg_tol = 0.0;  // <= 0: 1e-4 max|G|
};

struct Analysis {
  ModelDef model;
  PeriodicOrbit orbit;
  FloquetData floquet;
  AdjointOrbit adjoint;
  PhaseOffsets offsets;
  LockingFunction G;
};

// Orbit, Floquet data (hyperbolicity is enforced), adjoint, offsets and G
// with singular data.
Analysis analyze(const ModelDef& model, const AnalysisOptions& opt = {});

// ---------------------------------------------------------------------------
// Phase extraction.

// Closest-point projection onto the cycle in (x, r) space using cubic
// Hermite tables of z0 and z0'.
class PhaseProjector {
 public:
  explicit PhaseProjector(const PeriodicOrbit& orbit, int table = 4096);

  struct Result {
    double psi = 0.0;  // in [0, 2 pi)
    double distance = 0.0;
  };

  Result project(const ConstVecRef& z, double seed) const;
  Result project_global(const ConstVecRef& z) const;

  Vec z0(double psi) const;
  Vec z0_prime(double psi) const;
  int dim() const { return dim_; }
  double beta0() const { return beta0_; }

 private:
  void hermite(double psi, Vec* value, Vec* d1, Vec* d2) const;

  int dim_;
  int table_;
  double h_;
  double beta0_;
  Mat values_;  // dim x table
  Mat slopes_;  // dz0/dpsi
};

// Online phase tracker: de-forces y, projects (x, |y1|) onto the cycle and
// unwraps psi_hat. Samples must be pushed in increasing time.
class PhaseTracker {
 public:
  PhaseTracker(const PhaseProjector& projector, const ModelDef& model, const ControlParams& params, bool deforced,
               double delta_proj);

  struct Sample {
    double t = 0.0;
    double psi_hat = 0.0;
    double psi1_hat = 0.0;
    double distance = 0.0;
    double r1 = 0.0;  // |y1|
  };

  // `s` is in the integration frame: (x, y) or (x, y1) when de-forced.
  Sample push(double t, const ConstVecRef& s);

 private:
  const PhaseProjector* projector_;
  ModelDef model_;
  ControlParams params_;
  bool deforced_;
  double delta_proj_;
  bool started_ = false;
  double last_t_ = 0.0;
  double last_raw_ = 0.0;
  double unwrapped_ = 0.0;
  Vec z_;
  Vec g_;
};

// ---------------------------------------------------------------------------
// Simulation.

struct SimOptions {
  Tolerances tol{1e-7, 1e-9};
  bool deforced_frame = true;
  double stride = 0.0;  // 0: 2 pi / (32 beta)
  std::size_t max_samples = std::size_t{1} << 20;
  double delta_proj = 0.25;
};

// Uniformly sampled trajectory in the integration frame.
struct Trajectory {
  int n = 0;
  bool deforced = true;
  ControlParams params;
  std::vector<double> t;
  std::vector<double> states;  // row per sample, n + 2 columns
  long steps = 0;
  bool stopped_early = false;

  std::size_t size() const { return t.size(); }
  Vec state(std::size_t i) const;
  FullState full_state(std::size_t i, const ForcingProfile& forcing) const;  // original (x, y)
};

using SampleHook = std::function<bool(double t, const ConstVecRef& s)>;  // false stops

double output_stride(const ControlParams& params, const SimOptions& opt, double horizon);

Trajectory simulate_full(const ModelDef& model, const ControlParams& params, const FullState& init, double horizon,
                         const SimOptions& opt = {}, const SampleHook& hook = {});

struct PhaseSeries {
  std::vector<double> t;
  std::vector<double> psi_hat;
  std::vector<double> psi1_hat;
  std::vector<double> distance;
  std::vector<double> wave_phase;  // arg y1 - phi(psi_hat), unwrapped
};

PhaseSeries extract_phase(const PeriodicOrbit& orbit, const PhaseOffsets& offsets, const ModelDef& model,
                          const ControlParams& params, const Trajectory& traj, double delta_proj = 0.25);

// ---------------------------------------------------------------------------
// Classification.

struct Classification {
  enum Kind { Locked, Drifting, Indeterminate };
  Kind kind = Indeterminate;
  double theta = 0.0;  // locked offset (circular mean of the tail)
  double rate = 0.0;   // least-squares slope of the tail
  int j_parity = -1;   // 0: nearest averaged equilibrium is stable (even j), 1: unstable
  double tail_range = 0.0;
  double total_change = 0.0;
  std::size_t tail_samples = 0;
  std::string reason;

  bool locked() const { return kind == Locked; }
};

std::string to_string(Classification::Kind kind);

struct ClassifyOptions {
  double tail_fraction = 0.5;
  double lock_band = 0.15;
  double drift_threshold = 0.0;  // <= 0: default_drift_threshold
  std::size_t min_samples = 1000;
};

// Default drift threshold mu^2 max(|Delta|, 0.05 (G+ - G-)) / 10.
double default_drift_threshold(double mu, double delta, const LockingFunction& G);

Classification classify_locking(const std::vector<double>& t, const std::vector<double>& psi1, double tail_fraction,
                                double lock_band, double drift_threshold, std::size_t min_samples = 1000);

// ---------------------------------------------------------------------------
// Probe runs on the analysed model.

struct ProbeSpec {
  double psi1_0 = 0.0;        // initial relative phase on the cycle
  double normal_offset = 0.0;  // displacement off the cycle in (x, r)
  double horizon = 0.0;
  double theta0 = 0.0;  // initial wave phase of y
};

// Stop rule evaluated on every tracked sample; returning true stops.
using StopRule = std::function<bool(const PhaseTracker::Sample&)>;

struct SimResult {
  std::vector<double> t;
  std::vector<double> psi_hat;
  std::vector<double> psi1_hat;
  std::vector<double> residual;  // per sample, against x0(beta t + sigma_hat); empty unless locked
  std::vector<double> x;         // n per sample
  std::vector<double> r1;
  Classification classification;
  double sigma_hat = 0.0;
  double residual_sup = 0.0;  // over the tail window
  double max_distance = 0.0;
  double horizon = 0.0;
  long steps = 0;
  bool stopped_early = false;
  double wall_time = 0.0;
};

FullState probe_initial_state(const Analysis& a, const ProbeSpec& probe);

SimResult run_probe(const Analysis& a, const ControlParams& params, const ProbeSpec& probe, const SimOptions& sim,
                    const ClassifyOptions& cls, const StopRule& stop = {});

// Transient cut max(K / (mu^2 min|G'| at equilibria), 50 modulation periods);
// for predicted drift, the averaged rotation time.
double transient_cut(const LockingFunction& G, const ControlParams& params, double beta0, double factor = 20.0);

// Locked-state residual at one sample: ||x - x0|| + sup over the fast phase of
// ||y| - r0| given y1.
double lock_residual(const PhaseProjector& proj, const ModelDef& model, const ControlParams& params, double t,
                     const double* x, double r1, double psi);

// ---------------------------------------------------------------------------
// Validation of the averaged drift.

struct DriftRun {
  double mu = 0.0;
  double mean_rel_dev = 0.0;
  double max_rel_dev = 0.0;
  std::size_t windows = 0;
  double pred_scale = 0.0;   // mu^2, or |beta - beta0| when gamma = 0
  double coefficient = 0.0;  // LSQ fit of measured rate against pred / pred_scale
  double time_simulated = 0.0;
};

struct DriftReport {
  double mu = 0.0;
  double nu = 0.0;
  double delta = 0.0;
  DriftRun full;
  DriftRun half;           // gamma / 2, beta - beta0 divided by 4
  double drift_ratio = 0.0;  // half.coefficient / full.coefficient
};

struct ValidateOptions {
  int n_probe = 8;
  double window_floor = 0.25;  // windows with |pred| >= floor max|pred|
  int jobs = 1;
};

DriftRun measure_drift(const Analysis& a, const ControlParams& params, const SimOptions& sim,
                       const ValidateOptions& opt);
DriftReport validate_averaged_drift(const Analysis& a, const ControlParams& params, const SimOptions& sim,
                                    const ValidateOptions& opt = {});

// ---------------------------------------------------------------------------
// Locking boundary.

using LockProbe = std::function<Classification(double delta)>;

struct BoundaryResult {
  double delta_c = 0.0;
  double beta_c = 0.0;
  double lo = 0.0;  // last locked Delta
  double hi = 0.0;  // last unlocked Delta
  int evaluations = 0;
  std::vector<std::pair<double, Classification>> history;
};

// Bisection in Delta between a locked and an unlocked detuning.
BoundaryResult find_locking_boundary(const LockProbe& probe, double delta_locked, double delta_unlocked,
                                     double tol);

enum class Side { Upper, Lower };

struct BoundaryOptions {
  double tol = 0.0;  // Delta units; <= 0: 0.03 |G edge|
  double drift_threshold = 0.0;  // Delta units; <= 0: tol
  double min_periods = 50.0;
};

// Full-system probe started at the extremum of G on the chosen side.
BoundaryResult find_locking_boundary(const Analysis& a, double alpha, double gamma, Side side,
                                     const SimOptions& sim, const BoundaryOptions& opt = {});

// ---------------------------------------------------------------------------
// Sweeps.

struct SweepCell {
  std::size_t index = 0;
  double alpha = 0.0, beta = 0.0, gamma = 0.0;
  double mu = 0.0, delta = 0.0;
  Classification classification;
  bool predicted_inside = false;
  double wall_time = 0.0;
  std::string error;
};

struct SweepSpec {
  double alpha = 200.0;
  double beta_lo = 0.0, beta_hi = 0.0;
  double gamma_lo = 0.0, gamma_hi = 0.0;
  int n_beta = 3, n_gamma = 3;
  double psi1_0 = 0.0;
  double max_horizon = 2e5;
  double cut_factor = 20.0;
  int jobs = 1;
};

std::vector<SweepCell> sweep_grid(const Analysis& a, const SweepSpec& spec, const RegionSpec& region,
                                  const SimOptions& sim, const ClassifyOptions& cls);

// Runs fn(i) for i in [0, count) on up to `jobs` threads.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace modlock
