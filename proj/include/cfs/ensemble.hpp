#pragma once

// Monte Carlo over noise realizations: ensemble means of observables, energy
// and density matrices in the transformed and untransformed pictures, and the
// variance diagnostics of the collapse scenario.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cfs/evolution.hpp"

namespace cfs {

struct Observable {
  std::string name;
  Matrix op;  // Hermitian
};

enum class PictureSelection { Transformed, Untransformed, Both };

std::string to_string(PictureSelection p);
PictureSelection parse_picture(const std::string& name);

// Everything a realization needs besides its noise.
struct ModelSetup {
  Operator h0;
  double spacing = 1.0;
  std::vector<InteractionChannel> channels;
  TimeGrid grid;
  NoiseWindow window;
  SolverOptions solver;
  bool symmetrize = true;
  double zeta_step = 0.0;  // 0: dt / 2
};

struct EnsembleConfig {
  int realizations = 100;
  std::uint64_t seed = 0;
  PictureSelection picture = PictureSelection::Transformed;
  std::vector<Observable> observables;
  int checkpoint_every = 1;            // transformed picture, in grid steps
  int untransformed_every = 0;         // 0: same as checkpoint_every
  bool record_density = false;
  bool keep_raw = false;               // per-realization <O> series (transformed picture)
  std::optional<int> workers;          // CFS_WORKERS overrides; default hardware concurrency
  static constexpr int kLeafSize = 32; // fixed reduction blocks, independent of worker count

  void validate(const ModelSetup& setup) const;
};

struct Series {
  std::vector<double> mean;
  std::vector<double> stderr;
  std::vector<double> variance;  // across realizations
};

struct ObservableSeries {
  Series value;     // <O>
  Series square;    // <O>^2
  Series second;    // <O^2>
  Series rate;      // c12 (transformed) or c22 (untransformed) estimator
  Series spread_change;    // per-realization (<O^2> - <O>^2)|_{t0}^{t}
  Series adjusted_change;  // per-realization -<O>^2|_{t0}^{t}
};

struct PictureStats {
  std::vector<double> times;
  Series energy;
  Series norm;
  std::vector<ObservableSeries> observables;
};

struct EnsembleStats {
  int realizations = 0;
  std::uint64_t seed = 0;
  std::optional<PictureStats> transformed;
  std::optional<PictureStats> untransformed;
  std::vector<Matrix> density_mean;    // transformed checkpoints
  std::vector<Eigen::MatrixXd> density_stderr;  // sqrt(se_re^2 + se_im^2) per entry
  std::vector<std::vector<std::vector<double>>> raw;  // [observable][realization][checkpoint]
  double max_norm_drift = 0.0;         // untransformed conserved norm, worst realization
  std::vector<std::string> warnings;
};

int resolve_workers(const std::optional<int>& requested);

EnsembleStats run_ensemble(const StateVector& psi0, const EnsembleConfig& cfg, const ModelSetup& setup);

struct EnergySeries {
  std::vector<double> times;
  Series transformed;
  Series untransformed;
  std::vector<double> difference;  // untransformed - transformed, when both were recorded on common times
};

EnergySeries energy_trajectory(const EnsembleStats& stats, PictureSelection picture);

struct VarianceReport {
  std::string observable;
  double raw_change = 0.0;  // (<<O^2>> - <<O>^2>)|_{t0}^{t1}
  double raw_stderr = 0.0;
  double adjusted_change = 0.0;  // -<<O>^2>|_{t0}^{t1}, the O^2 term set to zero
  double adjusted_stderr = 0.0;
  std::vector<double> times;
  Series c12;
  std::vector<double> c22_times;
  Series c22;
};

// Throws ScenarioViolation unless the window vanishes within 2 ell of both ends.
VarianceReport variance_diagnostics(const EnsembleStats& stats, int observable, const ModelSetup& setup);

// Decreases of the branch-weight variance below this are treated as roundoff.
inline constexpr double kVarianceRoundoff = 1e-12;

struct CollapseReport {
  VarianceReport variance;
  std::vector<double> times;
  Series pointer;                     // <O> per checkpoint
  Series branch_weight;               // <P> per checkpoint
  std::vector<double> histogram_edges;
  std::vector<int> histogram;         // branch weights at t1
  bool mean_constant = false;         // |<<O>>(t) - <<O>>(t0)| <= 3 stderr at every checkpoint
  bool variance_monotone = false;     // Var_r <P> nondecreasing over checkpoints
};

// observables[0] must be the pointer observable O and observables[1] the
// projector on one branch.
CollapseReport scenario_collapse(const StateVector& psi0, const EnsembleConfig& cfg, const ModelSetup& setup,
                                 int bins = 10);

// The A operator estimated from noise samples,
// -<<W~(t) int_{t - 2 ell}^{t} W~(tau) dtau>>, with entrywise standard errors.
struct MonteCarloA {
  Matrix mean;
  Eigen::MatrixXd stderr_re;
  Eigen::MatrixXd stderr_im;
};
MonteCarloA estimate_A(const ChannelOperatorSet& ops, const TimeGrid& grid, int realizations, std::uint64_t seed,
                       std::optional<int> workers = std::nullopt);

}  // namespace cfs
