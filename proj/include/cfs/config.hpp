#pragma once

// Experiment configuration: a JSON document with sections lattice, kernel,
// time, noise, ensemble and run. Unknown keys are rejected.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cfs/ensemble.hpp"

namespace cfs {

struct KernelConfig {
  double ell_min = 1.0;
  ProfileShape profile = ProfileShape::RaisedCosine;
  std::vector<ChannelSpec> channels;
  std::optional<Eigen::MatrixXd> covariance;
  bool symmetrize = true;
};

struct WindowConfig {
  NoiseWindow::Kind kind = NoiseWindow::Kind::Always;
  double t_on = 0.0;
  double t_off = 0.0;
  double ramp = 0.0;

  NoiseWindow window() const { return {kind, t_on, t_off, ramp}; }
};

struct ExperimentConfig {
  LatticeConfig lattice;
  KernelConfig kernel;
  TimeGrid time;
  std::uint64_t seed = 0;
  WindowConfig window;
  int realizations = 100;
  std::vector<std::string> observables;
  PictureSelection picture = PictureSelection::Transformed;
  std::optional<int> workers;
  std::string preset;
  std::string output_dir = "out";
  std::string initial_state;  // empty: preset default
  std::map<std::string, double> tolerances;

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);
  nlohmann::json to_json() const;

  // Cross-module checks; throws ConfigError (or the owning module's error).
  void validate() const;

  // Channels after covariance diagonalization.
  std::vector<InteractionChannel> build_channels() const;
  ModelSetup model() const;
  double tolerance(const std::string& name, double fallback) const;
};

// Named observables: "energy", "identity", "half_sign", "energy_sign",
// "positive_projector", "site:<k>".
Observable make_observable(const std::string& name, const LatticeConfig& lattice, const Operator& h0);

}  // namespace cfs
