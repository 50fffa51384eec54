#pragma once

// Named experiments. Each preset runs one model check end to end and reports
// its assertions; the result is serialized by cfs/io.hpp.

#include <map>
#include <string>
#include <vector>

#include "cfs/config.hpp"

namespace cfs {

struct Assertion {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double threshold = 0.0;
  double lower = 0.0;    // used when relation is "in": lower <= value <= threshold
  std::string relation;  // "<=", ">=", ">", "in"
  std::string detail;
};

struct CsvTable {
  std::string file;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

struct PresetResult {
  std::string preset;
  std::vector<Assertion> assertions;
  std::map<std::string, double> exponents;
  std::map<std::string, double> metrics;
  std::vector<CsvTable> tables;
  std::vector<std::string> notes;

  bool pass() const;
};

struct PresetInfo {
  std::string name;
  std::string description;
};

const std::vector<PresetInfo>& preset_list();
bool is_preset(const std::string& name);

// Initial states by name: "random", "lowest_positive", "global_minimum",
// "packet", "two_branch".
StateVector initial_state(const std::string& name, const LatticeConfig& lattice, const Operator& h0,
                          std::uint64_t seed);

// Antiunitary (psi)(x) -> sigma_1 conj(psi(x)); maps H0 to -H0.
Vector charge_conjugate(const Vector& psi);

PresetResult run_preset(const std::string& name, const ExperimentConfig& cfg);

// Least-squares slope of log(y) against log(x).
double fit_log_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace cfs
