#pragma once

// Per-realization dynamics of the nonlocal Schroedinger equation
//
//   i d/dt psi(t) = H0 psi(t) + int V(t, t') psi(t') dt'
//
// and the equal-time operators derived from its solution.

#include <memory>
#include <string>
#include <vector>

#include "cfs/interaction.hpp"

namespace cfs {

struct SolverOptions {
  double tol = 1e-10;  // relative sup-norm change between Picard iterates
  int max_iter = 50;
  int divisor = 8;     // require dt <= ell_min / divisor
  double warn_coupling = 0.2;
  double max_coupling = 0.5;
};

// Problem data shared by every solve on one realization. Internally works in
// the eigenbasis of H0, where free evolution is diagonal.
class NonlocalProblem {
 public:
  NonlocalProblem(Operator h0, std::vector<InteractionChannel> channels, NoiseRealization noise, TimeGrid grid,
                  SolverOptions options = {});

  const Operator& h0() const { return h0_; }
  const HermitianEigen& h0_eigen() const { return eig_; }
  const std::vector<InteractionChannel>& channels() const { return channels_; }
  const NoiseRealization& noise() const { return noise_; }
  const TimeGrid& grid() const { return grid_; }
  const SolverOptions& options() const { return options_; }
  int kernel_steps() const { return kernel_; }
  int dim() const { return h0_.dim(); }
  double coupling() const { return coupling_; }  // max_a lambda_a ell_a
  const std::vector<std::string>& warnings() const { return warnings_; }

  // Grid index of t (must lie on the grid).
  int index_of(double t) const;

  // V(t_j, t_{j+d}) dt with trapezoid end weights, as scalar coefficients of
  // the eigenbasis channel operators.
  double coefficient(int channel, int j, int d) const;
  const Matrix& channel_eigen(int channel) const { return a_eig_[static_cast<std::size_t>(channel)]; }

  // Position <-> eigenbasis.
  Matrix to_eigen(const Matrix& m) const { return eig_.vectors.adjoint() * m * eig_.vectors; }
  Matrix from_eigen(const Matrix& m) const { return eig_.vectors * m * eig_.vectors.adjoint(); }

 private:
  Operator h0_;
  HermitianEigen eig_;
  std::vector<InteractionChannel> channels_;
  NoiseRealization noise_;
  TimeGrid grid_;
  SolverOptions options_;
  int kernel_ = 0;
  int first_ = 0;  // first tabulated j
  double coupling_ = 0.0;
  std::vector<Matrix> a_eig_;
  std::vector<std::vector<double>> coeff_;  // [channel][(j - first) * (2K+1) + d + K]
  std::vector<std::string> warnings_;
};

// Solution columns on nodes j = -2K .. steps + 2K (free evolution outside
// [t0, t1]), stored in the H0 eigenbasis.
class EvolutionRecord {
 public:
  EvolutionRecord() = default;
  EvolutionRecord(std::shared_ptr<const NonlocalProblem> problem, std::vector<Matrix> columns, int first, std::vector<double> residuals,
                  double spacing);

  const NonlocalProblem& problem() const { return *problem_; }
  int first() const { return first_; }
  int last() const { return first_ + static_cast<int>(cols_.size()) - 1; }
  int iterations() const { return static_cast<int>(residuals_.size()); }
  const std::vector<double>& residuals() const { return residuals_; }
  double spacing() const { return spacing_; }

  const Matrix& eigen_at(int j) const;
  // Position-basis values at node j (vector solve: one column).
  Matrix at(int j) const;
  StateVector state(int j) const;

 private:
  std::shared_ptr<const NonlocalProblem> problem_;
  std::vector<Matrix> cols_;
  int first_ = 0;
  std::vector<double> residuals_;
  double spacing_ = 1.0;
};

// Picard iteration on the Duhamel form, trapezoid rule in the interaction
// picture (H0 phases exact at the nodes).
EvolutionRecord solve_nonlocal(const StateVector& psi0, std::shared_ptr<const NonlocalProblem> problem);

// Full propagator U^{t}_{t0}: solve with identity initial data.
EvolutionRecord solve_propagator(std::shared_ptr<const NonlocalProblem> problem, double spacing = 1.0);

// (V psi)(t_j) in the eigenbasis, for the columns of the record.
Matrix apply_V(const EvolutionRecord& record, int j);

// W(t) = int V(t,t') U^{t'}_t dt'. Requires a propagator record.
Operator compute_W(double t, const EvolutionRecord& propagator);

// S_t = -(i/2) int int (eps(tau - t) - eps(tau' - t)) (U^tau_t)^dagger V(tau,tau') U^tau'_t,
// with eps(0) = 0 at the node t itself.
Operator compute_S(double t, const EvolutionRecord& propagator);

// <psi|phi>_t = (psi|(1 + S_t) phi)_t from the operator S_t.
cplx conserved_inner_operator(const StateVector& psi, const StateVector& phi, const Operator& s_t);
// Surface-layer form evaluated directly on two solution trajectories.
cplx conserved_inner_surface(const EvolutionRecord& psi, const EvolutionRecord& phi, double t);

StateVector transform_state(const StateVector& psi, const Operator& s_t,
                            double positivity_floor = kDefaultPositivityFloor);

enum class WtildeMode { Exact, Expansion };
enum class DerivativeRule {
  CentralDifference,  // d/dt (1+S)^{-1/2} from S at t +- dt
  LemmaIdentity,      // dS/dt = i(1+S)(H0+W) - i(H0+W^dag)(1+S), Daleckii-Krein derivative
};

Operator compute_Wtilde(double t, const EvolutionRecord& propagator, WtildeMode mode,
                        DerivativeRule rule = DerivativeRule::CentralDifference,
                        double positivity_floor = kDefaultPositivityFloor);

// Right side of the S_t evolution identity, i(1+S)(H0+W) - i(H0+W^dag)(1+S).
Operator s_derivative_identity(const Operator& h0, const Operator& w, const Operator& s);

// psi~(t + dt) = exp(-i dt (H0 + W~_mid)) psi~(t).
StateVector step_transformed(const StateVector& psi_tilde, double dt, const Operator& h0, const Matrix& wtilde_mid);

}  // namespace cfs
