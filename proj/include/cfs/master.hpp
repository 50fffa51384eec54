#pragma once

// Statistical-mean dynamics: the double-commutator master equation built from
// channel operators, the standard GKSL equation, and the operators A, B that
// govern the mean energy.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cfs/interaction.hpp"

namespace cfs {

// Operator ordering of the dissipator. Standard is
//   -(L^dag L s - 2 L s L^dag + s L^dag L),
// Reversed keeps L L^dag in the anticommutator, which is trace preserving
// only for normal L.
enum class GkslOrdering { Standard, Reversed };

struct LindbladSpec {
  enum class Kind { CfsDoubleCommutator, StandardGksl };
  Kind kind = Kind::StandardGksl;
  Operator h0;

  // Channel form.
  ChannelOperatorSet ops;
  NoiseWindow window;                // squared amplitude at the pairing midpoint t - zeta/2
  std::optional<double> start_time;  // restricts nu <= 2 (t - start) when set
  bool single_commutator = false;    // alternative reading [M(z), M(z - nu) s]

  // Jump form.
  std::vector<Matrix> jumps;
  GkslOrdering ordering = GkslOrdering::Standard;

  static LindbladSpec cfs(Operator h0, ChannelOperatorSet ops, NoiseWindow window = NoiseWindow::always(),
                          std::optional<double> start_time = std::nullopt);
  static LindbladSpec standard(Operator h0, std::vector<Matrix> jumps, GkslOrdering ordering = GkslOrdering::Standard);
};

// ds/dt = -i[H0, s] - sum_a int dzeta int_0^{2 ell} dnu [M(zeta), [M(zeta - nu), s]]
Matrix cfs_rhs(const Matrix& sigma, const LindbladSpec& spec, double t = 0.0);
Matrix gksl_rhs(const Matrix& sigma, const LindbladSpec& spec);
// Dispatches on spec.kind.
Matrix lindblad_rhs(const Matrix& sigma, const LindbladSpec& spec, double t);

struct IntegrationLog {
  double max_symmetrization = 0.0;  // largest max-abs correction from s <- (s + s^dag)/2
  double max_trace_drift = 0.0;
  double min_eigenvalue = 0.0;      // most negative eigenvalue seen (positivity monitor)
  std::vector<double> times;
  std::vector<Matrix> states;
};

// Classic RK4 on the grid. Throws StepRejected if a Hermiticity correction
// exceeds 1e-6.
IntegrationLog integrate(const DensityMatrix& sigma0, const LindbladSpec& spec, const TimeGrid& grid,
                         int record_every = 1);

// A = -sum_a int dzeta w(t - zeta/2)^2 int_0^{2 ell} dnu M(zeta) M(zeta - nu).
Operator compute_A(const ChannelOperatorSet& ops, const NoiseWindow& window = NoiseWindow::always(), double t = 0.0);
// B = i dA/dt + i 2 sum_a int dzeta w^2 M(zeta)^2, dA/dt by central difference with step ops.step().
Operator compute_B(const ChannelOperatorSet& ops, const NoiseWindow& window = NoiseWindow::always(), double t = 0.0);

enum class GroundStateConvention { GlobalMinimum, LowestPositive };

struct GroundState {
  StateVector state;
  double energy = 0.0;
};

GroundState ground_state(const Operator& h0, GroundStateConvention convention, double spacing);

// H0 and jump operators compressed to the positive-energy eigenspace of H0.
struct PositiveRestriction {
  Operator h0;               // diagonal, positive energies ascending
  std::vector<Matrix> jumps;
  Matrix basis;              // columns: positive-energy eigenvectors in the full space
};
PositiveRestriction restrict_to_positive(const Operator& h0, const std::vector<Matrix>& jumps);

// 2 sum_k <L_k psi | (H0 - E) L_k psi> for an eigenstate psi of H0.
double heating_rate_standard(const StateVector& psi, const Operator& h0, const std::vector<Matrix>& jumps);

// tr(H0 ds/dt) under the channel-form equation.
double heating_rate_cfs(const DensityMatrix& sigma, const LindbladSpec& spec, double t = 0.0);

}  // namespace cfs
