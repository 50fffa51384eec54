#pragma once

// Finite-dimensional Hilbert space for a 1+1 dimensional lattice Dirac
// particle: D = 2N complex amplitudes, index 2*site + spinor component.

#include <complex>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "cfs/errors.hpp"

namespace cfs {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr cplx kI{0.0, 1.0};

struct LatticeConfig {
  int sites = 4;
  double spacing = 1.0;
  double mass = 1.0;
  static constexpr int spinor_dim = 2;

  int dim() const { return spinor_dim * sites; }
  void validate() const;
};

// Dense operator on the lattice Hilbert space. The hermitian hint selects the
// eigendecomposition path in matrix_function.
class Operator {
 public:
  Operator() = default;
  explicit Operator(Matrix m, bool hermitian_hint = false);

  static Operator identity(int dim);
  static Operator zero(int dim);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& matrix() const { return m_; }
  bool hermitian_hint() const { return hermitian_; }

  Operator adjoint() const;
  // Max-abs-entry relative defect ||M - M^dagger||_inf / ||M||_inf (0 for M = 0).
  double hermiticity_defect() const;

 private:
  Matrix m_;
  bool hermitian_ = false;
};

enum class Picture { Untransformed, Transformed };

// Wave-function values on the lattice; the spacing is carried so that the
// discretized L2 product sum_x a * conj(phi) psi is well defined.
struct StateVector {
  Vector values;
  double spacing = 1.0;
  Picture picture = Picture::Untransformed;

  int dim() const { return static_cast<int>(values.size()); }
};

// Matrix of sigma acting on wave-function values: |psi)(psi| = a * psi psi^dagger.
struct DensityMatrix {
  Matrix values;

  int dim() const { return static_cast<int>(values.rows()); }
  cplx trace() const { return values.trace(); }
  double hermiticity_defect() const;
  double min_eigenvalue() const;

  static DensityMatrix pure(const StateVector& psi);
};

Operator build_dirac_h0(const LatticeConfig& cfg);

// Lattice momenta k_n = 2 pi n / (N a), n = -N/2 .. N/2 - 1 (symmetric range for odd N).
std::vector<double> lattice_momenta(const LatticeConfig& cfg);

// Shift by one site, (T psi)(x) = psi(x - 1) with periodic wrap.
Operator lattice_translation(const LatticeConfig& cfg);

// Parity x -> N - 1 - x combined with sigma_3 on the spinor; commutes with H0.
Operator lattice_parity(const LatticeConfig& cfg);

struct HermitianEigen {
  RealVector values;  // ascending
  Matrix vectors;     // orthonormal columns (Euclidean)

  static HermitianEigen of(const Matrix& m);
  Matrix apply(const RealVector& f_of_values) const;
  Matrix apply(const Eigen::VectorXcd& f_of_values) const;
};

struct MatrixFunction {
  enum class Kind { ExpScaled, Sqrt, InvSqrt };
  Kind kind = Kind::Sqrt;
  double theta = 0.0;  // ExpScaled only: returns exp(i theta op)

  static MatrixFunction exp_scaled(double theta) { return {Kind::ExpScaled, theta}; }
  static MatrixFunction sqrt() { return {Kind::Sqrt, 0.0}; }
  static MatrixFunction inv_sqrt() { return {Kind::InvSqrt, 0.0}; }
};

inline constexpr double kDefaultPositivityFloor = 1e-6;

Operator matrix_function(const Operator& op, MatrixFunction kind,
                         double positivity_floor = kDefaultPositivityFloor);

cplx l2_inner(const StateVector& phi, const StateVector& psi);
double l2_norm(const StateVector& psi);
cplx expectation(const StateVector& psi, const Operator& op);

double spectral_norm(const Matrix& m);
double max_abs(const Matrix& m);

// Ensure exact bitwise Hermiticity: (M + M^dagger)/2 with real diagonal.
Matrix hermitize(const Matrix& m);

}  // namespace cfs
