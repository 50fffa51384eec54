#include "cfs/hilbert.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace cfs {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NotPositive: return "NotPositive";
    case ErrorKind::NotPSD: return "NotPSD";
    case ErrorKind::GridTooCoarse: return "GridTooCoarse";
    case ErrorKind::OutOfGrid: return "OutOfGrid";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::StepRejected: return "StepRejected";
    case ErrorKind::NotEigenstate: return "NotEigenstate";
    case ErrorKind::PictureNotRecorded: return "PictureNotRecorded";
    case ErrorKind::ScenarioViolation: return "ScenarioViolation";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IOFailure: return "IOFailure";
  }
  return "Unknown";
}

void LatticeConfig::validate() const {
  if (sites < 2) throw Error(ErrorKind::InvalidArgument, "lattice needs at least 2 sites");
  if (!(spacing > 0.0)) throw Error(ErrorKind::InvalidArgument, "lattice spacing must be positive");
  if (!(mass >= 0.0)) throw Error(ErrorKind::InvalidArgument, "mass must be nonnegative");
}

Operator::Operator(Matrix m, bool hermitian_hint) : m_(std::move(m)), hermitian_(hermitian_hint) {
  if (m_.rows() != m_.cols()) throw Error(ErrorKind::DimensionMismatch, "operator must be square");
}

Operator Operator::identity(int dim) { return Operator(Matrix::Identity(dim, dim), true); }
Operator Operator::zero(int dim) { return Operator(Matrix::Zero(dim, dim), true); }

Operator Operator::adjoint() const { return Operator(m_.adjoint(), hermitian_); }

double max_abs(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

double Operator::hermiticity_defect() const {
  const double scale = max_abs(m_);
  if (scale == 0.0) return 0.0;
  return max_abs(m_ - m_.adjoint()) / scale;
}

double DensityMatrix::hermiticity_defect() const {
  const double scale = max_abs(values);
  if (scale == 0.0) return 0.0;
  return max_abs(values - values.adjoint()) / scale;
}

double DensityMatrix::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Matrix> es(hermitize(values), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

DensityMatrix DensityMatrix::pure(const StateVector& psi) {
  return {psi.spacing * psi.values * psi.values.adjoint()};
}

Matrix hermitize(const Matrix& m) {
  const Eigen::Index n = m.rows();
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i, i) = cplx(m(i, i).real(), 0.0);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const cplx v = 0.5 * (m(i, j) + std::conj(m(j, i)));
      out(i, j) = v;
      out(j, i) = std::conj(v);
    }
  }
  return out;
}

std::vector<double> lattice_momenta(const LatticeConfig& cfg) {
  cfg.validate();
  const int n_sites = cfg.sites;
  const int lo = (n_sites % 2 == 0) ? -n_sites / 2 : -(n_sites - 1) / 2;
  std::vector<double> k;
  k.reserve(static_cast<std::size_t>(n_sites));
  for (int n = lo; n < lo + n_sites; ++n)
    k.push_back(2.0 * std::numbers::pi * n / (n_sites * cfg.spacing));
  return k;
}

Operator build_dirac_h0(const LatticeConfig& cfg) {
  const auto momenta = lattice_momenta(cfg);
  const int n_sites = cfg.sites;
  const int dim = cfg.dim();
  Matrix h = Matrix::Zero(dim, dim);
  // H(k) = k sigma_1 + m sigma_3, rotated to position space by the lattice Fourier transform.
  for (int x = 0; x < n_sites; ++x) {
    for (int y = 0; y < n_sites; ++y) {
      cplx diag{0.0, 0.0};
      cplx off{0.0, 0.0};
      for (double k : momenta) {
        const cplx phase = std::polar(1.0 / n_sites, k * (x - y) * cfg.spacing);
        diag += phase * cfg.mass;
        off += phase * k;
      }
      h(2 * x, 2 * y) = diag;
      h(2 * x + 1, 2 * y + 1) = -diag;
      h(2 * x, 2 * y + 1) = off;
      h(2 * x + 1, 2 * y) = off;
    }
  }
  return Operator(hermitize(h), true);
}

Operator lattice_translation(const LatticeConfig& cfg) {
  cfg.validate();
  const int dim = cfg.dim();
  Matrix t = Matrix::Zero(dim, dim);
  for (int x = 0; x < cfg.sites; ++x) {
    const int to = (x + 1) % cfg.sites;
    t(2 * to, 2 * x) = 1.0;
    t(2 * to + 1, 2 * x + 1) = 1.0;
  }
  return Operator(t, false);
}

Operator lattice_parity(const LatticeConfig& cfg) {
  cfg.validate();
  const int dim = cfg.dim();
  Matrix p = Matrix::Zero(dim, dim);
  for (int x = 0; x < cfg.sites; ++x) {
    const int to = cfg.sites - 1 - x;
    p(2 * to, 2 * x) = 1.0;
    p(2 * to + 1, 2 * x + 1) = -1.0;
  }
  return Operator(p, true);
}

HermitianEigen HermitianEigen::of(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success)
    throw Error(ErrorKind::InvalidArgument, "Hermitian eigendecomposition failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

Matrix HermitianEigen::apply(const RealVector& f) const {
  return vectors * f.asDiagonal() * vectors.adjoint();
}

Matrix HermitianEigen::apply(const Eigen::VectorXcd& f) const {
  return vectors * f.asDiagonal() * vectors.adjoint();
}

Operator matrix_function(const Operator& op, MatrixFunction kind, double positivity_floor) {
  const int dim = op.dim();
  if (kind.kind == MatrixFunction::Kind::ExpScaled) {
    if (kind.theta == 0.0) return Operator::identity(dim);
    if (op.hermitian_hint()) {
      const auto eig = HermitianEigen::of(op.matrix());
      Eigen::VectorXcd f(dim);
      for (int i = 0; i < dim; ++i) f(i) = std::polar(1.0, kind.theta * eig.values(i));
      return Operator(eig.apply(f), false);
    }
    // General matrices: scaling and squaring with a Taylor kernel.
    const Matrix a = kI * kind.theta * op.matrix();
    const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
    int squarings = 0;
    if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
    const Matrix scaled = a / std::ldexp(1.0, squarings);
    Matrix term = Matrix::Identity(dim, dim);
    Matrix result = Matrix::Identity(dim, dim);
    for (int k = 1; k <= 18; ++k) {
      term = term * scaled / static_cast<double>(k);
      result += term;
    }
    for (int s = 0; s < squarings; ++s) result = result * result;
    return Operator(result, false);
  }

  if (!op.hermitian_hint() && op.hermiticity_defect() > 1e-12)
    throw Error(ErrorKind::InvalidArgument, "sqrt/inv_sqrt require a Hermitian operator");
  const auto eig = HermitianEigen::of(hermitize(op.matrix()));
  if (eig.values(0) <= positivity_floor)
    throw Error(ErrorKind::NotPositive,
                "min eigenvalue " + std::to_string(eig.values(0)) + " <= floor " +
                    std::to_string(positivity_floor));
  RealVector f(dim);
  for (int i = 0; i < dim; ++i) {
    const double s = std::sqrt(eig.values(i));
    f(i) = kind.kind == MatrixFunction::Kind::Sqrt ? s : 1.0 / s;
  }
  return Operator(hermitize(eig.apply(f)), true);
}

cplx l2_inner(const StateVector& phi, const StateVector& psi) {
  if (phi.dim() != psi.dim())
    throw Error(ErrorKind::DimensionMismatch, "l2_inner: " + std::to_string(phi.dim()) + " vs " +
                                                  std::to_string(psi.dim()));
  return psi.spacing * phi.values.dot(psi.values);
}

double l2_norm(const StateVector& psi) { return std::sqrt(std::abs(l2_inner(psi, psi))); }

cplx expectation(const StateVector& psi, const Operator& op) {
  if (op.dim() != psi.dim()) throw Error(ErrorKind::DimensionMismatch, "expectation");
  return psi.spacing * psi.values.dot(op.matrix() * psi.values);
}

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

}  // namespace cfs
