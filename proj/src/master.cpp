#include "cfs/master.hpp"

#include <algorithm>
#include <cmath>

namespace cfs {

LindbladSpec LindbladSpec::cfs(Operator h0, ChannelOperatorSet ops, NoiseWindow window,
                               std::optional<double> start_time) {
  LindbladSpec s;
  s.kind = Kind::CfsDoubleCommutator;
  s.h0 = std::move(h0);
  s.ops = std::move(ops);
  s.window = window;
  s.start_time = start_time;
  return s;
}

LindbladSpec LindbladSpec::standard(Operator h0, std::vector<Matrix> jumps, GkslOrdering ordering) {
  LindbladSpec s;
  s.kind = Kind::StandardGksl;
  s.h0 = std::move(h0);
  s.jumps = std::move(jumps);
  s.ordering = ordering;
  return s;
}

namespace {

// Trapezoid data for one channel: zeta weights (including the window) and the
// nu-integrated partners G_i = int_0^{numax} dnu M(zeta_i - nu).
struct PairingTable {
  int half = 0;
  std::vector<double> zeta_weight;
  std::vector<Matrix> partner;
};

PairingTable pairing(const ChannelOperatorSet& ops, int a, const NoiseWindow& window, double t,
                     std::optional<double> start) {
  PairingTable p;
  const int k = ops.half_width(a);
  const double d = ops.step();
  p.half = k;
  int kmax = 2 * k;
  if (start) {
    const double span = 2.0 * (t - *start) / d;
    kmax = std::clamp(static_cast<int>(std::floor(span + 1e-9)), 0, 2 * k);
  }
  const Matrix zero = Matrix::Zero(ops.dim(), ops.dim());
  for (int i = -k; i <= k; ++i) {
    const double w = window(t - 0.5 * i * d);
    const double end = (std::abs(i) == k) ? 0.5 : 1.0;
    p.zeta_weight.push_back(end * d * w * w);
    Matrix g = zero;
    if (kmax > 0 && w != 0.0) {
      for (int n = 0; n <= kmax; ++n) {
        const double tw = (n == 0 || n == kmax) ? 0.5 : 1.0;
        g += (tw * d) * ops.at_index(a, i - n);
      }
    }
    p.partner.push_back(std::move(g));
  }
  return p;
}

}  // namespace

Matrix cfs_rhs(const Matrix& sigma, const LindbladSpec& spec, double t) {
  const Matrix& h = spec.h0.matrix();
  Matrix out = -kI * (h * sigma - sigma * h);
  for (int a = 0; a < spec.ops.channels(); ++a) {
    const PairingTable p = pairing(spec.ops, a, spec.window, t, spec.start_time);
    for (int i = -p.half; i <= p.half; ++i) {
      const double c = p.zeta_weight[static_cast<std::size_t>(i + p.half)];
      if (c == 0.0) continue;
      const Matrix& m = spec.ops.at_index(a, i);
      const Matrix& g = p.partner[static_cast<std::size_t>(i + p.half)];
      if (spec.single_commutator) {
        const Matrix gs = g * sigma;
        out -= c * (m * gs - gs * m);
      } else {
        const Matrix inner = g * sigma - sigma * g;
        out -= c * (m * inner - inner * m);
      }
    }
  }
  return out;
}

Matrix gksl_rhs(const Matrix& sigma, const LindbladSpec& spec) {
  const Matrix& h = spec.h0.matrix();
  Matrix out = -kI * (h * sigma - sigma * h);
  for (const auto& l : spec.jumps) {
    const Matrix ll = (spec.ordering == GkslOrdering::Standard) ? Matrix(l.adjoint() * l) : Matrix(l * l.adjoint());
    out -= ll * sigma - 2.0 * l * sigma * l.adjoint() + sigma * ll;
  }
  return out;
}

Matrix lindblad_rhs(const Matrix& sigma, const LindbladSpec& spec, double t) {
  return spec.kind == LindbladSpec::Kind::CfsDoubleCommutator ? cfs_rhs(sigma, spec, t) : gksl_rhs(sigma, spec);
}

IntegrationLog integrate(const DensityMatrix& sigma0, const LindbladSpec& spec, const TimeGrid& grid,
                         int record_every) {
  if (sigma0.dim() != spec.h0.dim()) throw Error(ErrorKind::DimensionMismatch, "integrate: sigma0 dimension");
  if (record_every < 1) throw Error(ErrorKind::InvalidArgument, "record_every must be >= 1");
  IntegrationLog log;
  Matrix s = sigma0.values;
  const cplx tr0 = s.trace();
  const double dt = grid.dt;
  const int n = grid.steps();
  log.min_eigenvalue = sigma0.min_eigenvalue();
  log.times.push_back(grid.t0);
  log.states.push_back(s);
  for (int j = 0; j < n; ++j) {
    const double t = grid.t(j);
    const Matrix k1 = lindblad_rhs(s, spec, t);
    const Matrix k2 = lindblad_rhs(s + 0.5 * dt * k1, spec, t + 0.5 * dt);
    const Matrix k3 = lindblad_rhs(s + 0.5 * dt * k2, spec, t + 0.5 * dt);
    const Matrix k4 = lindblad_rhs(s + dt * k3, spec, t + dt);
    s += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    const Matrix sym = hermitize(s);
    const double correction = max_abs(s - sym);
    if (correction > 1e-6)
      throw Error(ErrorKind::StepRejected,
                  "Hermiticity correction " + std::to_string(correction) + " at t = " + std::to_string(t + dt));
    log.max_symmetrization = std::max(log.max_symmetrization, correction);
    s = sym;
    log.max_trace_drift = std::max(log.max_trace_drift, std::abs(s.trace() - tr0));
    log.min_eigenvalue = std::min(log.min_eigenvalue, DensityMatrix{s}.min_eigenvalue());
    if ((j + 1) % record_every == 0 || j + 1 == n) {
      log.times.push_back(grid.t(j + 1));
      log.states.push_back(s);
    }
  }
  return log;
}

Operator compute_A(const ChannelOperatorSet& ops, const NoiseWindow& window, double t) {
  Matrix out = Matrix::Zero(ops.dim(), ops.dim());
  for (int a = 0; a < ops.channels(); ++a) {
    const PairingTable p = pairing(ops, a, window, t, std::nullopt);
    for (int i = -p.half; i <= p.half; ++i) {
      const double c = p.zeta_weight[static_cast<std::size_t>(i + p.half)];
      if (c != 0.0) out -= c * ops.at_index(a, i) * p.partner[static_cast<std::size_t>(i + p.half)];
    }
  }
  return Operator(std::move(out), false);
}

Operator compute_B(const ChannelOperatorSet& ops, const NoiseWindow& window, double t) {
  const double d = ops.step();
  const Matrix a_dot =
      (compute_A(ops, window, t + d).matrix() - compute_A(ops, window, t - d).matrix()) / (2.0 * d);
  Matrix x = Matrix::Zero(ops.dim(), ops.dim());
  for (int a = 0; a < ops.channels(); ++a) {
    const int k = ops.half_width(a);
    for (int i = -k; i <= k; ++i) {
      const double w = window(t - 0.5 * i * d);
      const double end = (std::abs(i) == k) ? 0.5 : 1.0;
      const Matrix& m = ops.at_index(a, i);
      x += (2.0 * end * d * w * w) * (m * m);
    }
  }
  return Operator(kI * a_dot + kI * x, false);
}

GroundState ground_state(const Operator& h0, GroundStateConvention convention, double spacing) {
  const auto eig = HermitianEigen::of(h0.matrix());
  int idx = 0;
  if (convention == GroundStateConvention::LowestPositive) {
    idx = -1;
    for (int i = 0; i < eig.values.size(); ++i)
      if (eig.values(i) > 0.0) {
        idx = i;
        break;
      }
    if (idx < 0) throw Error(ErrorKind::InvalidArgument, "H0 has no positive eigenvalue");
  }
  Vector v = eig.vectors.col(idx) / std::sqrt(spacing);
  return {{v, spacing, Picture::Untransformed}, eig.values(idx)};
}

PositiveRestriction restrict_to_positive(const Operator& h0, const std::vector<Matrix>& jumps) {
  const auto eig = HermitianEigen::of(h0.matrix());
  std::vector<int> keep;
  for (int i = 0; i < eig.values.size(); ++i)
    if (eig.values(i) > 0.0) keep.push_back(i);
  if (keep.empty()) throw Error(ErrorKind::InvalidArgument, "H0 has no positive eigenvalue");
  Matrix q(h0.dim(), static_cast<int>(keep.size()));
  RealVector e(static_cast<int>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) {
    q.col(static_cast<int>(c)) = eig.vectors.col(keep[c]);
    e(static_cast<int>(c)) = eig.values(keep[c]);
  }
  PositiveRestriction r{Operator(e.cast<cplx>().asDiagonal(), true), {}, q};
  for (const auto& l : jumps) r.jumps.push_back(q.adjoint() * l * q);
  return r;
}

double heating_rate_standard(const StateVector& psi, const Operator& h0, const std::vector<Matrix>& jumps) {
  if (psi.dim() != h0.dim()) throw Error(ErrorKind::DimensionMismatch, "heating_rate_standard");
  const double norm2 = l2_inner(psi, psi).real();
  const Vector hpsi = h0.matrix() * psi.values;
  const double energy = (psi.spacing * psi.values.dot(hpsi)).real() / norm2;
  const double residual = std::sqrt(psi.spacing) * (hpsi - energy * psi.values).norm() / std::sqrt(norm2);
  if (residual > 1e-8)
    throw Error(ErrorKind::NotEigenstate, "||H0 psi - E psi|| = " + std::to_string(residual));
  double rate = 0.0;
  for (const auto& l : jumps) {
    const Vector lpsi = l * psi.values;
    const Vector shifted = h0.matrix() * lpsi - energy * lpsi;
    rate += 2.0 * (psi.spacing * lpsi.dot(shifted)).real();
  }
  return rate;
}

double heating_rate_cfs(const DensityMatrix& sigma, const LindbladSpec& spec, double t) {
  return (spec.h0.matrix() * cfs_rhs(sigma.values, spec, t)).trace().real();
}

}  // namespace cfs
