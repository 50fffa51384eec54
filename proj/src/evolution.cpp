#include "cfs/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cfs {

NonlocalProblem::NonlocalProblem(Operator h0, std::vector<InteractionChannel> channels, NoiseRealization noise,
                                 TimeGrid grid, SolverOptions options)
    : h0_(std::move(h0)), eig_(HermitianEigen::of(h0_.matrix())), channels_(std::move(channels)),
      noise_(std::move(noise)), grid_(grid), options_(options) {
  if (noise_.channels() != static_cast<int>(channels_.size()))
    throw Error(ErrorKind::DimensionMismatch, "noise realization and channel list differ in size");
  for (const auto& c : channels_) {
    grid_.validate(c.profile.ell_min, options_.divisor);
    if (c.spatial_op.rows() != h0_.dim()) throw Error(ErrorKind::DimensionMismatch, "channel operator dimension");
    coupling_ = std::max(coupling_, std::abs(c.amplitude) * c.profile.ell_min);
  }
  if (coupling_ > options_.max_coupling) {
    std::ostringstream os;
    os << "coupling lambda*ell_min = " << coupling_ << " exceeds " << options_.max_coupling;
    throw Error(ErrorKind::InvalidArgument, os.str());
  }
  if (coupling_ > options_.warn_coupling) {
    std::ostringstream os;
    os << "coupling lambda*ell_min = " << coupling_ << " is outside the perturbative regime";
    warnings_.push_back(os.str());
  }
  const double ell = max_ell(channels_);
  kernel_ = channels_.empty() ? 0 : grid_.kernel_steps(ell);
  if (!channels_.empty() && !noise_.window().off_outside(grid_.t0 + ell, grid_.t1 - ell))
    warnings_.push_back("noise window does not vanish near the grid boundaries; kernel overhang uses free evolution");

  for (const auto& c : channels_) a_eig_.push_back(to_eigen(c.spatial_op));

  const int n = grid_.steps();
  first_ = -kernel_;
  const int rows = n + 2 * kernel_ + 1;
  const int width = 2 * kernel_ + 1;
  for (std::size_t a = 0; a < channels_.size(); ++a) {
    const auto& c = channels_[a];
    const int ka = grid_.kernel_steps(c.profile.ell_min);
    std::vector<double> table(static_cast<std::size_t>(rows * width), 0.0);
    for (int r = 0; r < rows; ++r) {
      const int j = first_ + r;
      for (int d = -ka; d <= ka; ++d) {
        const double l = c.profile(d * grid_.dt);
        if (l == 0.0) continue;
        const double mid = grid_.t0 + 0.5 * (2 * j + d) * grid_.dt;
        const double w = noise_.value(static_cast<int>(a), mid);
        const double end = (std::abs(d) == ka) ? 0.5 : 1.0;
        table[static_cast<std::size_t>(r * width + d + kernel_)] = c.amplitude * w * l * end * grid_.dt;
      }
    }
    coeff_.push_back(std::move(table));
  }
}

int NonlocalProblem::index_of(double t) const {
  const double pos = (t - grid_.t0) / grid_.dt;
  const double r = std::round(pos);
  if (std::abs(pos - r) > 1e-9 * std::max(1.0, std::abs(pos)))
    throw Error(ErrorKind::OutOfGrid, "t = " + std::to_string(t) + " is not a grid node");
  return static_cast<int>(r);
}

double NonlocalProblem::coefficient(int channel, int j, int d) const {
  if (d < -kernel_ || d > kernel_) return 0.0;
  const int r = j - first_;
  const int rows = grid_.steps() + 2 * kernel_ + 1;
  if (r < 0 || r >= rows) throw Error(ErrorKind::OutOfGrid, "kernel coefficient outside tabulated range");
  return coeff_[static_cast<std::size_t>(channel)][static_cast<std::size_t>(r * (2 * kernel_ + 1) + d + kernel_)];
}

EvolutionRecord::EvolutionRecord(std::shared_ptr<const NonlocalProblem> problem, std::vector<Matrix> columns,
                                 int first, std::vector<double> residuals, double spacing)
    : problem_(std::move(problem)), cols_(std::move(columns)), first_(first), residuals_(std::move(residuals)),
      spacing_(spacing) {}

const Matrix& EvolutionRecord::eigen_at(int j) const {
  if (j < first() || j > last()) throw Error(ErrorKind::OutOfGrid, "node " + std::to_string(j) + " not recorded");
  return cols_[static_cast<std::size_t>(j - first_)];
}

Matrix EvolutionRecord::at(int j) const { return problem_->h0_eigen().vectors * eigen_at(j); }

StateVector EvolutionRecord::state(int j) const {
  return {at(j).col(0), spacing_, Picture::Untransformed};
}

namespace {

Matrix interaction_term(const NonlocalProblem& p, const std::vector<Matrix>& cols, int first, int j) {
  const int k = p.kernel_steps();
  const auto& y0 = cols.front();
  Matrix f = Matrix::Zero(y0.rows(), y0.cols());
  Matrix acc(y0.rows(), y0.cols());
  for (int a = 0; a < static_cast<int>(p.channels().size()); ++a) {
    acc.setZero();
    bool any = false;
    for (int d = -k; d <= k; ++d) {
      const double c = p.coefficient(a, j, d);
      if (c == 0.0) continue;
      acc += c * cols[static_cast<std::size_t>(j + d - first)];
      any = true;
    }
    if (any) f.noalias() += p.channel_eigen(a) * acc;
  }
  return f;
}

EvolutionRecord solve_columns(const Matrix& y0_eigen, std::shared_ptr<const NonlocalProblem> problem, double spacing) {
  const NonlocalProblem& p = *problem;
  const int n = p.grid().steps();
  const int k = p.kernel_steps();
  const int first = -2 * k;
  const int count = n + 4 * k + 1;
  const double dt = p.grid().dt;
  const auto& energies = p.h0_eigen().values;
  const int dim = p.dim();

  // Trapezoid rule in the interaction picture:
  //   Y_j = e^{-iE dt} (Y_{j-1} - i dt/2 F_{j-1}) - i dt/2 F_j.
  // Paired with the trapezoid surface layer, the conserved product then
  // drifts by exactly dt^2/4 (|F_0|^2 - |F_j|^2).
  Eigen::VectorXcd step_phase(dim);
  for (int i = 0; i < dim; ++i) step_phase(i) = std::polar(1.0, -energies(i) * dt);
  const Eigen::VectorXcd w_prev = 0.5 * dt * step_phase;
  auto free_from = [&](const Matrix& y, double tau) {
    Matrix out = y;
    for (int i = 0; i < dim; ++i) out.row(i) *= std::polar(1.0, -energies(i) * tau);
    return out;
  };

  std::vector<Matrix> cols(static_cast<std::size_t>(count));
  for (int j = first; j < first + count; ++j) cols[static_cast<std::size_t>(j - first)] = free_from(y0_eigen, j * dt);

  std::vector<double> residuals;
  const double scale = std::max(y0_eigen.cwiseAbs().maxCoeff(), 1e-300);
  if (p.channels().empty()) return {std::move(problem), std::move(cols), first, {0.0}, spacing};

  std::vector<Matrix> f(static_cast<std::size_t>(n + 1));
  for (int iter = 0; iter < p.options().max_iter; ++iter) {
    for (int j = 0; j <= n; ++j) f[static_cast<std::size_t>(j)] = interaction_term(p, cols, first, j);
    double change = 0.0;
    Matrix prev = y0_eigen;
    for (int j = 1; j <= n; ++j) {
      const auto& fa = f[static_cast<std::size_t>(j - 1)];
      const auto& fb = f[static_cast<std::size_t>(j)];
      Matrix next = step_phase.asDiagonal() * prev;
      next -= kI * (w_prev.asDiagonal() * fa + (0.5 * dt) * fb);
      auto& slot = cols[static_cast<std::size_t>(j - first)];
      change = std::max(change, (next - slot).cwiseAbs().maxCoeff());
      slot = next;
      prev = std::move(next);
    }
    const Matrix& end = cols[static_cast<std::size_t>(n - first)];
    for (int j = n + 1; j < first + count; ++j) cols[static_cast<std::size_t>(j - first)] = free_from(end, (j - n) * dt);
    residuals.push_back(change / scale);
    if (change / scale <= p.options().tol) return {std::move(problem), std::move(cols), first, std::move(residuals), spacing};
  }
  std::ostringstream os;
  os << "Picard iteration did not reach tol " << p.options().tol << " in " << p.options().max_iter
     << " iterations (last residual " << residuals.back() << ", coupling " << p.coupling() << ")";
  throw Error(ErrorKind::NoConvergence, os.str());
}

int require_node(const EvolutionRecord& rec, double t, int margin) {
  const auto& p = rec.problem();
  const int j = p.index_of(t);
  if (j - margin < 0 || j + margin > p.grid().steps())
    throw Error(ErrorKind::OutOfGrid, "t = " + std::to_string(t) + " too close to the grid ends");
  return j;
}

double sgn0(int p) { return p > 0 ? 1.0 : (p < 0 ? -1.0 : 0.0); }

// Sum over straddling pairs (tau, tau') of dt * kappa * left(tau)^dagger V(tau, tau') right(tau'),
// kappa = -(i/2)(eps(tau - t) - eps(tau' - t)), in the eigenbasis.
Matrix surface_layer(const NonlocalProblem& p, int j, const EvolutionRecord& left, const EvolutionRecord& right) {
  const int k = p.kernel_steps();
  const double dt = p.grid().dt;
  const auto& r0 = right.eigen_at(j);
  const auto& l0 = left.eigen_at(j);
  Matrix total = Matrix::Zero(l0.cols(), r0.cols());
  Matrix acc(r0.rows(), r0.cols());
  Matrix z(r0.rows(), r0.cols());
  for (int pp = -k; pp <= k; ++pp) {
    const int tau = j + pp;
    z.setZero();
    bool any_channel = false;
    for (int a = 0; a < static_cast<int>(p.channels().size()); ++a) {
      acc.setZero();
      bool any = false;
      for (int d = -k; d <= k; ++d) {
        const int q = pp + d;
        const double kappa = -0.5 * (sgn0(pp) - sgn0(q));  // times i
        if (kappa == 0.0) continue;
        const double c = p.coefficient(a, tau, d);
        if (c == 0.0) continue;
        acc += (kappa * c * dt) * right.eigen_at(tau + d);
        any = true;
      }
      if (any) {
        z.noalias() += p.channel_eigen(a) * acc;
        any_channel = true;
      }
    }
    if (any_channel) total.noalias() += kI * (left.eigen_at(tau).adjoint() * z);
  }
  return total;
}

}  // namespace

EvolutionRecord solve_nonlocal(const StateVector& psi0, std::shared_ptr<const NonlocalProblem> problem) {
  if (psi0.dim() != problem->dim()) throw Error(ErrorKind::DimensionMismatch, "initial state dimension");
  const Matrix y0 = problem->h0_eigen().vectors.adjoint() * psi0.values;
  return solve_columns(y0, std::move(problem), psi0.spacing);
}

EvolutionRecord solve_propagator(std::shared_ptr<const NonlocalProblem> problem, double spacing) {
  const int dim = problem->dim();
  return solve_columns(Matrix::Identity(dim, dim), std::move(problem), spacing);
}

Matrix apply_V(const EvolutionRecord& record, int j) {
  const auto& p = record.problem();
  const int k = p.kernel_steps();
  if (j - k < record.first() || j + k > record.last()) throw Error(ErrorKind::OutOfGrid, "apply_V outside record");
  Matrix f = Matrix::Zero(record.eigen_at(j).rows(), record.eigen_at(j).cols());
  for (int a = 0; a < static_cast<int>(p.channels().size()); ++a) {
    Matrix acc = Matrix::Zero(f.rows(), f.cols());
    for (int d = -k; d <= k; ++d) {
      const double c = p.coefficient(a, j, d);
      if (c != 0.0) acc += c * record.eigen_at(j + d);
    }
    f += p.channel_eigen(a) * acc;
  }
  return f;
}

namespace {

Matrix w_eigen(const EvolutionRecord& prop, int j) {
  const Matrix f = apply_V(prop, j);
  return f * prop.eigen_at(j).partialPivLu().inverse();
}

Matrix s_eigen(const EvolutionRecord& prop, int j) {
  const Matrix c = surface_layer(prop.problem(), j, prop, prop);
  const Matrix u_inv = prop.eigen_at(j).partialPivLu().inverse();
  return u_inv.adjoint() * c * u_inv;
}

Operator as_operator(const NonlocalProblem& p, const Matrix& eigen_matrix) {
  Operator op(p.from_eigen(eigen_matrix), false);
  return Operator(op.matrix(), op.hermiticity_defect() <= 1e-10);
}

}  // namespace

Operator compute_W(double t, const EvolutionRecord& propagator) {
  const int j = require_node(propagator, t, 0);
  if (propagator.problem().channels().empty()) return Operator::zero(propagator.problem().dim());
  return Operator(propagator.problem().from_eigen(w_eigen(propagator, j)), false);
}

Operator compute_S(double t, const EvolutionRecord& propagator) {
  const int j = require_node(propagator, t, 0);
  if (propagator.problem().channels().empty()) return Operator::zero(propagator.problem().dim());
  return as_operator(propagator.problem(), s_eigen(propagator, j));
}

cplx conserved_inner_operator(const StateVector& psi, const StateVector& phi, const Operator& s_t) {
  if (psi.dim() != s_t.dim() || phi.dim() != s_t.dim()) throw Error(ErrorKind::DimensionMismatch, "conserved_inner");
  StateVector corrected = phi;
  corrected.values = phi.values + s_t.matrix() * phi.values;
  return l2_inner(psi, corrected);
}

cplx conserved_inner_surface(const EvolutionRecord& psi, const EvolutionRecord& phi, double t) {
  const int j = require_node(psi, t, 0);
  const auto& p = psi.problem();
  const cplx local = psi.eigen_at(j).col(0).dot(phi.eigen_at(j).col(0));
  if (p.channels().empty()) return psi.spacing() * local;
  const Matrix layer = surface_layer(p, j, psi, phi);
  return psi.spacing() * (local + layer(0, 0));
}

StateVector transform_state(const StateVector& psi, const Operator& s_t, double positivity_floor) {
  const int dim = s_t.dim();
  if (psi.dim() != dim) throw Error(ErrorKind::DimensionMismatch, "transform_state");
  const Operator root = matrix_function(Operator(hermitize(Matrix::Identity(dim, dim) + s_t.matrix()), true),
                                        MatrixFunction::sqrt(), positivity_floor);
  return {root.matrix() * psi.values, psi.spacing, Picture::Transformed};
}

Operator s_derivative_identity(const Operator& h0, const Operator& w, const Operator& s) {
  const int dim = h0.dim();
  const Matrix x = Matrix::Identity(dim, dim) + s.matrix();
  const Matrix h = h0.matrix() + w.matrix();
  const Matrix hd = h0.matrix() + w.matrix().adjoint();
  return Operator(kI * (x * h) - kI * (hd * x), false);
}

namespace {

struct RootPair {
  Matrix root;
  Matrix inv_root;
  HermitianEigen eig;
};

RootPair roots_of(const Matrix& s, double floor) {
  const int dim = static_cast<int>(s.rows());
  const auto eig = HermitianEigen::of(hermitize(Matrix::Identity(dim, dim) + s));
  if (eig.values(0) <= floor)
    throw Error(ErrorKind::NotPositive, "1 + S_t has eigenvalue " + std::to_string(eig.values(0)));
  const RealVector r = eig.values.array().sqrt();
  return {eig.apply(r), eig.apply(RealVector(r.cwiseInverse())), eig};
}

}  // namespace

Operator compute_Wtilde(double t, const EvolutionRecord& propagator, WtildeMode mode, DerivativeRule rule,
                        double positivity_floor) {
  const auto& p = propagator.problem();
  const int dim = p.dim();
  const int margin = (mode == WtildeMode::Exact && rule == DerivativeRule::CentralDifference) ? 1 : 0;
  const int j = require_node(propagator, t, margin);
  if (p.channels().empty()) return Operator::zero(dim);

  const Matrix w = w_eigen(propagator, j);
  const Matrix s = s_eigen(propagator, j);
  if (mode == WtildeMode::Expansion) {
    const Matrix anti = w - w.adjoint();
    const Matrix out = 0.5 * (w + w.adjoint()) - 0.125 * (anti * s - s * anti);
    return as_operator(p, out);
  }

  const Matrix h0 = p.h0_eigen().values.cast<cplx>().asDiagonal();
  const RootPair r = roots_of(s, positivity_floor);
  Matrix d_inv_root;
  if (rule == DerivativeRule::CentralDifference) {
    const RootPair plus = roots_of(s_eigen(propagator, j + 1), positivity_floor);
    const RootPair minus = roots_of(s_eigen(propagator, j - 1), positivity_floor);
    d_inv_root = (plus.inv_root - minus.inv_root) / (2.0 * p.grid().dt);
  } else {
    const Matrix x = Matrix::Identity(dim, dim) + s;
    const Matrix s_dot = kI * (x * (h0 + w)) - kI * ((h0 + w.adjoint()) * x);
    const Matrix g = r.eig.vectors.adjoint() * s_dot * r.eig.vectors;
    Matrix dk(dim, dim);
    const auto& xv = r.eig.values;
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < dim; ++b) {
        const double diff = xv(a) - xv(b);
        double divided;
        if (std::abs(diff) < 1e-9 * std::max(1.0, std::abs(xv(a))))
          divided = -0.5 * std::pow(xv(a), -1.5);
        else
          divided = (1.0 / std::sqrt(xv(a)) - 1.0 / std::sqrt(xv(b))) / diff;
        dk(a, b) = g(a, b) * divided;
      }
    d_inv_root = r.eig.vectors * dk * r.eig.vectors.adjoint();
  }
  const Matrix out = r.root * (h0 + w) * r.inv_root - kI * (r.root * d_inv_root) - h0;
  return as_operator(p, out);
}

StateVector step_transformed(const StateVector& psi_tilde, double dt, const Operator& h0, const Matrix& wtilde_mid) {
  const Matrix h = h0.matrix() + wtilde_mid;
  Operator gen(h, false);
  Matrix prop;
  if (gen.hermiticity_defect() <= 1e-12)
    prop = matrix_function(Operator(hermitize(h), true), MatrixFunction::exp_scaled(-dt)).matrix();
  else
    prop = matrix_function(gen, MatrixFunction::exp_scaled(-dt)).matrix();
  return {prop * psi_tilde.values, psi_tilde.spacing, Picture::Transformed};
}

}  // namespace cfs
