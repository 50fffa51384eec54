#include "cfs/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace cfs {

ProfileShape parse_profile_shape(const std::string& name) {
  if (name == "raised_cosine") return ProfileShape::RaisedCosine;
  if (name == "gaussian_truncated") return ProfileShape::GaussianTruncated;
  throw Error(ErrorKind::ConfigError, "unknown profile shape '" + name + "'");
}

std::string to_string(ProfileShape shape) {
  return shape == ProfileShape::RaisedCosine ? "raised_cosine" : "gaussian_truncated";
}

double KernelProfile::operator()(double zeta) const {
  const double z = std::abs(zeta);
  if (z > ell_min) return 0.0;
  if (shape == ProfileShape::RaisedCosine) {
    const double c = std::cos(std::numbers::pi * z / (2.0 * ell_min));
    return c * c / ell_min;
  }
  const double s = ell_min / 3.0;
  const double norm = s * std::sqrt(2.0 * std::numbers::pi) * std::erf(ell_min / (s * std::numbers::sqrt2));
  return std::exp(-z * z / (2.0 * s * s)) / norm;
}

std::vector<double> KernelProfile::samples(double step) const {
  const int k = static_cast<int>(std::floor(ell_min / step + 1e-9));
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(2 * k + 1));
  for (int i = -k; i <= k; ++i) out.push_back((*this)(i * step));
  return out;
}

namespace {

Matrix normalized(const Matrix& a, const std::string& label) {
  const Matrix h = hermitize(a);
  Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
  const double norm = es.eigenvalues().cwiseAbs().maxCoeff();
  if (!(norm > 0.0)) throw Error(ErrorKind::InvalidArgument, "channel '" + label + "' has a zero operator");
  return hermitize(h / norm);
}

Matrix spin_identity(const Eigen::MatrixXcd& site_op) {
  const Eigen::Index n = site_op.rows();
  Matrix out = Matrix::Zero(2 * n, 2 * n);
  for (Eigen::Index x = 0; x < n; ++x)
    for (Eigen::Index y = 0; y < n; ++y) {
      out(2 * x, 2 * y) = site_op(x, y);
      out(2 * x + 1, 2 * y + 1) = site_op(x, y);
    }
  return out;
}

}  // namespace

InteractionChannel make_channel(const ChannelSpec& spec, const LatticeConfig& lattice) {
  lattice.validate();
  if (!(spec.profile.ell_min > 0.0)) throw Error(ErrorKind::InvalidArgument, "ell_min must be positive");
  const int n = lattice.sites;
  Eigen::MatrixXcd site_op = Eigen::MatrixXcd::Zero(n, n);
  switch (spec.kind) {
    case ChannelSpec::Kind::SiteProjector:
      if (spec.site < 0 || spec.site >= n) throw Error(ErrorKind::InvalidArgument, "site index out of range");
      site_op(spec.site, spec.site) = 1.0;
      break;
    case ChannelSpec::Kind::PositionGaussian: {
      if (!(spec.width > 0.0)) throw Error(ErrorKind::InvalidArgument, "gaussian width must be positive");
      const double length = n * lattice.spacing;
      for (int x = 0; x < n; ++x) {
        double d = std::fmod(x * lattice.spacing - spec.center, length);
        if (d < -0.5 * length) d += length;
        if (d >= 0.5 * length) d -= length;
        site_op(x, x) = std::exp(-d * d / (2.0 * spec.width * spec.width));
      }
      break;
    }
    case ChannelSpec::Kind::MomentumFunction: {
      if (static_cast<int>(spec.table.size()) != n)
        throw Error(ErrorKind::InvalidArgument, "momentum table needs one value per site");
      const auto k = lattice_momenta(lattice);
      for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y) {
          cplx v{0.0, 0.0};
          for (int m = 0; m < n; ++m)
            v += spec.table[static_cast<std::size_t>(m)] * std::polar(1.0 / n, k[static_cast<std::size_t>(m)] * (x - y) * lattice.spacing);
          site_op(x, y) = v;
        }
      break;
    }
  }
  return {spec.label, normalized(spin_identity(site_op), spec.label), spec.profile, spec.amplitude};
}

std::vector<InteractionChannel> diagonalize_covariance(const Covariance& cov,
                                                       const std::vector<InteractionChannel>& channels,
                                                       double rank_tol) {
  const auto n = static_cast<Eigen::Index>(channels.size());
  if (cov.matrix.rows() != n || cov.matrix.cols() != n)
    throw Error(ErrorKind::DimensionMismatch, "covariance size does not match channel count");
  if ((cov.matrix - cov.matrix.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, cov.matrix.cwiseAbs().maxCoeff()))
    throw Error(ErrorKind::NotPSD, "covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov.matrix);
  const double scale = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  if (es.eigenvalues()(0) < -1e-10 * scale)
    throw Error(ErrorKind::NotPSD, "covariance eigenvalue " + std::to_string(es.eigenvalues()(0)));
  const double mu_max = es.eigenvalues().maxCoeff();

  std::vector<InteractionChannel> out;
  const Eigen::MatrixXd off = cov.matrix - Eigen::MatrixXd(cov.matrix.diagonal().asDiagonal());
  if (off.cwiseAbs().maxCoeff() == 0.0) {
    for (Eigen::Index a = 0; a < n; ++a) {
      const double mu = cov.matrix(a, a);
      if (mu <= rank_tol * mu_max) continue;
      InteractionChannel c = channels[static_cast<std::size_t>(a)];
      if (mu != 1.0) c.amplitude *= std::sqrt(mu);
      out.push_back(std::move(c));
    }
    return out;
  }

  for (Eigen::Index a = 1; a < n; ++a) {
    const auto& p0 = channels.front().profile;
    const auto& pa = channels[static_cast<std::size_t>(a)].profile;
    if (p0.ell_min != pa.ell_min || p0.shape != pa.shape)
      throw Error(ErrorKind::InvalidArgument, "correlated channels must share one temporal profile");
  }
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    const double mu = es.eigenvalues()(k);
    if (mu <= rank_tol * mu_max) continue;
    Matrix b = Matrix::Zero(channels.front().spatial_op.rows(), channels.front().spatial_op.cols());
    for (Eigen::Index a = 0; a < n; ++a) {
      const auto& c = channels[static_cast<std::size_t>(a)];
      b += (std::sqrt(mu) * es.eigenvectors()(a, k) * c.amplitude) * c.spatial_op;
    }
    b = hermitize(b);
    Eigen::SelfAdjointEigenSolver<Matrix> eb(b, Eigen::EigenvaluesOnly);
    const double norm = eb.eigenvalues().cwiseAbs().maxCoeff();
    if (!(norm > 0.0)) continue;
    out.push_back({"mode" + std::to_string(n - 1 - k), hermitize(b / norm), channels.front().profile, norm});
  }
  return out;
}

double NoiseWindow::operator()(double t) const {
  switch (kind) {
    case Kind::Always: return 1.0;
    case Kind::Zero: return 0.0;
    case Kind::Strip: {
      if (t <= t_on || t >= t_off) return 0.0;
      const double ramp_in = t - t_on;
      const double ramp_out = t_off - t;
      const double r = std::min(ramp_in, ramp_out);
      if (ramp <= 0.0 || r >= ramp) return 1.0;
      const double s = std::sin(0.5 * std::numbers::pi * r / ramp);
      return s * s;
    }
  }
  return 0.0;
}

bool NoiseWindow::off_outside(double a, double b) const {
  switch (kind) {
    case Kind::Always: return false;
    case Kind::Zero: return true;
    case Kind::Strip: return t_on >= a && t_off <= b;
  }
  return false;
}

NoiseRealization::NoiseRealization(std::uint64_t seed, double origin, double spacing, std::vector<RealVector> samples,
                                   NoiseWindow window)
    : seed_(seed), origin_(origin), spacing_(spacing), samples_(std::move(samples)), window_(window) {}

double NoiseRealization::value(int channel, double t) const {
  const double pos = (t - origin_) / spacing_;
  const int last = nodes() - 1;
  if (channel < 0 || channel >= channels()) throw Error(ErrorKind::OutOfGrid, "noise channel out of range");
  if (pos < -1e-9 || pos > last + 1e-9)
    throw Error(ErrorKind::OutOfGrid, "noise requested at t = " + std::to_string(t) + " outside the sampled window");
  const RealVector& s = samples_[static_cast<std::size_t>(channel)];
  const double r = std::round(pos);
  if (std::abs(pos - r) < 1e-9) return s(static_cast<Eigen::Index>(r));
  const auto k = static_cast<Eigen::Index>(std::floor(pos));
  const double frac = pos - static_cast<double>(k);
  return (1.0 - frac) * s(k) + frac * s(k + 1);
}

double max_ell(const std::vector<InteractionChannel>& channels) {
  double ell = 0.0;
  for (const auto& c : channels) ell = std::max(ell, c.profile.ell_min);
  return ell;
}

namespace {

struct NoiseLayout {
  double origin;
  double spacing;
  int count;
};

NoiseLayout noise_layout(const TimeGrid& grid, double ell) {
  const double h = 0.5 * grid.dt;
  const int pad = static_cast<int>(std::ceil(2.0 * ell / h - 1e-9));
  return {grid.t0 - pad * h, h, 2 * grid.steps() + 2 * pad + 1};
}

}  // namespace

NoiseRealization NoiseRealization::zeros(int channels, const TimeGrid& grid, double ell_max) {
  const auto layout = noise_layout(grid, ell_max);
  std::vector<RealVector> s(static_cast<std::size_t>(channels), RealVector::Zero(layout.count));
  return {0, layout.origin, layout.spacing, std::move(s), NoiseWindow::zero()};
}

NoiseRealization sample_noise(const std::vector<InteractionChannel>& channels, const TimeGrid& grid,
                              std::uint64_t seed, const NoiseWindow& window, int divisor) {
  double ell_min = channels.empty() ? 0.0 : channels.front().profile.ell_min;
  for (const auto& c : channels) ell_min = std::min(ell_min, c.profile.ell_min);
  const double ell = max_ell(channels);
  if (!channels.empty()) {
    if (grid.dt > ell_min / divisor * (1.0 + 1e-12))
      throw Error(ErrorKind::GridTooCoarse, "dt = " + std::to_string(grid.dt) + " exceeds ell_min/" + std::to_string(divisor));
  }
  const auto layout = noise_layout(grid, ell);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale = 1.0 / std::sqrt(layout.spacing);
  std::vector<RealVector> samples;
  samples.reserve(channels.size());
  for (std::size_t a = 0; a < channels.size(); ++a) {
    RealVector s(layout.count);
    for (int k = 0; k < layout.count; ++k) {
      const double xi = normal(rng);
      s(k) = window(layout.origin + k * layout.spacing) * xi * scale;
    }
    samples.push_back(std::move(s));
  }
  return {seed, layout.origin, layout.spacing, std::move(samples), window};
}

Operator build_V(double t, double t_prime, const std::vector<InteractionChannel>& channels,
                 const NoiseRealization& noise) {
  if (channels.empty()) throw Error(ErrorKind::InvalidArgument, "build_V needs at least one channel");
  const auto dim = channels.front().spatial_op.rows();
  Matrix v = Matrix::Zero(dim, dim);
  const double mid = 0.5 * (t + t_prime);
  for (std::size_t a = 0; a < channels.size(); ++a) {
    const auto& c = channels[a];
    const double l = c.profile(t - t_prime);
    if (l == 0.0) continue;
    const double w = noise.value(static_cast<int>(a), mid);
    if (w == 0.0) continue;
    v += (c.amplitude * w * l) * c.spatial_op;
  }
  return Operator(std::move(v), t == t_prime);
}

ChannelOperatorSet::ChannelOperatorSet(std::vector<InteractionChannel> channels, const Operator& h0, double step,
                                       bool symmetrize)
    : channels_(std::move(channels)), h0_eig_(HermitianEigen::of(h0.matrix())), step_(step),
      symmetrize_(symmetrize), dim_(h0.dim()) {
  if (!(step > 0.0)) throw Error(ErrorKind::InvalidArgument, "zeta step must be positive");
  zero_ = Matrix::Zero(dim_, dim_);
  for (int a = 0; a < static_cast<int>(channels_.size()); ++a) {
    const int k = static_cast<int>(std::floor(ell(a) / step_ + 1e-9));
    half_.push_back(k);
    std::vector<Matrix> col;
    col.reserve(static_cast<std::size_t>(2 * k + 1));
    for (int i = -k; i <= k; ++i) col.push_back(evaluate(a, i * step_, symmetrize_));
    for (int i = 1; i <= k; ++i) {
      const Matrix plus = evaluate(a, i * step_, false);
      const Matrix minus = evaluate(a, -i * step_, false);
      raw_asymmetry_ = std::max(raw_asymmetry_, max_abs(plus - minus));
    }
    table_.push_back(std::move(col));
  }
}

Matrix ChannelOperatorSet::evaluate(int channel, double zeta, bool symmetrize) const {
  const auto& c = channels_[static_cast<std::size_t>(channel)];
  const double l = c.profile(zeta);
  if (l == 0.0 || c.amplitude == 0.0) return Matrix::Zero(dim_, dim_);
  const double pref = 0.5 * c.amplitude * l;
  if (symmetrize) {
    const double z = std::abs(zeta);
    RealVector cosines = (h0_eig_.values * z).array().cos();
    const Matrix cz = h0_eig_.apply(cosines);
    return hermitize(pref * (c.spatial_op * cz + cz * c.spatial_op));
  }
  Eigen::VectorXcd phases(dim_);
  for (int i = 0; i < dim_; ++i) phases(i) = std::polar(1.0, zeta * h0_eig_.values(i));
  const Matrix p = h0_eig_.apply(phases);
  return hermitize(pref * (c.spatial_op * p + p.adjoint() * c.spatial_op));
}

const Matrix& ChannelOperatorSet::at_index(int channel, int i) const {
  const int k = half_[static_cast<std::size_t>(channel)];
  if (i < -k || i > k) return zero_;
  return table_[static_cast<std::size_t>(channel)][static_cast<std::size_t>(i + k)];
}

Matrix ChannelOperatorSet::at(int channel, double zeta) const {
  const double r = zeta / step_;
  const double ri = std::round(r);
  if (std::abs(r - ri) < 1e-9) return at_index(channel, static_cast<int>(ri));
  return evaluate(channel, zeta, symmetrize_);
}

ChannelOperatorSet build_channel_operators(const std::vector<InteractionChannel>& channels, const Operator& h0,
                                           double zeta_step, bool symmetrize) {
  return ChannelOperatorSet(channels, h0, zeta_step, symmetrize);
}

Matrix linear_wtilde(double s, const ChannelOperatorSet& ops, const NoiseRealization& noise) {
  Matrix out = Matrix::Zero(ops.dim(), ops.dim());
  const double h = noise.spacing();
  for (int a = 0; a < ops.channels(); ++a) {
    const double half = 0.5 * ops.ell(a);
    const int k_lo = static_cast<int>(std::ceil((s - half - noise.origin()) / h - 1e-9));
    const int k_hi = static_cast<int>(std::floor((s + half - noise.origin()) / h + 1e-9));
    if (k_lo < 0 || k_hi >= noise.nodes()) throw Error(ErrorKind::OutOfGrid, "linear_wtilde outside noise window");
    const RealVector& w = noise.samples(a);
    for (int k = k_lo; k <= k_hi; ++k) {
      if (w(k) == 0.0) continue;
      const double zeta = 2.0 * (s - noise.node_time(k));
      double weight = 2.0 * h * w(k);
      if (std::abs(std::abs(zeta) - ops.ell(a)) < 1e-9 * ops.ell(a)) weight *= 0.5;
      out += weight * ops.at(a, zeta);
    }
  }
  return out;
}

Matrix wtilde_pair(double t, double t_prime, const ChannelOperatorSet& ops, const NoiseRealization& noise) {
  Matrix out = Matrix::Zero(ops.dim(), ops.dim());
  const double mid = 0.5 * (t + t_prime);
  for (int a = 0; a < ops.channels(); ++a) {
    const double w = noise.value(a, mid);
    if (w != 0.0) out += w * ops.at(a, t - t_prime);
  }
  return out;
}

Matrix wtilde_pair_direct(double t, double t_prime, const std::vector<InteractionChannel>& channels,
                          const Operator& h0, const NoiseRealization& noise) {
  const Matrix v_tt = build_V(t, t_prime, channels, noise).matrix();
  const Matrix v_back = build_V(t_prime, t, channels, noise).matrix();
  const Matrix e1 = matrix_function(h0, MatrixFunction::exp_scaled(t - t_prime)).matrix();
  const Matrix e2 = matrix_function(h0, MatrixFunction::exp_scaled(-(t - t_prime))).matrix();
  return 0.5 * (v_tt * e1 + e2 * v_back);
}

}  // namespace cfs
