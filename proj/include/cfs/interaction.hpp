#pragma once

// Stochastic nonlocal-in-time interaction
//
//   V(t, t') = sum_a lambda_a W_a((t + t')/2) L_a(t - t') A_a
//
// built from Hermitian spatial operators A_a, even compactly supported
// temporal profiles L_a and independent unit white-noise paths W_a.

#include <cstdint>
#include <string>
#include <vector>

#include "cfs/hilbert.hpp"
#include "cfs/time_grid.hpp"

namespace cfs {

enum class ProfileShape { RaisedCosine, GaussianTruncated };

ProfileShape parse_profile_shape(const std::string& name);
std::string to_string(ProfileShape shape);

// Real, even, unit-integral profile supported on [-ell_min, ell_min].
struct KernelProfile {
  double ell_min = 1.0;
  ProfileShape shape = ProfileShape::RaisedCosine;

  double operator()(double zeta) const;
  std::vector<double> samples(double step) const;  // L(i*step), i = -K..K
};

struct InteractionChannel {
  std::string label;
  Matrix spatial_op;  // Hermitian, spectral norm 1
  KernelProfile profile;
  double amplitude = 0.0;
};

// Config-level description of one channel, converted to an InteractionChannel
// against a concrete lattice.
struct ChannelSpec {
  enum class Kind { SiteProjector, PositionGaussian, MomentumFunction };
  Kind kind = Kind::SiteProjector;
  std::string label;
  int site = 0;
  double center = 0.0;  // length units
  double width = 1.0;   // length units
  std::vector<double> table;  // one value per lattice momentum, ascending k
  double amplitude = 0.0;
  KernelProfile profile;
};

InteractionChannel make_channel(const ChannelSpec& spec, const LatticeConfig& lattice);

struct Covariance {
  Eigen::MatrixXd matrix;  // real symmetric PSD over channel labels

  static Covariance identity(int n) { return {Eigen::MatrixXd::Identity(n, n)}; }
};

// Rotate to independent unit-covariance channels; amplitudes absorb
// sqrt(eigenvalue) and channels below rank_tol * max eigenvalue are dropped.
// Diagonal covariances are handled without rotation.
std::vector<InteractionChannel> diagonalize_covariance(const Covariance& cov,
                                                       const std::vector<InteractionChannel>& channels,
                                                       double rank_tol = 1e-12);

// Amplitude envelope multiplying the noise.
struct NoiseWindow {
  enum class Kind { Always, Strip, Zero };
  Kind kind = Kind::Always;
  double t_on = 0.0;
  double t_off = 0.0;
  double ramp = 0.0;

  static NoiseWindow always() { return {}; }
  static NoiseWindow zero() { return {Kind::Zero, 0.0, 0.0, 0.0}; }
  // Off before t_on and after t_off, sin^2 ramps of the given length inside.
  static NoiseWindow strip(double t_on, double t_off, double ramp) { return {Kind::Strip, t_on, t_off, ramp}; }

  double operator()(double t) const;
  // True when the window vanishes on (-inf, a] and [b, inf).
  bool off_outside(double a, double b) const;
};

// White noise sampled on the half-step grid m_k = origin + k h, h = dt/2,
// which contains every midpoint (t_i + t_j)/2 of the time grid. Values
// between nodes are linearly interpolated so that one realization can be
// reused on refined grids.
class NoiseRealization {
 public:
  NoiseRealization() = default;
  NoiseRealization(std::uint64_t seed, double origin, double spacing, std::vector<RealVector> samples,
                   NoiseWindow window);

  std::uint64_t seed() const { return seed_; }
  double origin() const { return origin_; }
  double spacing() const { return spacing_; }
  int nodes() const { return samples_.empty() ? 0 : static_cast<int>(samples_.front().size()); }
  int channels() const { return static_cast<int>(samples_.size()); }
  double node_time(int k) const { return origin_ + k * spacing_; }
  const RealVector& samples(int channel) const { return samples_[static_cast<std::size_t>(channel)]; }
  const NoiseWindow& window() const { return window_; }

  double value(int channel, double t) const;

  static NoiseRealization zeros(int channels, const TimeGrid& grid, double ell_max);

 private:
  std::uint64_t seed_ = 0;
  double origin_ = 0.0;
  double spacing_ = 1.0;
  std::vector<RealVector> samples_;
  NoiseWindow window_;
};

double max_ell(const std::vector<InteractionChannel>& channels);

// Per-node rule W = w(m) xi / sqrt(h), xi ~ N(0,1) i.i.d. across channels and nodes.
// Covers midpoints in [t0 - 2 ell, t1 + 2 ell].
NoiseRealization sample_noise(const std::vector<InteractionChannel>& channels, const TimeGrid& grid,
                              std::uint64_t seed, const NoiseWindow& window, int divisor = 8);

inline std::uint64_t realization_seed(std::uint64_t master, std::uint64_t r) { return master ^ r; }

Operator build_V(double t, double t_prime, const std::vector<InteractionChannel>& channels,
                 const NoiseRealization& noise);

// Deterministic channel operators
//   M_a(zeta) = 1/2 lambda_a L_a(zeta) (A_a e^{i zeta H0} + e^{-i zeta H0} A_a)
// tabulated on zeta_i = i * step, optionally replaced by the even part
// 1/2 (M(zeta) + M(-zeta)) = 1/2 lambda L {A, cos(zeta H0)}.
class ChannelOperatorSet {
 public:
  ChannelOperatorSet() = default;
  ChannelOperatorSet(std::vector<InteractionChannel> channels, const Operator& h0, double step, bool symmetrize);

  int channels() const { return static_cast<int>(channels_.size()); }
  int half_width(int channel) const { return half_[static_cast<std::size_t>(channel)]; }
  double step() const { return step_; }
  bool symmetrized() const { return symmetrize_; }
  int dim() const { return dim_; }
  double ell(int channel) const { return channels_[static_cast<std::size_t>(channel)].profile.ell_min; }
  const std::vector<InteractionChannel>& source_channels() const { return channels_; }

  // Tabulated value at zeta = i * step; zero outside the support.
  const Matrix& at_index(int channel, int i) const;
  // Any zeta; grid lookup when zeta is a grid point, closed form otherwise.
  Matrix at(int channel, double zeta) const;
  // Closed-form evaluation bypassing the table.
  Matrix evaluate(int channel, double zeta, bool symmetrize) const;

  // max_a,zeta ||M_raw(zeta) - M_raw(-zeta)||_max: the evenness defect removed by symmetrization.
  double raw_asymmetry() const { return raw_asymmetry_; }

 private:
  std::vector<InteractionChannel> channels_;
  HermitianEigen h0_eig_;
  double step_ = 0.0;
  bool symmetrize_ = true;
  int dim_ = 0;
  std::vector<int> half_;
  std::vector<std::vector<Matrix>> table_;
  Matrix zero_;
  double raw_asymmetry_ = 0.0;
};

ChannelOperatorSet build_channel_operators(const std::vector<InteractionChannel>& channels, const Operator& h0,
                                           double zeta_step, bool symmetrize = true);

// Linearized transformed interaction
//   W~(s) = sum_a int du M_a(s - u) W_a((s + u)/2) = sum_{a,k} 2 h M_a(2 (s - m_k)) W_a(m_k)
// evaluated on the noise nodes.
Matrix linear_wtilde(double s, const ChannelOperatorSet& ops, const NoiseRealization& noise);

// Single term W~^{t'}(t) = sum_a M_a(t - t') W_a((t + t')/2).
Matrix wtilde_pair(double t, double t_prime, const ChannelOperatorSet& ops, const NoiseRealization& noise);

// Direct evaluation 1/2 (V(t,t') e^{-i(t'-t)H0} + e^{-i(t-t')H0} V(t',t)).
Matrix wtilde_pair_direct(double t, double t_prime, const std::vector<InteractionChannel>& channels,
                          const Operator& h0, const NoiseRealization& noise);

}  // namespace cfs
