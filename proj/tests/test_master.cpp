#include <cmath>
#include <random>

#include "doctest.h"

#include "cfs/master.hpp"
#include "helpers.hpp"

using namespace cfs;

namespace {

const LatticeConfig kLat{4, 1.0, 1.0};

std::vector<InteractionChannel> channels(double lambda) {
  return {test::site_channel(kLat, 0, lambda), test::site_channel(kLat, 2, lambda),
          test::momentum_channel(kLat, {1.0, 0.3, -0.5, 0.2}, lambda)};
}

DensityMatrix random_density(std::mt19937_64& rng) {
  Matrix g(8, 8);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) g(i, j) = cplx(n(rng), n(rng));
  Matrix s = g * g.adjoint();
  return {hermitize(s / s.trace().real())};
}

std::vector<Matrix> jumps_of(const std::vector<InteractionChannel>& ch) {
  std::vector<Matrix> out;
  for (const auto& c : ch) out.push_back(c.amplitude * std::sqrt(c.profile.ell_min) * c.spatial_op);
  return out;
}

}  // namespace

TEST_CASE("master-equation increments are traceless and Hermitian") {
  std::mt19937_64 rng(1);
  const Operator h0 = build_dirac_h0(kLat);
  const DensityMatrix sigma = random_density(rng);
  const auto ch = channels(0.1);
  const auto cfs_spec = LindbladSpec::cfs(h0, build_channel_operators(ch, h0, 1.0 / 16));
  const auto gksl_spec = LindbladSpec::standard(h0, jumps_of(ch));
  Matrix non_normal = Matrix::Zero(8, 8);
  non_normal(0, 3) = 0.2;
  non_normal(5, 1) = 0.1 * kI;
  const auto gksl_nn = LindbladSpec::standard(h0, {non_normal});
  for (const auto* spec : {&cfs_spec, &gksl_spec, &gksl_nn}) {
    const Matrix d = lindblad_rhs(sigma.values, *spec, 0.3);
    CHECK(std::abs(d.trace()) < 1e-13);
    CHECK(max_abs(d - d.adjoint()) < 1e-13);
  }
  // The L L^dag ordering only preserves the trace for normal L.
  const auto reversed = LindbladSpec::standard(h0, {non_normal}, GkslOrdering::Reversed);
  CHECK(std::abs(gksl_rhs(sigma.values, reversed).trace()) > 1e-3);
}

TEST_CASE("without channels the equation is von Neumann") {
  std::mt19937_64 rng(2);
  const Operator h0 = build_dirac_h0(kLat);
  const DensityMatrix sigma = random_density(rng);
  const auto spec = LindbladSpec::cfs(h0, build_channel_operators(channels(0.0), h0, 1.0 / 16));
  const Matrix h = h0.matrix();
  CHECK(max_abs(cfs_rhs(sigma.values, spec) + kI * (h * sigma.values - sigma.values * h)) == 0.0);
  const auto log = integrate(sigma, spec, TimeGrid{0.0, 1.0, 0.005});
  const Matrix u = matrix_function(h0, MatrixFunction::exp_scaled(-1.0)).matrix();
  CHECK(max_abs(log.states.back() - u * sigma.values * u.adjoint()) < 1e-9);
}

TEST_CASE("RK4 converges at fourth order") {
  std::mt19937_64 rng(3);
  const Operator h0 = build_dirac_h0(kLat);
  const auto spec = LindbladSpec::standard(h0, jumps_of(channels(0.3)));
  const DensityMatrix sigma = random_density(rng);
  const Matrix ref = integrate(sigma, spec, TimeGrid{0.0, 2.0, 0.0125}).states.back();
  const double e1 = max_abs(integrate(sigma, spec, TimeGrid{0.0, 2.0, 0.2}).states.back() - ref);
  const double e2 = max_abs(integrate(sigma, spec, TimeGrid{0.0, 2.0, 0.1}).states.back() - ref);
  CHECK(e1 / e2 == doctest::Approx(16.0).epsilon(0.2));
}

TEST_CASE("GKSL evolution keeps the state positive and the trace fixed") {
  const Operator h0 = build_dirac_h0(kLat);
  const auto spec = LindbladSpec::standard(h0, jumps_of(channels(0.2)));
  const auto gs = ground_state(h0, GroundStateConvention::GlobalMinimum, kLat.spacing);
  const auto log = integrate(DensityMatrix::pure(gs.state), spec, TimeGrid{0.0, 5.0, 0.02}, 25);
  CHECK(log.min_eigenvalue >= -1e-8);
  CHECK(log.max_trace_drift < 1e-12);
  CHECK(log.states.size() == 11);
  CHECK_THROWS_AS(integrate(DensityMatrix{Matrix::Identity(4, 4)}, spec, TimeGrid{0.0, 1.0, 0.1}), Error);
}

TEST_CASE("A in the commuting case has the closed form -lambda^2 A^2 / 2") {
  // With H0 = 0, M(zeta) = lambda L(zeta) A and the pairing integral of L is
  // int L(z) F(z) dz = 1/2, F the cumulative profile.
  const Operator h0 = Operator::zero(8);
  const double lambda = 0.2;
  const auto ch = std::vector{test::site_channel(kLat, 1, lambda)};
  const Matrix a2 = ch[0].spatial_op * ch[0].spatial_op;
  for (double step : {1.0 / 16, 1.0 / 32, 1.0 / 64}) {
    const Operator a = compute_A(build_channel_operators(ch, h0, step));
    CHECK(max_abs(a.matrix() + 0.5 * lambda * lambda * a2) < 1e-12 * lambda * lambda);
  }
}

TEST_CASE("B is anti-Hermitian for stationary noise") {
  const Operator h0 = build_dirac_h0(kLat);
  const auto ops = build_channel_operators(channels(0.1), h0, 1.0 / 16);
  const Matrix b = compute_B(ops, NoiseWindow::always(), 2.0).matrix();
  CHECK(max_abs(b + b.adjoint()) < 1e-12 * max_abs(b));
  CHECK(max_abs(b) > 0.0);
}

TEST_CASE("heating rate of an eigenstate matches tr(H0 dsigma/dt)") {
  const Operator h0 = build_dirac_h0(kLat);
  const auto jumps = jumps_of(channels(0.1));
  const auto spec = LindbladSpec::standard(h0, jumps);
  const auto eig = HermitianEigen::of(h0.matrix());
  for (int i = 0; i < 8; ++i) {
    const StateVector psi{eig.vectors.col(i), 1.0, Picture::Untransformed};
    const double rate = heating_rate_standard(psi, h0, jumps);
    const double trace = (h0.matrix() * gksl_rhs(DensityMatrix::pure(psi).values, spec)).trace().real();
    CHECK(std::abs(rate - trace) < 1e-13);
  }
  std::mt19937_64 rng(4);
  const StateVector generic{test::random_state(8, 1.0, rng), 1.0, Picture::Untransformed};
  try {
    heating_rate_standard(generic, h0, jumps);
    FAIL("expected NotEigenstate");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotEigenstate);
  }
}

TEST_CASE("zero channel operators give zero heating") {
  const Operator h0 = build_dirac_h0(kLat);
  const auto spec = LindbladSpec::cfs(h0, build_channel_operators(channels(0.0), h0, 1.0 / 16));
  std::mt19937_64 rng(5);
  CHECK(std::abs(heating_rate_cfs(random_density(rng), spec)) < 1e-14);
  const auto gs = ground_state(h0, GroundStateConvention::LowestPositive, 1.0);
  CHECK(heating_rate_standard(gs.state, h0, {}) == 0.0);
}

TEST_CASE("ground-state conventions and positive restriction") {
  const Operator h0 = build_dirac_h0(kLat);
  const auto pos = ground_state(h0, GroundStateConvention::LowestPositive, 0.5);
  const auto glob = ground_state(h0, GroundStateConvention::GlobalMinimum, 0.5);
  CHECK(pos.energy == doctest::Approx(kLat.mass).epsilon(1e-12));
  CHECK(glob.energy < -kLat.mass);
  CHECK(l2_norm(pos.state) == doctest::Approx(1.0).epsilon(1e-14));

  const auto jumps = jumps_of(channels(0.1));
  const auto r = restrict_to_positive(h0, jumps);
  CHECK(r.h0.dim() == 4);
  CHECK(r.h0.matrix().diagonal().real().minCoeff() == doctest::Approx(kLat.mass).epsilon(1e-12));
  CHECK(max_abs(r.basis.adjoint() * h0.matrix() * r.basis - r.h0.matrix()) < 1e-12);
  CHECK(r.jumps.size() == jumps.size());
  CHECK_THROWS_AS(restrict_to_positive(Operator(-Matrix::Identity(4, 4), true), jumps), Error);
}
