#include <cmath>
#include <random>

#include "doctest.h"

#include "cfs/interaction.hpp"
#include "helpers.hpp"

using namespace cfs;

namespace {

double trapezoid_integral(const KernelProfile& p, int nodes) {
  const double h = 2.0 * p.ell_min / nodes;
  double sum = 0.5 * (p(-p.ell_min) + p(p.ell_min));
  for (int i = 1; i < nodes; ++i) sum += p(-p.ell_min + i * h);
  return sum * h;
}

std::vector<InteractionChannel> two_channels(const LatticeConfig& lat) {
  return {test::site_channel(lat, 0, 0.3), test::momentum_channel(lat, {1.0, 0.3, -0.5, 0.2}, 0.2)};
}

}  // namespace

TEST_CASE("kernel profiles are even, unit-integral and compactly supported") {
  for (auto shape : {ProfileShape::RaisedCosine, ProfileShape::GaussianTruncated})
    for (double ell : {0.5, 1.0, 2.5}) {
      const KernelProfile p{ell, shape};
      CHECK(trapezoid_integral(p, 20000) == doctest::Approx(1.0).epsilon(1e-7));
      for (double z : {0.0, 0.1, 0.37, 0.9}) CHECK(p(z * ell) == p(-z * ell));
      CHECK(p(1.0001 * ell) == 0.0);
      CHECK(p(-3.0 * ell) == 0.0);
      CHECK(p(0.0) > 0.0);
    }
  CHECK_THROWS_AS(parse_profile_shape("boxcar"), Error);
}

TEST_CASE("channel operators are Hermitian with unit spectral norm") {
  const LatticeConfig lat{4, 1.0, 1.0};
  for (const auto& c : two_channels(lat)) {
    CHECK(max_abs(c.spatial_op - c.spatial_op.adjoint()) == 0.0);
    CHECK(spectral_norm(c.spatial_op) == doctest::Approx(1.0).epsilon(1e-12));
  }
  ChannelSpec bad;
  bad.site = 9;
  CHECK_THROWS_AS(make_channel(bad, lat), Error);
  bad.site = 0;
  bad.kind = ChannelSpec::Kind::MomentumFunction;
  bad.table = {1.0, 2.0};
  CHECK_THROWS_AS(make_channel(bad, lat), Error);
}

TEST_CASE("V(t,t')^dagger equals V(t',t) bit for bit and vanishes outside the kernel support") {
  const LatticeConfig lat{4, 1.0, 1.0};
  const auto ch = two_channels(lat);
  const TimeGrid grid{0.0, 4.0, 0.125};
  const auto noise = sample_noise(ch, grid, 7, NoiseWindow::always());
  for (int i = 0; i <= grid.steps(); i += 3)
    for (int j = std::max(0, i - 8); j <= std::min(grid.steps(), i + 8); ++j) {
      const Matrix v = build_V(grid.t(i), grid.t(j), ch, noise).matrix();
      const Matrix w = build_V(grid.t(j), grid.t(i), ch, noise).matrix();
      CHECK(max_abs(v.adjoint() - w) == 0.0);
    }
  CHECK(max_abs(build_V(2.0, 0.875, ch, noise).matrix()) == 0.0);
  CHECK(max_abs(build_V(0.0, 3.0, ch, noise).matrix()) == 0.0);
  CHECK(max_abs(build_V(2.0, 1.5, ch, noise).matrix()) > 0.0);
}

TEST_CASE("zero noise gives a zero interaction") {
  const LatticeConfig lat{4, 1.0, 1.0};
  const auto ch = two_channels(lat);
  const TimeGrid grid{0.0, 2.0, 0.125};
  const auto zero = NoiseRealization::zeros(2, grid, 1.0);
  CHECK(max_abs(build_V(1.0, 0.5, ch, zero).matrix()) == 0.0);
  const auto ops = build_channel_operators(ch, build_dirac_h0(lat), grid.dt / 2);
  CHECK(max_abs(linear_wtilde(1.0, ops, zero)) == 0.0);
  const auto windowed = sample_noise(ch, grid, 3, NoiseWindow::zero());
  for (int a = 0; a < 2; ++a) CHECK(windowed.samples(a).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("noise nodes have mean 0 and variance 1/h") {
  const LatticeConfig lat{4, 1.0, 1.0};
  const auto ch = two_channels(lat);
  const TimeGrid grid{0.0, 8.0, 0.125};
  double sum = 0.0, sum2 = 0.0;
  long n = 0;
  double h = 0.0;
  for (std::uint64_t r = 0; r < 40; ++r) {
    const auto noise = sample_noise(ch, grid, realization_seed(99, r), NoiseWindow::always());
    h = noise.spacing();
    for (int a = 0; a < noise.channels(); ++a)
      for (int k = 0; k < noise.nodes(); ++k) {
        const double x = noise.samples(a)(k) * std::sqrt(h);
        sum += x;
        sum2 += x * x;
        ++n;
      }
  }
  CHECK(h == doctest::Approx(grid.dt / 2));
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("noise sampling is reproducible and checks the grid") {
  const LatticeConfig lat{4, 1.0, 1.0};
  const auto ch = two_channels(lat);
  const TimeGrid grid{0.0, 2.0, 0.125};
  const auto a = sample_noise(ch, grid, 5, NoiseWindow::always());
  const auto b = sample_noise(ch, grid, 5, NoiseWindow::always());
  const auto c = sample_noise(ch, grid, 6, NoiseWindow::always());
  CHECK((a.samples(1) - b.samples(1)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.samples(1) - c.samples(1)).cwiseAbs().maxCoeff() > 0.0);
  CHECK(a.value(0, a.node_time(3)) == a.samples(0)(3));
  const double mid = 0.5 * (a.node_time(3) + a.node_time(4));
  CHECK(a.value(0, mid) == doctest::Approx(0.5 * (a.samples(0)(3) + a.samples(0)(4))));
  CHECK_THROWS_AS(a.value(0, 50.0), Error);
  CHECK_THROWS_AS(sample_noise(ch, TimeGrid{0.0, 2.0, 0.25}, 5, NoiseWindow::always()), Error);
}

TEST_CASE("strip window") {
  const auto w = NoiseWindow::strip(2.0, 8.0, 2.0);
  CHECK(w(1.0) == 0.0);
  CHECK(w(2.0) == 0.0);
  CHECK(w(3.0) == doctest::Approx(0.5));
  CHECK(w(5.0) == 1.0);
  CHECK(w(7.0) == doctest::Approx(0.5));
  CHECK(w(9.0) == 0.0);
  CHECK(w.off_outside(0.0, 10.0));
  CHECK_FALSE(w.off_outside(3.0, 10.0));
  CHECK_FALSE(NoiseWindow::always().off_outside(0.0, 10.0));
}

TEST_CASE("covariance diagonalization") {
  const LatticeConfig lat{4, 1.0, 1.0};
  const auto ch = two_channels(lat);

  SUBCASE("identity keeps the channels") {
    const auto out = diagonalize_covariance(Covariance::identity(2), ch);
    REQUIRE(out.size() == 2);
    for (std::size_t a = 0; a < 2; ++a) {
      CHECK(out[a].amplitude == ch[a].amplitude);
      CHECK(max_abs(out[a].spatial_op - ch[a].spatial_op) == 0.0);
    }
  }
  SUBCASE("rank one gives a single combined channel") {
    Eigen::MatrixXd m(2, 2);
    m << 1.0, 1.0, 1.0, 1.0;
    const auto out = diagonalize_covariance({m}, ch);
    REQUIRE(out.size() == 1);
    const Matrix expected = ch[0].amplitude * ch[0].spatial_op + ch[1].amplitude * ch[1].spatial_op;
    const Matrix got = out[0].amplitude * out[0].spatial_op;
    // The eigenvector sign is arbitrary.
    CHECK(std::min(max_abs(got - expected), max_abs(got + expected)) < 1e-12);
  }
  SUBCASE("second moments are preserved") {
    Eigen::MatrixXd m(2, 2);
    m << 1.0, 0.4, 0.4, 0.7;
    const auto out = diagonalize_covariance({m}, ch);
    std::mt19937_64 rng(3);
    const Matrix x = test::random_hermitian(8, rng);
    const Matrix y = test::random_hermitian(8, rng);
    cplx lhs{0.0, 0.0}, rhs{0.0, 0.0};
    for (const auto& c : out)
      lhs += c.amplitude * c.amplitude * (x * c.spatial_op).trace() * (y * c.spatial_op).trace();
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        rhs += m(a, b) * ch[static_cast<std::size_t>(a)].amplitude * ch[static_cast<std::size_t>(b)].amplitude *
               (x * ch[static_cast<std::size_t>(a)].spatial_op).trace() *
               (y * ch[static_cast<std::size_t>(b)].spatial_op).trace();
    CHECK(std::abs(lhs - rhs) < 1e-12 * std::max(1.0, std::abs(rhs)));
  }
  SUBCASE("invalid covariances are rejected") {
    Eigen::MatrixXd neg(2, 2);
    neg << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS(diagonalize_covariance({neg}, ch), Error);
    Eigen::MatrixXd asym(2, 2);
    asym << 1.0, 0.1, 0.0, 1.0;
    CHECK_THROWS_AS(diagonalize_covariance({asym}, ch), Error);
    CHECK_THROWS_AS(diagonalize_covariance(Covariance::identity(3), ch), Error);
  }
}

TEST_CASE("channel operators M(zeta)") {
  const LatticeConfig lat{4, 1.0, 1.0};
  const auto ch = two_channels(lat);
  const Operator h0 = build_dirac_h0(lat);
  const double step = 1.0 / 16;
  const auto raw = build_channel_operators(ch, h0, step, false);
  const auto sym = build_channel_operators(ch, h0, step, true);

  for (int a = 0; a < 2; ++a) {
    const auto& c = ch[static_cast<std::size_t>(a)];
    const Matrix m0 = c.amplitude * c.profile(0.0) * c.spatial_op;
    CHECK(max_abs(raw.at_index(a, 0) - m0) < 1e-14);
    for (int i = -raw.half_width(a); i <= raw.half_width(a); ++i) {
      CHECK(max_abs(raw.at_index(a, i) - raw.at_index(a, i).adjoint()) == 0.0);
      CHECK(max_abs(sym.at_index(a, i) - sym.at_index(a, -i)) < 1e-14);
      const Matrix even = 0.5 * (raw.at_index(a, i) + raw.at_index(a, -i));
      CHECK(max_abs(sym.at_index(a, i) - even) < 1e-14);
    }
    CHECK(max_abs(raw.at(a, 1.5)) == 0.0);
  }
  // Site projectors do not commute with H0, so the raw operator is not even.
  CHECK(raw.raw_asymmetry() > 1e-3);

  // A momentum-diagonal, spin-identity channel commutes with H0: M is even already.
  const auto commuting =
      build_channel_operators({test::momentum_channel(lat, {1.0, 0.3, -0.5, 0.2}, 0.2)}, h0, step, false);
  CHECK(commuting.raw_asymmetry() < 1e-14);
}

TEST_CASE("wtilde_pair matches the direct form") {
  const LatticeConfig lat{4, 1.0, 1.0};
  const auto ch = two_channels(lat);
  const Operator h0 = build_dirac_h0(lat);
  const TimeGrid grid{0.0, 3.0, 0.125};
  const auto noise = sample_noise(ch, grid, 21, NoiseWindow::always());
  const auto ops = build_channel_operators(ch, h0, grid.dt, false);
  double worst = 0.0;
  for (int i = 4; i <= 20; i += 4)
    for (int j = i - 8; j <= i + 8; ++j)
      worst = std::max(worst, max_abs(wtilde_pair(grid.t(i), grid.t(j), ops, noise) -
                                      wtilde_pair_direct(grid.t(i), grid.t(j), ch, h0, noise)));
  CHECK(worst < 1e-10);
  CHECK(max_abs(wtilde_pair(1.0, 0.3, ops, noise) - wtilde_pair_direct(1.0, 0.3, ch, h0, noise)) < 1e-10);
}
