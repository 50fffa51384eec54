#include <cmath>
#include <memory>
#include <random>

#include "doctest.h"

#include "cfs/evolution.hpp"
#include "helpers.hpp"

using namespace cfs;

namespace {

struct Rig {
  LatticeConfig lat;
  Operator h0;
  std::vector<InteractionChannel> channels;
  TimeGrid grid;
  NoiseRealization noise;
  std::shared_ptr<const NonlocalProblem> problem;
};

Rig make_rig(int sites, double lambda, std::uint64_t seed, TimeGrid grid = {0.0, 3.0, 0.0625},
             NoiseWindow window = NoiseWindow::always(), int n_channels = 2) {
  Rig r;
  r.lat = {sites, 1.0, 1.0};
  r.h0 = build_dirac_h0(r.lat);
  for (int c = 0; c < n_channels; ++c) r.channels.push_back(test::site_channel(r.lat, c % sites, lambda));
  r.grid = grid;
  r.noise = sample_noise(r.channels, grid, seed, window);
  r.problem = std::make_shared<NonlocalProblem>(r.h0, r.channels, r.noise, grid);
  return r;
}

StateVector random_psi(int dim, double a, std::mt19937_64& rng) {
  return {test::random_state(dim, a, rng), a, Picture::Untransformed};
}

}  // namespace

TEST_CASE("zero noise reproduces free evolution") {
  Rig r = make_rig(4, 0.1, 1);
  r.problem = std::make_shared<NonlocalProblem>(r.h0, r.channels, NoiseRealization::zeros(2, r.grid, 1.0), r.grid);
  std::mt19937_64 rng(4);
  const StateVector psi0 = random_psi(8, 1.0, rng);
  const auto rec = solve_nonlocal(psi0, r.problem);
  for (int j = rec.first(); j <= rec.last(); j += 5) {
    const Matrix u = matrix_function(r.h0, MatrixFunction::exp_scaled(-r.grid.t(j))).matrix();
    CHECK((rec.state(j).values - u * psi0.values).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(max_abs(compute_S(1.5, solve_propagator(r.problem)).matrix()) == 0.0);
  CHECK(max_abs(compute_Wtilde(1.5, solve_propagator(r.problem), WtildeMode::Exact).matrix()) == 0.0);
}

TEST_CASE("Picard iteration converges quickly at weak coupling, D = 16") {
  const Rig r = make_rig(8, 0.01, 2);
  CHECK(r.h0.dim() == 16);
  CHECK(r.problem->coupling() == doctest::Approx(0.01));
  std::mt19937_64 rng(5);
  const auto rec = solve_nonlocal(random_psi(16, 1.0, rng), r.problem);
  CHECK(rec.iterations() <= 6);
  CHECK(rec.residuals().back() <= 1e-10);
}

TEST_CASE("solver error handling") {
  const Rig r = make_rig(4, 0.1, 3);
  std::mt19937_64 rng(6);
  CHECK_THROWS_AS(solve_nonlocal(random_psi(6, 1.0, rng), r.problem), Error);
  CHECK_THROWS_AS(r.problem->index_of(0.03), Error);
  CHECK_THROWS_AS(compute_S(r.grid.t1 + 1.0, solve_propagator(r.problem)), Error);

  SolverOptions strict;
  strict.max_iter = 1;
  auto one_step = std::make_shared<NonlocalProblem>(r.h0, r.channels, r.noise, r.grid, strict);
  try {
    solve_nonlocal(random_psi(8, 1.0, rng), one_step);
    FAIL("expected NoConvergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoConvergence);
  }

  std::vector<InteractionChannel> strong = r.channels;
  for (auto& c : strong) c.amplitude = 0.6;
  CHECK_THROWS_AS(NonlocalProblem(r.h0, strong, r.noise, r.grid), Error);
  for (auto& c : strong) c.amplitude = 0.3;
  CHECK_FALSE(NonlocalProblem(r.h0, strong, r.noise, r.grid).warnings().empty());
  CHECK_THROWS_AS(NonlocalProblem(r.h0, r.channels, NoiseRealization::zeros(1, r.grid, 1.0), r.grid), Error);
}

TEST_CASE("S_t is Hermitian") {
  const Rig r = make_rig(4, 0.1, 7);
  const auto prop = solve_propagator(r.problem);
  for (double t : {0.0, 1.0, 2.25, 3.0}) {
    const Operator s = compute_S(t, prop);
    CHECK(s.hermiticity_defect() < 1e-10);
    CHECK(max_abs(s.matrix()) > 0.0);
  }
}

TEST_CASE("discrete conservation identity Q_j - Q_0 = dt^2/4 a (|F_0|^2 - |F_j|^2)") {
  const Rig r = make_rig(4, 0.1, 8);
  std::mt19937_64 rng(9);
  const double a = r.lat.spacing;
  const auto rec = solve_nonlocal(random_psi(8, a, rng), r.problem);
  const double q0 = std::real(conserved_inner_surface(rec, rec, r.grid.t0));
  const double f0 = a * apply_V(rec, 0).squaredNorm();
  double worst = 0.0, scale = 0.0;
  for (int j = 0; j <= r.grid.steps(); ++j) {
    const double q = std::real(conserved_inner_surface(rec, rec, r.grid.t(j)));
    const double predicted = 0.25 * r.grid.dt * r.grid.dt * (f0 - a * apply_V(rec, j).squaredNorm());
    worst = std::max(worst, std::abs(q - q0 - predicted));
    scale = std::max(scale, std::abs(predicted));
  }
  CHECK(scale > 1e-8);
  CHECK(worst < 1e-12);
}

TEST_CASE("operator and surface-layer forms of the conserved product agree") {
  const Rig r = make_rig(4, 0.1, 10);
  const double a = r.lat.spacing;
  const auto prop = solve_propagator(r.problem, a);
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int p = 0; p < 5; ++p) {
    const auto rp = solve_nonlocal(random_psi(8, a, rng), r.problem);
    const auto rf = solve_nonlocal(random_psi(8, a, rng), r.problem);
    for (double t : {0.0, 1.5, 3.0}) {
      const Operator s = compute_S(t, prop);
      const int j = r.problem->index_of(t);
      worst = std::max(worst, std::abs(conserved_inner_operator(rp.state(j), rf.state(j), s) -
                                       conserved_inner_surface(rp, rf, t)));
    }
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("transformed state") {
  const Rig r = make_rig(4, 0.1, 12);
  const auto prop = solve_propagator(r.problem);
  std::mt19937_64 rng(13);
  const StateVector psi = random_psi(8, 1.0, rng);
  const Operator s = compute_S(1.5, prop);
  const StateVector tilde = transform_state(psi, s);
  CHECK(tilde.picture == Picture::Transformed);
  const double conserved = std::real(conserved_inner_operator(psi, psi, s));
  CHECK(std::abs(l2_norm(tilde) * l2_norm(tilde) - conserved) < 1e-10);
  // |sqrt(1 + x) - 1| <= |x| for x >= -1.
  const StateVector diff{tilde.values - psi.values, psi.spacing, Picture::Untransformed};
  CHECK(l2_norm(diff) <= spectral_norm(s.matrix()) * l2_norm(psi) + 1e-14);

  CHECK_THROWS_AS(transform_state(psi, Operator(-2.0 * Matrix::Identity(8, 8), true)), Error);
  CHECK_THROWS_AS(transform_state(StateVector{Vector::Zero(4), 1.0, Picture::Untransformed}, s), Error);
}

TEST_CASE("W agrees with the free-substitution formula to first order in lambda") {
  auto defect = [](double lambda) {
    const Rig r = make_rig(4, lambda, 14);
    const auto prop = solve_propagator(r.problem);
    const double t = 1.5;
    const int k = r.grid.kernel_steps(1.0);
    Matrix w_free = Matrix::Zero(8, 8);
    for (int d = -k; d <= k; ++d) {
      const double tp = t + d * r.grid.dt;
      const double end = std::abs(d) == k ? 0.5 : 1.0;
      w_free += end * r.grid.dt * build_V(t, tp, r.channels, r.noise).matrix() *
                matrix_function(r.h0, MatrixFunction::exp_scaled(-(tp - t))).matrix();
    }
    return std::pair{max_abs(compute_W(t, prop).matrix() - w_free), max_abs(w_free)};
  };
  const auto [d1, n1] = defect(0.1);
  const auto [d2, n2] = defect(0.05);
  CHECK(d1 < 0.1 * n1);
  CHECK(n1 / n2 == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(d1 / d2 == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("S_t obeys its evolution identity up to O(dt^2)") {
  auto error_at = [](double dt) {
    const LatticeConfig lat{4, 1.0, 1.0};
    const Operator h0 = build_dirac_h0(lat);
    const std::vector<InteractionChannel> ch{test::site_channel(lat, 0, 0.1), test::site_channel(lat, 1, 0.1)};
    const TimeGrid coarse{0.0, 3.0, 0.0625};
    const auto noise = sample_noise(ch, coarse, 15, NoiseWindow::always());
    const TimeGrid grid{0.0, 3.0, dt};
    auto problem = std::make_shared<NonlocalProblem>(h0, ch, noise, grid);
    const auto prop = solve_propagator(problem);
    const double t = 1.5;
    const Matrix fd = (compute_S(t + dt, prop).matrix() - compute_S(t - dt, prop).matrix()) / (2.0 * dt);
    const Matrix exact = s_derivative_identity(h0, compute_W(t, prop), compute_S(t, prop)).matrix();
    return std::pair{max_abs(fd - exact), max_abs(exact)};
  };
  const auto [e1, n1] = error_at(0.0625);
  const auto [e2, n2] = error_at(0.03125);
  CHECK(n1 == doctest::Approx(n2).epsilon(0.05));
  CHECK(e1 / e2 > 3.0);
  CHECK(e1 / e2 < 5.0);
}

TEST_CASE("expansion and exact transformed interaction differ at third order") {
  auto defect = [](double lambda) {
    const Rig r = make_rig(4, lambda, 16);
    const auto prop = solve_propagator(r.problem);
    return max_abs(compute_Wtilde(1.5, prop, WtildeMode::Exact, DerivativeRule::LemmaIdentity).matrix() -
                   compute_Wtilde(1.5, prop, WtildeMode::Expansion).matrix());
  };
  const double ratio = defect(0.1) / defect(0.05);
  CHECK(std::log2(ratio) == doctest::Approx(3.0).epsilon(0.17));
}

TEST_CASE("transformed interaction from the derivative identity is Hermitian") {
  const Rig r = make_rig(4, 0.1, 17);
  const auto prop = solve_propagator(r.problem);
  const Operator w = compute_Wtilde(1.5, prop, WtildeMode::Exact, DerivativeRule::LemmaIdentity);
  CHECK(max_abs(w.matrix() - w.matrix().adjoint()) < 1e-12);
}

TEST_CASE("transformed step is unitary for a Hermitian generator") {
  const LatticeConfig lat{4, 1.0, 1.0};
  const Operator h0 = build_dirac_h0(lat);
  std::mt19937_64 rng(18);
  const StateVector psi{test::random_state(8, 1.0, rng), 1.0, Picture::Transformed};
  const Matrix w = 0.05 * test::random_hermitian(8, rng);
  const StateVector next = step_transformed(psi, 0.1, h0, w);
  CHECK(l2_norm(next) == doctest::Approx(1.0).epsilon(1e-13));
}
