#include "cfs/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <random>
#include <thread>

namespace cfs {

std::string to_string(PictureSelection p) {
  switch (p) {
    case PictureSelection::Transformed: return "transformed";
    case PictureSelection::Untransformed: return "untransformed";
    case PictureSelection::Both: return "both";
  }
  return "?";
}

PictureSelection parse_picture(const std::string& name) {
  if (name == "transformed") return PictureSelection::Transformed;
  if (name == "untransformed") return PictureSelection::Untransformed;
  if (name == "both") return PictureSelection::Both;
  throw Error(ErrorKind::ConfigError, "unknown picture '" + name + "'");
}

void EnsembleConfig::validate(const ModelSetup& setup) const {
  if (realizations < 2) throw Error(ErrorKind::ConfigError, "realizations must be >= 2");
  if (checkpoint_every < 1 || untransformed_every < 0)
    throw Error(ErrorKind::ConfigError, "checkpoint spacing must be positive");
  for (const auto& o : observables)
    if (o.op.rows() != setup.h0.dim() || o.op.cols() != setup.h0.dim())
      throw Error(ErrorKind::DimensionMismatch, "observable '" + o.name + "' has wrong dimension");
  if (workers && *workers < 1) throw Error(ErrorKind::ConfigError, "workers must be >= 1");
}

int resolve_workers(const std::optional<int>& requested) {
  if (const char* env = std::getenv("CFS_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(v);
    throw Error(ErrorKind::ConfigError, std::string("CFS_WORKERS must be a positive integer, got '") + env + "'");
  }
  if (requested) return *requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

// Running (count, mean, M2) with Chan's merge; merges happen in a fixed tree
// so the result does not depend on scheduling.
struct Moments {
  double n = 0.0;
  Eigen::ArrayXd mean;
  Eigen::ArrayXd m2;

  void add(const Eigen::ArrayXd& x) {
    if (n == 0.0) {
      n = 1.0;
      mean = x;
      m2 = Eigen::ArrayXd::Zero(x.size());
      return;
    }
    n += 1.0;
    const Eigen::ArrayXd delta = x - mean;
    mean += delta / n;
    m2 += delta * (x - mean);
  }

  static Moments merge(const Moments& a, const Moments& b) {
    if (a.n == 0.0) return b;
    if (b.n == 0.0) return a;
    Moments out;
    out.n = a.n + b.n;
    const Eigen::ArrayXd delta = b.mean - a.mean;
    out.mean = a.mean + delta * (b.n / out.n);
    out.m2 = a.m2 + b.m2 + delta * delta * (a.n * b.n / out.n);
    return out;
  }
};

template <class Leaf>
Leaf tree_reduce(std::vector<Leaf>& leaves, int lo, int hi, const std::function<Leaf(const Leaf&, const Leaf&)>& op) {
  if (hi - lo == 1) return leaves[static_cast<std::size_t>(lo)];
  const int mid = lo + (hi - lo) / 2;
  return op(tree_reduce(leaves, lo, mid, op), tree_reduce(leaves, mid, hi, op));
}

// Runs body(r) for r in [0, count) over fixed leaves of kLeafSize realizations.
// Each leaf folds its realizations in order; failures are reported for the
// lowest failing realization.
template <class Leaf>
Leaf map_reduce(int count, int workers, const std::function<void(int, Leaf&)>& body,
                const std::function<Leaf(const Leaf&, const Leaf&)>& merge) {
  const int leaf_size = EnsembleConfig::kLeafSize;
  const int n_leaves = (count + leaf_size - 1) / leaf_size;
  std::vector<Leaf> leaves(static_cast<std::size_t>(n_leaves));
  std::atomic<int> next{0};
  std::mutex err_mutex;
  int err_index = count;
  std::optional<Error> err;
  auto work = [&]() {
    for (;;) {
      const int leaf = next.fetch_add(1);
      if (leaf >= n_leaves) return;
      const int lo = leaf * leaf_size;
      const int hi = std::min(count, lo + leaf_size);
      for (int r = lo; r < hi; ++r) {
        try {
          body(r, leaves[static_cast<std::size_t>(leaf)]);
        } catch (const Error& e) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (r < err_index) {
            err_index = r;
            err = Error(e.kind(), "realization " + std::to_string(r) + ": " + e.what());
          }
          return;
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (r < err_index) {
            err_index = r;
            err = Error(ErrorKind::InvalidArgument, "realization " + std::to_string(r) + ": " + e.what());
          }
          return;
        }
      }
    }
  };
  const int n_threads = std::max(1, std::min(workers, n_leaves));
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (err) throw *err;
  return tree_reduce<Leaf>(leaves, 0, n_leaves, merge);
}

std::vector<int> checkpoints(int steps, int every) {
  std::vector<int> out;
  for (int j = 0; j <= steps; j += every) out.push_back(j);
  if (out.back() != steps) out.push_back(steps);
  return out;
}

// Scalar layout of one picture: energy, norm, then per observable
// value, square, second, rate, spread_change, adjusted_change; each over all checkpoints.
constexpr int kPerObservable = 6;

int picture_width(int n_times, int n_obs) { return n_times * (2 + kPerObservable * n_obs); }

Series slice(const Moments& m, int offset, int n_times) {
  Series s;
  const double n = m.n;
  for (int i = 0; i < n_times; ++i) {
    const double mean = m.mean(offset + i);
    const double var = n > 1.0 ? std::max(0.0, m.m2(offset + i) / (n - 1.0)) : 0.0;
    s.mean.push_back(mean);
    s.variance.push_back(var);
    s.stderr.push_back(std::sqrt(var / n));
  }
  return s;
}

PictureStats unpack(const Moments& m, int base, const std::vector<double>& times, int n_obs) {
  const int nt = static_cast<int>(times.size());
  PictureStats p;
  p.times = times;
  p.energy = slice(m, base, nt);
  p.norm = slice(m, base + nt, nt);
  for (int o = 0; o < n_obs; ++o) {
    const int off = base + nt * (2 + kPerObservable * o);
    ObservableSeries s;
    s.value = slice(m, off, nt);
    s.square = slice(m, off + nt, nt);
    s.second = slice(m, off + 2 * nt, nt);
    s.rate = slice(m, off + 3 * nt, nt);
    s.spread_change = slice(m, off + 4 * nt, nt);
    s.adjusted_change = slice(m, off + 5 * nt, nt);
    p.observables.push_back(std::move(s));
  }
  return p;
}

// Fills per-time scalars for one picture into x[base...].
struct PictureWriter {
  Eigen::ArrayXd& x;
  int base;
  int nt;
  int n_obs;

  void energy(int i, double v) { x(base + i) = v; }
  void norm(int i, double v) { x(base + nt + i) = v; }
  void obs(int o, int field, int i, double v) { x(base + nt * (2 + kPerObservable * o) + field * nt + i) = v; }
  double get(int o, int field, int i) const { return x(base + nt * (2 + kPerObservable * o) + field * nt + i); }
  void finish_changes() {
    for (int o = 0; o < n_obs; ++o)
      for (int i = 0; i < nt; ++i) {
        const double spread = get(o, 2, i) - get(o, 1, i);
        const double spread0 = get(o, 2, 0) - get(o, 1, 0);
        obs(o, 4, i, spread - spread0);
        obs(o, 5, i, -(get(o, 1, i) - get(o, 1, 0)));
      }
  }
};

Matrix step_propagator(const Matrix& h, double dt) {
  const HermitianEigen eig = HermitianEigen::of(hermitize(h));
  Eigen::VectorXcd ph(eig.values.size());
  for (int i = 0; i < eig.values.size(); ++i) ph(i) = std::polar(1.0, -dt * eig.values(i));
  return eig.apply(ph);
}

struct Leaf {
  Moments scalars;
  Moments density_re;
  Moments density_im;
  double max_drift = 0.0;
};

Leaf merge_leaves(const Leaf& a, const Leaf& b) {
  Leaf out;
  out.scalars = Moments::merge(a.scalars, b.scalars);
  out.density_re = Moments::merge(a.density_re, b.density_re);
  out.density_im = Moments::merge(a.density_im, b.density_im);
  out.max_drift = std::max(a.max_drift, b.max_drift);
  return out;
}

}  // namespace

EnsembleStats run_ensemble(const StateVector& psi0, const EnsembleConfig& cfg, const ModelSetup& setup) {
  cfg.validate(setup);
  if (psi0.dim() != setup.h0.dim()) throw Error(ErrorKind::DimensionMismatch, "initial state dimension");
  const TimeGrid& grid = setup.grid;
  for (const auto& c : setup.channels) grid.validate(c.profile.ell_min, setup.solver.divisor);
  const int n = grid.steps();
  const double dt = grid.dt;
  const double a = setup.spacing;
  const int dim = setup.h0.dim();
  const int n_obs = static_cast<int>(cfg.observables.size());
  const bool want_t = cfg.picture != PictureSelection::Untransformed;
  const bool want_u = cfg.picture != PictureSelection::Transformed;

  const std::vector<int> cp_t = checkpoints(n, cfg.checkpoint_every);
  const std::vector<int> cp_u = checkpoints(n, cfg.untransformed_every > 0 ? cfg.untransformed_every : cfg.checkpoint_every);
  const int nt_t = want_t ? static_cast<int>(cp_t.size()) : 0;
  const int nt_u = want_u ? static_cast<int>(cp_u.size()) : 0;
  const int base_u = picture_width(nt_t, n_obs);
  const int width = base_u + picture_width(nt_u, n_obs);
  const int dens_width = (want_t && cfg.record_density) ? nt_t * dim * dim : 0;

  const double zeta_step = setup.zeta_step > 0.0 ? setup.zeta_step : 0.5 * dt;
  const ChannelOperatorSet ops(setup.channels, setup.h0, zeta_step, setup.symmetrize);

  EnsembleStats stats;
  stats.realizations = cfg.realizations;
  stats.seed = cfg.seed;
  if (cfg.keep_raw && want_t)
    stats.raw.assign(static_cast<std::size_t>(n_obs),
                     std::vector<std::vector<double>>(static_cast<std::size_t>(cfg.realizations)));

  auto body = [&](int r, Leaf& leaf) {
    Eigen::ArrayXd x = Eigen::ArrayXd::Zero(width);
    Eigen::ArrayXd dre, dim_;
    if (dens_width) {
      dre = Eigen::ArrayXd::Zero(dens_width);
      dim_ = Eigen::ArrayXd::Zero(dens_width);
    }
    const NoiseRealization noise =
        sample_noise(setup.channels, grid, realization_seed(cfg.seed, static_cast<std::uint64_t>(r)), setup.window,
                     setup.solver.divisor);

    if (want_t) {
      PictureWriter wr{x, 0, nt_t, n_obs};
      Vector psi = psi0.values;
      std::size_t next_cp = 0;
      for (int j = 0; j <= n; ++j) {
        if (next_cp < cp_t.size() && cp_t[next_cp] == j) {
          const int i = static_cast<int>(next_cp);
          const Matrix wt = ops.channels() ? linear_wtilde(grid.t(j), ops, noise) : Matrix::Zero(dim, dim);
          const Vector hpsi = setup.h0.matrix() * psi + wt * psi;
          wr.energy(i, a * psi.dot(hpsi).real());
          wr.norm(i, a * psi.squaredNorm());
          for (int o = 0; o < n_obs; ++o) {
            const Matrix& op = cfg.observables[static_cast<std::size_t>(o)].op;
            const Vector opsi = op * psi;
            const double v = a * psi.dot(opsi).real();
            const cplx c = a * psi.dot(wt * opsi - op * (wt * psi));
            wr.obs(o, 0, i, v);
            wr.obs(o, 1, i, v * v);
            wr.obs(o, 2, i, a * opsi.squaredNorm());
            wr.obs(o, 3, i, -std::norm(c));
            if (cfg.keep_raw) stats.raw[static_cast<std::size_t>(o)][static_cast<std::size_t>(r)].push_back(v);
          }
          if (dens_width) {
            const Matrix rho = a * psi * psi.adjoint();
            for (int q = 0; q < dim * dim; ++q) {
              dre(i * dim * dim + q) = rho(q % dim, q / dim).real();
              dim_(i * dim * dim + q) = rho(q % dim, q / dim).imag();
            }
          }
          ++next_cp;
        }
        if (j == n) break;
        const Matrix wm =
            ops.channels() ? linear_wtilde(grid.t(j) + 0.5 * dt, ops, noise) : Matrix::Zero(dim, dim);
        psi = step_propagator(setup.h0.matrix() + wm, dt) * psi;
      }
      wr.finish_changes();
    }

    if (want_u) {
      PictureWriter wr{x, base_u, nt_u, n_obs};
      auto problem = std::make_shared<const NonlocalProblem>(setup.h0, setup.channels, noise, grid, setup.solver);
      const EvolutionRecord prop = solve_propagator(problem, a);
      double norm0 = 0.0;
      for (int i = 0; i < nt_u; ++i) {
        const int j = cp_u[static_cast<std::size_t>(i)];
        const double t = grid.t(j);
        const Vector psi = prop.at(j) * psi0.values;
        const Matrix s = compute_S(t, prop).matrix();
        const Matrix w = compute_W(t, prop).matrix();
        const Matrix x1 = Matrix::Identity(dim, dim) + s;
        auto conserved = [&](const Vector& v) { return a * psi.dot(x1 * v); };
        const double nrm = conserved(psi).real();
        if (i == 0) norm0 = nrm;
        leaf.max_drift = std::max(leaf.max_drift, std::abs(nrm - norm0));
        wr.norm(i, nrm);
        wr.energy(i, conserved(setup.h0.matrix() * psi + w * psi).real());
        const Matrix wsum = w + w.adjoint();
        const Matrix wdiff = w - w.adjoint();
        for (int o = 0; o < n_obs; ++o) {
          const Matrix& op = cfg.observables[static_cast<std::size_t>(o)].op;
          const double v = conserved(op * psi).real();
          const cplx comm = conserved(wsum * (op * psi) - op * (wsum * psi));
          const cplx anti = conserved(wdiff * (op * psi) + op * (wdiff * psi));
          wr.obs(o, 0, i, v);
          wr.obs(o, 1, i, v * v);
          wr.obs(o, 2, i, conserved(op * (op * psi)).real());
          wr.obs(o, 3, i, -0.25 * std::norm(comm - anti));
        }
      }
      wr.finish_changes();
    }

    leaf.scalars.add(x);
    if (dens_width) {
      leaf.density_re.add(dre);
      leaf.density_im.add(dim_);
    }
  };

  const Leaf total =
      map_reduce<Leaf>(cfg.realizations, resolve_workers(cfg.workers), body, merge_leaves);

  std::vector<double> times_t, times_u;
  for (int j : cp_t) times_t.push_back(grid.t(j));
  for (int j : cp_u) times_u.push_back(grid.t(j));
  if (want_t) stats.transformed = unpack(total.scalars, 0, times_t, n_obs);
  if (want_u) {
    stats.untransformed = unpack(total.scalars, base_u, times_u, n_obs);
    stats.max_norm_drift = total.max_drift;
  }
  if (dens_width) {
    const double rn = total.density_re.n;
    for (int i = 0; i < nt_t; ++i) {
      Matrix m(dim, dim);
      Eigen::MatrixXd se(dim, dim);
      for (int q = 0; q < dim * dim; ++q) {
        const int k = i * dim * dim + q;
        m(q % dim, q / dim) = cplx(total.density_re.mean(k), total.density_im.mean(k));
        const double vr = std::max(0.0, total.density_re.m2(k) / (rn - 1.0));
        const double vi = std::max(0.0, total.density_im.m2(k) / (rn - 1.0));
        se(q % dim, q / dim) = std::sqrt((vr + vi) / rn);
      }
      stats.density_mean.push_back(std::move(m));
      stats.density_stderr.push_back(std::move(se));
    }
  }
  if (!setup.channels.empty() && !setup.window.off_outside(grid.t0 + max_ell(setup.channels), grid.t1 - max_ell(setup.channels)))
    stats.warnings.push_back("noise window does not vanish near the grid boundaries");
  return stats;
}

EnergySeries energy_trajectory(const EnsembleStats& stats, PictureSelection picture) {
  EnergySeries out;
  const bool want_t = picture != PictureSelection::Untransformed;
  const bool want_u = picture != PictureSelection::Transformed;
  if (want_t && !stats.transformed) throw Error(ErrorKind::PictureNotRecorded, "transformed picture not recorded");
  if (want_u && !stats.untransformed) throw Error(ErrorKind::PictureNotRecorded, "untransformed picture not recorded");
  if (want_t) {
    out.times = stats.transformed->times;
    out.transformed = stats.transformed->energy;
  }
  if (want_u) {
    if (!want_t) out.times = stats.untransformed->times;
    out.untransformed = stats.untransformed->energy;
  }
  if (want_t && want_u) {
    const auto& tu = stats.untransformed->times;
    for (std::size_t i = 0; i < tu.size(); ++i) {
      const auto it = std::find_if(out.times.begin(), out.times.end(),
                                   [&](double t) { return std::abs(t - tu[i]) < 1e-12 * std::max(1.0, std::abs(t)); });
      if (it == out.times.end()) continue;
      const auto k = static_cast<std::size_t>(it - out.times.begin());
      out.difference.push_back(out.untransformed.mean[i] - out.transformed.mean[k]);
    }
  }
  return out;
}

VarianceReport variance_diagnostics(const EnsembleStats& stats, int observable, const ModelSetup& setup) {
  const double ell = max_ell(setup.channels);
  if (!setup.window.off_outside(setup.grid.t0 + 2.0 * ell, setup.grid.t1 - 2.0 * ell))
    throw Error(ErrorKind::ScenarioViolation, "noise window must vanish within 2 ell_min of t0 and t1");
  const PictureStats* p = stats.transformed ? &*stats.transformed : (stats.untransformed ? &*stats.untransformed : nullptr);
  if (!p) throw Error(ErrorKind::PictureNotRecorded, "no picture recorded");
  if (observable < 0 || observable >= static_cast<int>(p->observables.size()))
    throw Error(ErrorKind::InvalidArgument, "observable index out of range");
  VarianceReport rep;
  const auto& s = p->observables[static_cast<std::size_t>(observable)];
  rep.raw_change = s.spread_change.mean.back();
  rep.raw_stderr = s.spread_change.stderr.back();
  rep.adjusted_change = s.adjusted_change.mean.back();
  rep.adjusted_stderr = s.adjusted_change.stderr.back();
  if (stats.transformed) {
    rep.times = stats.transformed->times;
    rep.c12 = stats.transformed->observables[static_cast<std::size_t>(observable)].rate;
  }
  if (stats.untransformed) {
    rep.c22_times = stats.untransformed->times;
    rep.c22 = stats.untransformed->observables[static_cast<std::size_t>(observable)].rate;
  }
  return rep;
}

CollapseReport scenario_collapse(const StateVector& psi0, const EnsembleConfig& cfg_in, const ModelSetup& setup,
                                 int bins) {
  if (cfg_in.observables.size() < 2)
    throw Error(ErrorKind::InvalidArgument, "collapse scenario needs the pointer observable and a branch projector");
  if (bins < 1) throw Error(ErrorKind::InvalidArgument, "bins must be positive");
  EnsembleConfig cfg = cfg_in;
  cfg.keep_raw = true;
  if (cfg.picture == PictureSelection::Untransformed) cfg.picture = PictureSelection::Both;
  const EnsembleStats stats = run_ensemble(psi0, cfg, setup);
  CollapseReport rep;
  rep.variance = variance_diagnostics(stats, 0, setup);
  const auto& tr = *stats.transformed;
  rep.times = tr.times;
  rep.pointer = tr.observables[0].value;
  rep.branch_weight = tr.observables[1].value;
  rep.mean_constant = true;
  for (std::size_t i = 0; i < rep.times.size(); ++i) {
    const double diff = std::abs(rep.pointer.mean[i] - rep.pointer.mean[0]);
    if (diff > 3.0 * rep.pointer.stderr[i]) rep.mean_constant = false;
  }
  rep.variance_monotone = true;
  for (std::size_t i = 1; i < rep.times.size(); ++i)
    if (rep.branch_weight.variance[i] < rep.branch_weight.variance[i - 1] - kVarianceRoundoff)
      rep.variance_monotone = false;
  for (int b = 0; b <= bins; ++b) rep.histogram_edges.push_back(static_cast<double>(b) / bins);
  rep.histogram.assign(static_cast<std::size_t>(bins), 0);
  for (const auto& series : stats.raw[1]) {
    const double w = std::clamp(std::abs(series.back()), 0.0, 1.0);
    const int b = std::min(bins - 1, static_cast<int>(w * bins));
    ++rep.histogram[static_cast<std::size_t>(b)];
  }
  return rep;
}

MonteCarloA estimate_A(const ChannelOperatorSet& ops, const TimeGrid& grid, int realizations, std::uint64_t seed,
                       std::optional<int> workers) {
  if (realizations < 2) throw Error(ErrorKind::InvalidArgument, "realizations must be >= 2");
  const int dim = ops.dim();
  const double h = 0.5 * grid.dt;
  // Evaluation time t = 0 relative to the noise nodes m_k = k h; W~ involves
  // nodes with |t - m_k| <= ell/2 and the tau integral over [t - 2 ell, t].
  struct ChannelTerms {
    std::vector<int> nodes;
    std::vector<Matrix> point;     // 2 h M(2 (t - m_k))
    std::vector<Matrix> integral;  // 2 h int dtau M(2 (tau - m_k))
  };
  std::vector<ChannelTerms> terms;
  for (int a = 0; a < ops.channels(); ++a) {
    const double ell = ops.ell(a);
    const int lo = static_cast<int>(std::floor((-2.0 * ell - 0.5 * ell) / h)) - 1;
    const int hi = static_cast<int>(std::ceil(0.5 * ell / h)) + 1;
    const int steps = static_cast<int>(std::lround(2.0 * ell / h));
    ChannelTerms ct;
    for (int k = lo; k <= hi; ++k) {
      const double m = k * h;
      Matrix integral = Matrix::Zero(dim, dim);
      for (int q = 0; q <= steps; ++q) {
        const double tau = -2.0 * ell + q * h;
        const double tw = (q == 0 || q == steps) ? 0.5 : 1.0;
        integral += (tw * h) * ops.at(a, 2.0 * (tau - m));
      }
      Matrix point = ops.at(a, -2.0 * m);
      ct.nodes.push_back(k);
      ct.point.push_back(2.0 * h * point);
      ct.integral.push_back(2.0 * h * integral);
    }
    terms.push_back(std::move(ct));
  }
  struct LeafA {
    Moments re, im;
  };
  auto body = [&](int r, LeafA& leaf) {
    std::mt19937_64 rng(realization_seed(seed, static_cast<std::uint64_t>(r)));
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix w_now = Matrix::Zero(dim, dim);
    Matrix w_int = Matrix::Zero(dim, dim);
    for (const auto& ct : terms)
      for (std::size_t k = 0; k < ct.nodes.size(); ++k) {
        const double xi = normal(rng) / std::sqrt(h);
        w_now += xi * ct.point[k];
        w_int += xi * ct.integral[k];
      }
    const Matrix sample = -(w_now * w_int);
    Eigen::ArrayXd re(dim * dim), im(dim * dim);
    for (int q = 0; q < dim * dim; ++q) {
      re(q) = sample(q % dim, q / dim).real();
      im(q) = sample(q % dim, q / dim).imag();
    }
    leaf.re.add(re);
    leaf.im.add(im);
  };
  auto merge = [](const LeafA& x, const LeafA& y) {
    return LeafA{Moments::merge(x.re, y.re), Moments::merge(x.im, y.im)};
  };
  const LeafA total = map_reduce<LeafA>(realizations, resolve_workers(workers), body, merge);
  MonteCarloA out{Matrix(dim, dim), Eigen::MatrixXd(dim, dim), Eigen::MatrixXd(dim, dim)};
  const double rn = total.re.n;
  for (int q = 0; q < dim * dim; ++q) {
    out.mean(q % dim, q / dim) = cplx(total.re.mean(q), total.im.mean(q));
    out.stderr_re(q % dim, q / dim) = std::sqrt(std::max(0.0, total.re.m2(q) / (rn - 1.0)) / rn);
    out.stderr_im(q % dim, q / dim) = std::sqrt(std::max(0.0, total.im.m2(q) / (rn - 1.0)) / rn);
  }
  return out;
}

}  // namespace cfs
