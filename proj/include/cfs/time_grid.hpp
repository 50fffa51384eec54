#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "cfs/errors.hpp"

namespace cfs {

// Uniform grid t_j = t0 + j dt, j = 0..steps. Kernel overhang nodes (j < 0 or
// j > steps) are addressed with the same formula.
struct TimeGrid {
  double t0 = 0.0;
  double t1 = 1.0;
  double dt = 0.1;

  int steps() const { return static_cast<int>(std::lround((t1 - t0) / dt)); }
  double t(int j) const { return t0 + j * dt; }

  // Throws unless (t1 - t0)/dt is integral within 1e-9 and ell_min/dt is an
  // integer >= divisor.
  void validate(double ell_min, int divisor = 8) const;
  // Number of grid steps spanned by ell_min.
  int kernel_steps(double ell_min) const { return static_cast<int>(std::lround(ell_min / dt)); }
};

inline void TimeGrid::validate(double ell_min, int divisor) const {
  if (!(dt > 0.0) || !(t1 > t0)) throw Error(ErrorKind::InvalidArgument, "time grid needs t1 > t0 and dt > 0");
  const double n = (t1 - t0) / dt;
  if (std::abs(n - std::round(n)) > 1e-9 * std::max(1.0, n))
    throw Error(ErrorKind::InvalidArgument, "(t1 - t0)/dt must be an integer");
  const double k = ell_min / dt;
  if (k + 1e-9 < divisor)
    throw Error(ErrorKind::GridTooCoarse, "dt must be <= ell_min/" + std::to_string(divisor));
  if (std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, k))
    throw Error(ErrorKind::GridTooCoarse, "ell_min/dt must be an integer");
}

}  // namespace cfs
