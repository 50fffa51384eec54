#pragma once

#include <random>

#include "cfs/interaction.hpp"

namespace cfs::test {

inline Matrix random_hermitian(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) m(i, j) = cplx(n(rng), n(rng));
  return hermitize(m);
}

inline Vector random_state(int dim, double spacing, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = cplx(n(rng), n(rng));
  return v / (std::sqrt(spacing) * v.norm());
}

inline InteractionChannel site_channel(const LatticeConfig& lat, int site, double amplitude, double ell = 1.0) {
  ChannelSpec s;
  s.kind = ChannelSpec::Kind::SiteProjector;
  s.site = site;
  s.amplitude = amplitude;
  s.label = "site" + std::to_string(site);
  s.profile.ell_min = ell;
  return make_channel(s, lat);
}

inline InteractionChannel momentum_channel(const LatticeConfig& lat, std::vector<double> table, double amplitude,
                                           double ell = 1.0) {
  ChannelSpec s;
  s.kind = ChannelSpec::Kind::MomentumFunction;
  s.table = std::move(table);
  s.amplitude = amplitude;
  s.label = "mom";
  s.profile.ell_min = ell;
  return make_channel(s, lat);
}

}  // namespace cfs::test
