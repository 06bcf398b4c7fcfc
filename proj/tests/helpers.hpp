#pragma once

#include "mrsi/core/types.hpp"

#include <random>

namespace mrsi::test {

inline std::vector<Cx> random_cx(Index n, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Cx> v(n);
  for (auto &e : v) {
    e = Cx(g(rng), g(rng));
  }
  return v;
}

inline double rel_err(std::span<Cx const> a, std::span<Cx const> b)
{
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); i++) {
    num += std::norm(a[i] - b[i]);
    den += std::norm(b[i]);
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

inline GridSpec grid(Index nx, Index ny, Index nz, double fov_xy = 160.0, double fov_z = 40.0)
{
  GridSpec g;
  g.nx = nx;
  g.ny = ny;
  g.nz = nz;
  g.fov_x = fov_xy;
  g.fov_y = fov_xy;
  g.fov_z = fov_z;
  g.dwell = 1.0 / 2000.0;
  return g;
}

} // namespace mrsi::test
