#pragma once

#include "mrsi/core/types.hpp"

namespace mrsi {

/// Per-coil image-space volumes, [coil][voxel].
struct CoilImages
{
  GridSpec grid;
  Index n_coils = 1;
  std::vector<Cx> data;

  CoilImages() = default;
  CoilImages(GridSpec const &g, Index coils)
    : grid(g)
    , n_coils(coils)
    , data(g.voxels() * coils, Cx(0))
  {
  }
  std::span<Cx> coil(Index c) { return {data.data() + c * grid.voxels(), std::size_t(grid.voxels())}; }
  std::span<Cx const> coil(Index c) const { return {data.data() + c * grid.voxels(), std::size_t(grid.voxels())}; }
};

/// Coil sensitivities, [coil][voxel]; per voxel sum_c |c|^2 = 1 on the support, 0 elsewhere.
struct SensitivityMaps
{
  GridSpec grid;
  Index n_coils = 1;
  std::vector<Cx> data;

  SensitivityMaps() = default;
  SensitivityMaps(GridSpec const &g, Index coils)
    : grid(g)
    , n_coils(coils)
    , data(g.voxels() * coils, Cx(0))
  {
  }

  static SensitivityMaps identity(GridSpec const &g)
  {
    SensitivityMaps m(g, 1);
    std::fill(m.data.begin(), m.data.end(), Cx(1));
    return m;
  }

  std::span<Cx> coil(Index c) { return {data.data() + c * grid.voxels(), std::size_t(grid.voxels())}; }
  std::span<Cx const> coil(Index c) const { return {data.data() + c * grid.voxels(), std::size_t(grid.voxels())}; }
  Cx at(Index c, Index v) const { return data[c * grid.voxels() + v]; }

  /// Rescale each voxel to unit norm across coils; voxels with no signal become zero.
  void normalize(double floor = 1e-12)
  {
    Index const n = grid.voxels();
    for (Index v = 0; v < n; v++) {
      double s = 0;
      for (Index c = 0; c < n_coils; c++) {
        s += std::norm(data[c * n + v]);
      }
      double const inv = s > floor * floor ? 1.0 / std::sqrt(s) : 0.0;
      for (Index c = 0; c < n_coils; c++) {
        data[c * n + v] *= inv;
      }
    }
  }
};

inline void check_maps(GridSpec const &g, SensitivityMaps const &maps, Index coils)
{
  if (maps.grid.voxels() != g.voxels() || Index(maps.data.size()) != maps.n_coils * g.voxels()) {
    fail(Errc::shape_mismatch, "sensitivity maps hold {} voxels, image has {}", maps.grid.voxels(), g.voxels());
  }
  if (coils != maps.n_coils) {
    fail(Errc::shape_mismatch, "{} coil images but {} sensitivity maps", coils, maps.n_coils);
  }
}

/// x(r) = sum_c conj(c_c(r)) y_c(r)
inline void coil_combine_into(std::span<Cx const> coils, SensitivityMaps const &maps, std::span<Cx> out)
{
  Index const n = maps.grid.voxels();
  std::fill(out.begin(), out.end(), Cx(0));
  for (Index c = 0; c < maps.n_coils; c++) {
    Cx const *m = maps.data.data() + c * n;
    Cx const *y = coils.data() + c * n;
    for (Index v = 0; v < n; v++) {
      out[v] += std::conj(m[v]) * y[v];
    }
  }
}

/// y_c(r) = c_c(r) x(r)
inline void coil_expand_into(std::span<Cx const> x, SensitivityMaps const &maps, std::span<Cx> out)
{
  Index const n = maps.grid.voxels();
  for (Index c = 0; c < maps.n_coils; c++) {
    Cx const *m = maps.data.data() + c * n;
    Cx *y = out.data() + c * n;
    for (Index v = 0; v < n; v++) {
      y[v] = m[v] * x[v];
    }
  }
}

inline ComplexVolume coil_combine(CoilImages const &coils, SensitivityMaps const &maps)
{
  check_maps(coils.grid, maps, coils.n_coils);
  ComplexVolume out(coils.grid);
  coil_combine_into(coils.data, maps, out.data);
  return out;
}

inline CoilImages coil_expand(ComplexVolume const &x, SensitivityMaps const &maps)
{
  check_maps(x.grid, maps, maps.n_coils);
  CoilImages out(x.grid, maps.n_coils);
  coil_expand_into(x.data, maps, out.data);
  return out;
}

} // namespace mrsi
