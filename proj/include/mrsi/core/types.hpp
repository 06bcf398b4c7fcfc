#pragma once

#include "mrsi/core/error.hpp"

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace mrsi {

using Cx = std::complex<double>;
using Index = std::ptrdiff_t;

/// Acquisition grid: matrix, field of view (mm), dwell time (s), timepoints and coils.
struct GridSpec
{
  Index nx = 1, ny = 1, nz = 1;
  double fov_x = 1.0, fov_y = 1.0, fov_z = 1.0;
  double dwell = 1.0;
  Index n_time = 1;
  Index n_coils = 1;

  Index voxels() const { return nx * ny * nz; }
  double dx() const { return fov_x / double(nx); }
  double dy() const { return fov_y / double(ny); }
  double dz() const { return fov_z / double(nz); }
  // Cartesian k-space extent per axis, cycles/mm.
  double kmax_x() const { return double(nx) / (2.0 * fov_x); }
  double kmax_y() const { return double(ny) / (2.0 * fov_y); }
  double kmax_z() const { return double(nz) / (2.0 * fov_z); }
  double kmax_xy() const { return std::min(kmax_x(), kmax_y()); }
  // In-plane Cartesian cell spacing used for coverage and Voronoi clipping.
  double dk_xy() const { return std::min(1.0 / fov_x, 1.0 / fov_y); }

  bool same_space(GridSpec const &o) const
  {
    return nx == o.nx && ny == o.ny && nz == o.nz && fov_x == o.fov_x && fov_y == o.fov_y && fov_z == o.fov_z;
  }

  void validate() const
  {
    if (nx < 1 || ny < 1 || nz < 1 || n_time < 1 || n_coils < 1) {
      fail(Errc::invalid_argument, "grid counts must be >= 1 (got {}x{}x{}, T={}, coils={})", nx, ny, nz, n_time, n_coils);
    }
    if (!(fov_x > 0 && fov_y > 0 && fov_z > 0)) {
      fail(Errc::invalid_argument, "field of view must be positive");
    }
    if (!(dwell > 0)) {
      fail(Errc::invalid_argument, "dwell must be positive");
    }
  }
};

// Voxel storage order is x fastest: idx = x + nx * (y + ny * z).
inline Index voxel_index(GridSpec const &g, Index x, Index y, Index z) { return x + g.nx * (y + g.ny * z); }

template <typename T>
bool all_finite(std::span<T const> v)
{
  for (auto const &e : v) {
    if constexpr (std::is_same_v<T, Cx>) {
      if (!std::isfinite(e.real()) || !std::isfinite(e.imag())) {
        return false;
      }
    } else {
      if (!std::isfinite(double(e))) {
        return false;
      }
    }
  }
  return true;
}

struct ComplexVolume
{
  GridSpec grid;
  std::vector<Cx> data;

  ComplexVolume() = default;
  explicit ComplexVolume(GridSpec const &g)
    : grid(g)
    , data(g.voxels(), Cx(0.0))
  {
  }
  ComplexVolume(GridSpec const &g, std::vector<Cx> d)
    : grid(g)
    , data(std::move(d))
  {
    if (Index(data.size()) != grid.voxels()) {
      fail(Errc::shape_mismatch, "volume has {} values, grid needs {}", data.size(), grid.voxels());
    }
  }

  Index size() const { return Index(data.size()); }
  Cx &operator()(Index x, Index y, Index z) { return data[voxel_index(grid, x, y, z)]; }
  Cx const &operator()(Index x, Index y, Index z) const { return data[voxel_index(grid, x, y, z)]; }
};

/// Volumes stored frame after frame: idx = voxel + N * t.
struct ImageTimeSeries
{
  GridSpec grid;
  std::vector<Cx> data;

  ImageTimeSeries() = default;
  explicit ImageTimeSeries(GridSpec const &g)
    : grid(g)
    , data(g.voxels() * g.n_time, Cx(0.0))
  {
  }

  Index voxels() const { return grid.voxels(); }
  Index frames() const { return grid.n_time; }
  std::span<Cx> frame(Index t) { return {data.data() + t * voxels(), std::size_t(voxels())}; }
  std::span<Cx const> frame(Index t) const { return {data.data() + t * voxels(), std::size_t(voxels())}; }

  ComplexVolume volume(Index t) const
  {
    auto f = frame(t);
    return ComplexVolume(grid, std::vector<Cx>(f.begin(), f.end()));
  }
  void set_volume(Index t, ComplexVolume const &v)
  {
    if (v.size() != voxels()) {
      fail(Errc::shape_mismatch, "frame size {} != {}", v.size(), voxels());
    }
    std::copy(v.data.begin(), v.data.end(), frame(t).begin());
  }
};

struct KPoint
{
  double kx = 0, ky = 0, kz = 0;
};

/// Non-Cartesian samples, stored as [coil][time][sample].
struct CoilKSpaceSeries
{
  GridSpec grid;
  std::vector<KPoint> coords;
  std::vector<Cx> data;

  CoilKSpaceSeries() = default;
  CoilKSpaceSeries(GridSpec const &g, std::vector<KPoint> c)
    : grid(g)
    , coords(std::move(c))
    , data(g.n_coils * g.n_time * Index(coords.size()), Cx(0.0))
  {
  }

  Index samples() const { return Index(coords.size()); }
  std::span<Cx> readout(Index coil, Index t)
  {
    return {data.data() + (coil * grid.n_time + t) * samples(), std::size_t(samples())};
  }
  std::span<Cx const> readout(Index coil, Index t) const
  {
    return {data.data() + (coil * grid.n_time + t) * samples(), std::size_t(samples())};
  }
};

/// Cartesian k-space per coil: [coil][voxel].
struct GriddedKSpace
{
  GridSpec grid;
  Index n_coils = 1;
  std::vector<Cx> data;

  GriddedKSpace() = default;
  GriddedKSpace(GridSpec const &g, Index coils)
    : grid(g)
    , n_coils(coils)
    , data(g.voxels() * coils, Cx(0.0))
  {
  }

  std::span<Cx> coil(Index c) { return {data.data() + c * grid.voxels(), std::size_t(grid.voxels())}; }
  std::span<Cx const> coil(Index c) const { return {data.data() + c * grid.voxels(), std::size_t(grid.voxels())}; }
};

inline double norm2(std::span<Cx const> v)
{
  double s = 0;
  for (auto const &e : v) {
    s += std::norm(e);
  }
  return s;
}

inline Cx dot(std::span<Cx const> a, std::span<Cx const> b)
{
  Cx s = 0;
  for (std::size_t i = 0; i < a.size(); i++) {
    s += std::conj(a[i]) * b[i];
  }
  return s;
}

inline double max_abs(std::span<Cx const> v)
{
  double m = 0;
  for (auto const &e : v) {
    m = std::max(m, std::abs(e));
  }
  return m;
}

} // namespace mrsi
