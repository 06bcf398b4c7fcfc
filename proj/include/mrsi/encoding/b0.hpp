#pragma once

#include "mrsi/core/types.hpp"

#include <numbers>

namespace mrsi {

/// Per-voxel frequency offset in Hz.
struct B0Map
{
  GridSpec grid;
  std::vector<double> df;

  B0Map() = default;
  explicit B0Map(GridSpec const &g)
    : grid(g)
    , df(g.voxels(), 0.0)
  {
  }
};

/// out(r, n) = in(r, n) exp(direction * i 2 pi df(r) n dwell).
/// direction +1 simulates the off-resonance, -1 removes it.
inline void b0_apply_frame(std::span<Cx> frame, B0Map const &map, Index n, double dwell, int direction)
{
  double const k = double(direction) * 2.0 * std::numbers::pi * double(n) * dwell;
  for (std::size_t v = 0; v < frame.size(); v++) {
    if (map.df[v] != 0.0) {
      frame[v] *= std::polar(1.0, k * map.df[v]);
    }
  }
}

inline ImageTimeSeries b0_apply(ImageTimeSeries const &series, B0Map const &map, int direction)
{
  if (map.grid.voxels() != series.voxels() || Index(map.df.size()) != series.voxels()) {
    fail(Errc::shape_mismatch, "B0 map has {} voxels, series has {}", map.df.size(), series.voxels());
  }
  if (direction != 1 && direction != -1) {
    fail(Errc::invalid_argument, "direction must be +1 or -1");
  }
  ImageTimeSeries out = series;
  for (Index t = 0; t < series.frames(); t++) {
    b0_apply_frame(out.frame(t), map, t, series.grid.dwell, direction);
  }
  return out;
}

/// Phasor-product frequency estimate over the first n_fit points of each voxel.
/// Frequencies wrap to the principal range [-1/(2 dwell), 1/(2 dwell)).
inline B0Map b0_estimate(ImageTimeSeries const &series, Index n_fit, double rel_threshold = 0.05)
{
  if (n_fit < 2) {
    fail(Errc::invalid_argument, "b0_estimate needs n_fit >= 2, got {}", n_fit);
  }
  if (n_fit > series.frames()) {
    fail(Errc::invalid_argument, "n_fit = {} exceeds the {} available timepoints", n_fit, series.frames());
  }
  B0Map map(series.grid);
  Index const nv = series.voxels();
  auto const f0 = series.frame(0);
  double const peak = max_abs(f0);
  if (peak == 0.0) {
    return map;
  }
  for (Index v = 0; v < nv; v++) {
    if (std::abs(f0[v]) < rel_threshold * peak) {
      continue;
    }
    Cx acc = 0;
    for (Index n = 0; n + 1 < n_fit; n++) {
      acc += series.frame(n + 1)[v] * std::conj(series.frame(n)[v]);
    }
    map.df[v] = std::arg(acc) / (2.0 * std::numbers::pi * series.grid.dwell);
  }
  return map;
}

} // namespace mrsi
