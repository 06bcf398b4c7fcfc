#pragma once

#include "mrsi/encoding/encode.hpp"

#include <nlohmann/json.hpp>

namespace mrsi {

struct TubeSet
{
  double diameter = 0;       // mm
  Index count = 6;           // tubes in the triangle: 1, 3, 6, 10, ...
  double spacing_factor = 2; // pitch = spacing_factor * diameter
  double sector_angle = 0;   // direction of the sector bisector, radians
};

struct Tube
{
  double x = 0, y = 0, radius = 0;
};

struct PhantomSpec
{
  double container_diameter = 133.3;
  double apex_gap = 10.0; // distance from centre to the first tube row, plus one diameter
  std::vector<TubeSet> tube_sets;

  /// Tube centres: per sector a triangular lattice with rows of 1, 2, 3, ...
  /// tubes, its apex pointing at the centre.
  std::vector<Tube> tubes() const
  {
    std::vector<Tube> out;
    for (auto const &ts : tube_sets) {
      double const pitch = ts.spacing_factor * ts.diameter;
      double const r0 = apex_gap + ts.diameter;
      double const ux = std::cos(ts.sector_angle), uy = std::sin(ts.sector_angle);
      Index placed = 0;
      for (Index row = 0; placed < ts.count; row++) {
        double const along = r0 + double(row) * pitch * std::sqrt(3.0) / 2.0;
        for (Index j = 0; j <= row && placed < ts.count; j++, placed++) {
          double const across = (double(j) - double(row) / 2.0) * pitch;
          out.push_back({along * ux - across * uy, along * uy + across * ux, ts.diameter / 2});
        }
      }
    }
    return out;
  }
};

/// Five 72 degree sectors of six tubes each, diameters 2 to 10 mm, pitch twice the diameter.
inline PhantomSpec default_derenzo()
{
  PhantomSpec p;
  double const d[5] = {2, 4, 6, 8, 10};
  for (int s = 0; s < 5; s++) {
    p.tube_sets.push_back({d[s], 6, 2.0, std::numbers::pi / 2 + double(s) * 2.0 * std::numbers::pi / 5.0});
  }
  return p;
}

inline PhantomSpec phantom_from_json(nlohmann::json const &j)
{
  PhantomSpec p;
  p.container_diameter = j.value("container_diameter", p.container_diameter);
  p.apex_gap = j.value("apex_gap", p.apex_gap);
  for (auto const &t : j.at("tube_sets")) {
    TubeSet ts;
    ts.diameter = t.at("diameter");
    ts.count = t.value("count", ts.count);
    ts.spacing_factor = t.value("spacing_factor", ts.spacing_factor);
    ts.sector_angle = t.value("sector_angle", 0.0);
    p.tube_sets.push_back(ts);
  }
  return p;
}

/// Area fraction of each voxel inside any tube; tubes run along z through the
/// whole field of view, so only the in-plane subgrid matters.
inline ComplexVolume rasterize(PhantomSpec const &spec, GridSpec const &g, Index supersample = 4)
{
  if (supersample < 1) {
    fail(Errc::invalid_argument, "supersample must be >= 1, got {}", supersample);
  }
  auto const tubes = spec.tubes();
  ComplexVolume vol(g);
  double const dx = g.dx(), dy = g.dy();
  double const inv = 1.0 / double(supersample * supersample);
  for (Index y = 0; y < g.ny; y++) {
    for (Index x = 0; x < g.nx; x++) {
      Index hits = 0;
      for (Index sy = 0; sy < supersample; sy++) {
        double const py = (double(y - g.ny / 2) + (double(sy) + 0.5) / double(supersample) - 0.5) * dy;
        for (Index sx = 0; sx < supersample; sx++) {
          double const px = (double(x - g.nx / 2) + (double(sx) + 0.5) / double(supersample) - 0.5) * dx;
          for (auto const &t : tubes) {
            if ((px - t.x) * (px - t.x) + (py - t.y) * (py - t.y) <= t.radius * t.radius) {
              hits++;
              break;
            }
          }
        }
      }
      for (Index z = 0; z < g.nz; z++) {
        vol(x, y, z) = double(hits) * inv;
      }
    }
  }
  return vol;
}

struct FidModel
{
  double amplitude = 1.0;
  double frequency = 0.0; // Hz
  double t2 = 0.1;        // s
};

/// x(r, n) = vol(r) sum_m A_m exp(i 2 pi f_m n dwell) exp(-n dwell / T2_m)
inline ImageTimeSeries synthesize_series(ComplexVolume const &vol, std::vector<FidModel> const &lines, GridSpec const &g)
{
  if (vol.grid.voxels() != g.voxels()) {
    fail(Errc::shape_mismatch, "volume has {} voxels, grid {}", vol.grid.voxels(), g.voxels());
  }
  for (auto const &l : lines) {
    if (!(l.t2 > 0)) {
      fail(Errc::invalid_argument, "FID T2 must be positive, got {}", l.t2);
    }
  }
  ImageTimeSeries s(g);
  for (Index t = 0; t < g.n_time; t++) {
    double const tt = double(t) * g.dwell;
    Cx f = 0;
    for (auto const &l : lines) {
      f += l.amplitude * std::polar(std::exp(-tt / l.t2), 2.0 * std::numbers::pi * l.frequency * tt);
    }
    auto dst = s.frame(t);
    for (Index v = 0; v < g.voxels(); v++) {
      dst[v] = vol.data[v] * f;
    }
  }
  return s;
}

/// Smooth surface-coil-like sensitivities from low-order polynomials, unit norm per voxel.
inline SensitivityMaps synthetic_coil_maps(GridSpec const &g, Index n_coils)
{
  if (n_coils < 1) {
    fail(Errc::invalid_argument, "need at least one coil");
  }
  SensitivityMaps m(g, n_coils);
  for (Index c = 0; c < n_coils; c++) {
    double const th = 2.0 * std::numbers::pi * double(c) / double(n_coils);
    double const ct = std::cos(th), st = std::sin(th);
    for (Index z = 0; z < g.nz; z++) {
      double const w = g.nz > 1 ? double(z - g.nz / 2) / double(g.nz) : 0.0;
      for (Index y = 0; y < g.ny; y++) {
        double const v = double(y - g.ny / 2) / double(g.ny);
        for (Index x = 0; x < g.nx; x++) {
          double const u = double(x - g.nx / 2) / double(g.nx);
          double const lin = 1.0 + 1.2 * (u * ct + v * st) + 0.2 * w;
          double const mag = n_coils == 1 ? 1.0 : 0.1 + lin * lin;
          double const ph = n_coils == 1 ? 0.0 : 0.6 * (u * st - v * ct) + 0.4 * (u * u - v * v) + 0.3 * double(c);
          m.data[c * g.voxels() + voxel_index(g, x, y, z)] = std::polar(mag, ph);
        }
      }
    }
  }
  m.normalize();
  return m;
}

/// Per-component noise level giving the requested SNR, 10 log10(mean |s|^2 / (2 sigma^2)).
inline double noise_sigma_for_snr(std::span<Cx const> clean, double snr_db)
{
  double const p = norm2(clean) / double(std::max<std::size_t>(1, clean.size()));
  return std::sqrt(p / (2.0 * std::pow(10.0, snr_db / 10.0)));
}

/// s = F C B(+1) x + complex Gaussian noise (sigma per real and imaginary part).
inline CoilKSpaceSeries simulate_acquisition(ImageTimeSeries const &series, Trajectory const &traj,
                                             SensitivityMaps const &maps, std::optional<B0Map> const &b0,
                                             double noise_sigma, std::uint64_t seed)
{
  if (!(noise_sigma >= 0)) {
    fail(Errc::invalid_argument, "noise sigma must be >= 0");
  }
  if (!series.grid.same_space(traj.grid)) {
    fail(Errc::shape_mismatch, "series grid does not match the trajectory grid");
  }
  auto s = encode_forward(series, maps, b0, traj, std::nullopt);
  if (noise_sigma > 0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, noise_sigma);
    for (auto &v : s.data) {
      double const re = g(rng);
      double const im = g(rng);
      v += Cx(re, im);
    }
  }
  return s;
}

} // namespace mrsi
