#pragma once

#include "mrsi/core/types.hpp"

#include <cstdint>
#include <numbers>
#include <random>

namespace mrsi {

struct EccentricCircle
{
  Index partition = 0;
  double cx = 0, cy = 0; // cycles/mm
  double radius = 0;     // cycles/mm
  Index n_points = 0;
  bool crosses_center = false;
  double phase0 = 0; // angle of the first sample, radians
};

/// Sampling pattern: eccentric circles over a stack of kz partitions, or an
/// explicit point set (no circles) for Cartesian and test geometries.
struct Trajectory
{
  GridSpec grid;
  std::vector<EccentricCircle> circles;
  double af_nominal = 1.0;
  std::uint64_t seed = 0;
  double radius_fraction = 0.0;

  std::vector<KPoint> points;
  std::vector<Index> partition; // per sample

  Index samples() const { return Index(points.size()); }
  bool explicit_points() const { return circles.empty() && !points.empty(); }
};

struct SampleWeights
{
  std::vector<double> values;

  Index size() const { return Index(values.size()); }
  static SampleWeights ones(Index n) { return {std::vector<double>(n, 1.0)}; }
};

inline Index partition_center(GridSpec const &g) { return g.nz / 2; }

inline double partition_kz(GridSpec const &g, Index p) { return double(p - partition_center(g)) / g.fov_z; }

// Half-extent of the partition stack. For odd nz this equals nz / (2 fov_z);
// for even nz the extra half cell keeps the outermost partition non-empty.
inline double stack_kz_max(GridSpec const &g) { return (double(partition_center(g)) + 0.5) / g.fov_z; }

/// In-plane radius of a partition disc in the spherical stack.
inline double partition_kmax(GridSpec const &g, Index p)
{
  double const r = partition_kz(g, p) / stack_kz_max(g);
  return g.kmax_xy() * std::sqrt(std::max(0.0, 1.0 - r * r));
}

inline Index partition_of_kz(GridSpec const &g, double kz)
{
  return Index(std::llround(kz * g.fov_z)) + partition_center(g);
}

inline Index circle_points(GridSpec const &g, double center_dist, double radius)
{
  double const fov = std::max(g.fov_x, g.fov_y);
  return std::max<Index>(1, Index(std::ceil(2.0 * std::numbers::pi * (center_dist + radius) * fov - 1e-9)));
}

/// Rebuild the sample list from the circle list (circle-major, then angle).
inline void build_points(Trajectory &t)
{
  t.points.clear();
  t.partition.clear();
  for (auto const &c : t.circles) {
    double const kz = partition_kz(t.grid, c.partition);
    double const dist = std::hypot(c.cx, c.cy);
    for (Index m = 0; m < c.n_points; m++) {
      double const a = c.phase0 + 2.0 * std::numbers::pi * double(m) / double(c.n_points);
      KPoint k{c.cx + c.radius * std::cos(a), c.cy + c.radius * std::sin(a), kz};
      // A circle whose rim passes through the origin samples it exactly.
      if (m == 0 && c.crosses_center && std::abs(dist - c.radius) <= 1e-12 * c.radius) {
        k.kx = 0;
        k.ky = 0;
      }
      t.points.push_back(k);
      t.partition.push_back(c.partition);
    }
  }
}

inline Trajectory trajectory_from_points(GridSpec const &g, std::vector<KPoint> pts)
{
  Trajectory t;
  t.grid = g;
  t.points = std::move(pts);
  for (auto const &k : t.points) {
    Index const p = partition_of_kz(g, k.kz);
    if (p < 0 || p >= g.nz) {
      fail(Errc::invalid_argument, "kz = {} is not on a partition plane of the grid", k.kz);
    }
    t.partition.push_back(p);
  }
  return t;
}

/// Fully sampled Cartesian point set: every in-plane grid frequency on every partition.
inline Trajectory cartesian_trajectory(GridSpec const &g)
{
  std::vector<KPoint> pts;
  for (Index p = 0; p < g.nz; p++) {
    for (Index y = 0; y < g.ny; y++) {
      for (Index x = 0; x < g.nx; x++) {
        pts.push_back({double(x - g.nx / 2) / g.fov_x, double(y - g.ny / 2) / g.fov_y, partition_kz(g, p)});
      }
    }
  }
  return trajectory_from_points(g, std::move(pts));
}

namespace detail {

class CoverageMap
{
public:
  CoverageMap(GridSpec const &g, double kmax_p)
    : g_(g)
    , dk_(g.dk_xy())
    , covered_(g.nx * g.ny, 1)
  {
    for (Index y = 0; y < g.ny; y++) {
      for (Index x = 0; x < g.nx; x++) {
        if (std::hypot(cell_kx(x), cell_ky(y)) <= kmax_p) {
          covered_[x + g.nx * y] = 0;
          remaining_++;
        }
      }
    }
  }

  double cell_kx(Index x) const { return double(x - g_.nx / 2) / g_.fov_x; }
  double cell_ky(Index y) const { return double(y - g_.ny / 2) / g_.fov_y; }

  void mark(KPoint const &k)
  {
    double const lim = dk_ * (1.0 + 1e-9);
    Index const x0 = std::max<Index>(0, Index(std::floor((k.kx - lim) * g_.fov_x)) + g_.nx / 2);
    Index const x1 = std::min<Index>(g_.nx - 1, Index(std::ceil((k.kx + lim) * g_.fov_x)) + g_.nx / 2);
    Index const y0 = std::max<Index>(0, Index(std::floor((k.ky - lim) * g_.fov_y)) + g_.ny / 2);
    Index const y1 = std::min<Index>(g_.ny - 1, Index(std::ceil((k.ky + lim) * g_.fov_y)) + g_.ny / 2);
    for (Index y = y0; y <= y1; y++) {
      for (Index x = x0; x <= x1; x++) {
        auto &c = covered_[x + g_.nx * y];
        if (!c && std::hypot(cell_kx(x) - k.kx, cell_ky(y) - k.ky) <= lim) {
          c = 1;
          remaining_--;
        }
      }
    }
  }

  bool complete() const { return remaining_ == 0; }

private:
  GridSpec g_;
  double dk_;
  std::vector<std::uint8_t> covered_;
  Index remaining_ = 0;
};

} // namespace detail

/// Eccentric circle trajectory. Each partition starts with a circle whose rim
/// passes through k = 0, then receives randomly centred circles until every
/// Cartesian cell centre of its disc lies within one cell spacing of a sample.
inline Trajectory generate_eccentric(GridSpec const &grid, double radius_fraction, std::uint64_t seed,
                                     Index max_circles_per_partition = 200000)
{
  grid.validate();
  if (!(radius_fraction > 0.0 && radius_fraction <= 0.5)) {
    fail(Errc::invalid_argument, "radius_fraction must be in (0, 0.5], got {}", radius_fraction);
  }
  Trajectory traj;
  traj.grid = grid;
  traj.seed = seed;
  traj.radius_fraction = radius_fraction;
  double const R = radius_fraction * grid.kmax_xy();

  for (Index p = 0; p < grid.nz; p++) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(p)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double const kp = partition_kmax(grid, p);
    auto const emit = [&](double cx, double cy, double r, double phase0, detail::CoverageMap *cov) {
      double const dist = std::hypot(cx, cy);
      EccentricCircle c{p, cx, cy, r, circle_points(grid, dist, r), dist <= r, phase0};
      Trajectory one;
      one.grid = grid;
      one.circles = {c};
      build_points(one);
      if (cov) {
        for (auto const &k : one.points) {
          cov->mark(k);
        }
      }
      traj.circles.push_back(c);
    };

    if (R >= kp) {
      // Partition too small for the requested radius.
      emit(0.0, 0.0, kp > 0 ? std::min(R, kp) : R, 0.0, nullptr);
      continue;
    }
    detail::CoverageMap cov(grid, kp);
    {
      double const d = std::min(R, kp - R);
      double const a = 2.0 * std::numbers::pi * unif(rng);
      double cx = d * std::cos(a), cy = d * std::sin(a);
      while (std::hypot(cx, cy) > R) {
        cx = std::nextafter(cx, 0.0);
        cy = std::nextafter(cy, 0.0);
      }
      emit(cx, cy, R, a + std::numbers::pi, &cov);
    }
    Index added = 1;
    double const place = kp - R;
    while (!cov.complete()) {
      if (++added > max_circles_per_partition) {
        fail(Errc::degenerate, "partition {} not covered after {} circles", p, max_circles_per_partition);
      }
      // Uniform in the disc of admissible centres.
      double const rad = place * std::sqrt(unif(rng));
      double const a = 2.0 * std::numbers::pi * unif(rng);
      emit(rad * std::cos(a), rad * std::sin(a), R, 0.0, &cov);
    }
  }
  build_points(traj);
  return traj;
}

inline Index count_center_crossing(Trajectory const &t)
{
  return Index(std::count_if(t.circles.begin(), t.circles.end(), [](auto const &c) { return c.crosses_center; }));
}

/// Retrospective undersampling over whole circles. Centre-crossing circles
/// always survive; a random subset of the others fills up round(n / af).
inline Trajectory undersample(Trajectory const &traj, double af, std::uint64_t seed)
{
  Index const n = Index(traj.circles.size());
  Index const ncc = count_center_crossing(traj);
  if (n == 0) {
    fail(Errc::invalid_argument, "undersample needs a circle trajectory");
  }
  double const af_max = ncc > 0 ? double(n) / double(ncc) : double(n);
  Index const keep = Index(std::llround(double(n) / af));
  if (!(af >= 1.0) || keep < ncc || keep < 1) {
    fail(Errc::invalid_argument, "acceleration {} infeasible: {} circles, {} centre-crossing; feasible AF in [1, {:.4g}]",
         af, n, ncc, af_max);
  }
  std::vector<Index> others;
  for (Index i = 0; i < n; i++) {
    if (!traj.circles[i].crosses_center) {
      others.push_back(i);
    }
  }
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first (keep - ncc) entries form the subset.
  Index const take = keep - ncc;
  for (Index i = 0; i < take; i++) {
    std::uniform_int_distribution<Index> pick(i, Index(others.size()) - 1);
    std::swap(others[i], others[pick(rng)]);
  }
  std::vector<std::uint8_t> kept(n, 0);
  for (Index i = 0; i < n; i++) {
    kept[i] = traj.circles[i].crosses_center;
  }
  for (Index i = 0; i < take; i++) {
    kept[others[i]] = 1;
  }
  Trajectory out;
  out.grid = traj.grid;
  out.seed = traj.seed;
  out.radius_fraction = traj.radius_fraction;
  out.af_nominal = traj.af_nominal * af;
  for (Index i = 0; i < n; i++) {
    if (kept[i]) {
      out.circles.push_back(traj.circles[i]);
    }
  }
  build_points(out);
  return out;
}

/// Classic Hamming apodization over the ellipsoidal k-space radius.
inline SampleWeights hamming_weights(Trajectory const &t)
{
  SampleWeights w;
  w.values.reserve(t.points.size());
  double const ax = t.grid.kmax_x(), ay = t.grid.kmax_y(), az = t.grid.kmax_z();
  for (auto const &k : t.points) {
    double const r =
      std::min(1.0, std::sqrt((k.kx / ax) * (k.kx / ax) + (k.ky / ay) * (k.ky / ay) + (k.kz / az) * (k.kz / az)));
    w.values.push_back(0.54 + 0.46 * std::cos(std::numbers::pi * r));
  }
  return w;
}

} // namespace mrsi
