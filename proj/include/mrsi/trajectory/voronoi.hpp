#pragma once

#include "mrsi/core/parallel.hpp"
#include "mrsi/trajectory/trajectory.hpp"

#include <unordered_map>

namespace mrsi {

namespace geom {

struct P2
{
  double x = 0, y = 0;
};

inline P2 operator-(P2 a, P2 b) { return {a.x - b.x, a.y - b.y}; }
inline P2 operator+(P2 a, P2 b) { return {a.x + b.x, a.y + b.y}; }
inline P2 operator*(double s, P2 a) { return {s * a.x, s * a.y}; }
inline double cross(P2 a, P2 b) { return a.x * b.y - a.y * b.x; }
inline double dotp(P2 a, P2 b) { return a.x * b.x + a.y * b.y; }
inline double len(P2 a) { return std::hypot(a.x, a.y); }

using Polygon = std::vector<P2>;

/// Keep the part of a convex polygon where dot(p, n) <= c.
inline Polygon clip(Polygon const &poly, P2 n, double c)
{
  Polygon out;
  std::size_t const m = poly.size();
  for (std::size_t i = 0; i < m; i++) {
    P2 const a = poly[i], b = poly[(i + 1) % m];
    double const da = dotp(a, n) - c, db = dotp(b, n) - c;
    if (da <= 0) {
      out.push_back(a);
    }
    if ((da < 0 && db > 0) || (da > 0 && db < 0)) {
      double const t = da / (da - db);
      out.push_back(a + t * (b - a));
    }
  }
  return out;
}

/// Signed area of triangle (origin, a, b) intersected with the disc |p| <= r.
inline double triangle_disc_area(P2 a, P2 b, double r)
{
  // Split segment ab at its crossings with the circle.
  P2 const d = b - a;
  double const A = dotp(d, d);
  double ts[4] = {0.0, 0.0, 0.0, 1.0};
  int nt = 1;
  if (A > 0) {
    double const B = 2 * dotp(a, d);
    double const C = dotp(a, a) - r * r;
    double const disc = B * B - 4 * A * C;
    if (disc > 0) {
      double const sq = std::sqrt(disc);
      double const t1 = (-B - sq) / (2 * A), t2 = (-B + sq) / (2 * A);
      if (t1 > 0 && t1 < 1) {
        ts[nt++] = t1;
      }
      if (t2 > 0 && t2 < 1) {
        ts[nt++] = t2;
      }
    }
  }
  ts[nt++] = 1.0;
  double area = 0;
  for (int i = 0; i + 1 < nt; i++) {
    P2 const p = a + ts[i] * d, q = a + ts[i + 1] * d;
    P2 const mid = 0.5 * (p + q);
    if (dotp(mid, mid) <= r * r) {
      area += 0.5 * cross(p, q);
    } else {
      area += 0.5 * r * r * std::atan2(cross(p, q), dotp(p, q));
    }
  }
  return area;
}

/// Exact area of a convex polygon intersected with a disc centred at the origin.
inline double polygon_disc_area(Polygon const &poly, double r)
{
  double s = 0;
  for (std::size_t i = 0; i < poly.size(); i++) {
    s += triangle_disc_area(poly[i], poly[(i + 1) % poly.size()], r);
  }
  return std::abs(s);
}

/// Voronoi cell areas of distinct sites, each cell clipped to the disc of
/// radius `r` about the origin. Sites outside the disc get the clipped area too.
inline std::vector<double> voronoi_disc_areas(std::vector<P2> const &sites, double r)
{
  Index const n = Index(sites.size());
  std::vector<double> areas(n, 0.0);
  if (n == 0) {
    return areas;
  }
  double half = r;
  for (auto const &s : sites) {
    half = std::max({half, std::abs(s.x), std::abs(s.y)});
  }
  half *= 1.01;
  if (n == 1) {
    areas[0] = std::numbers::pi * r * r;
    return areas;
  }

  // Uniform bucket grid for nearest-first neighbour enumeration.
  Index const nb = std::max<Index>(1, Index(std::sqrt(double(n) / 2.0)));
  double const cell = 2 * half / double(nb);
  auto const bucket = [&](double v) { return std::clamp<Index>(Index((v + half) / cell), 0, nb - 1); };
  std::vector<std::vector<Index>> buckets(nb * nb);
  for (Index i = 0; i < n; i++) {
    buckets[bucket(sites[i].x) + nb * bucket(sites[i].y)].push_back(i);
  }

  parallel_for(n, [&](Index i) {
    P2 const s = sites[i];
    Polygon poly{{-half, -half}, {half, -half}, {half, half}, {-half, half}};
    Index const bx = bucket(s.x), by = bucket(s.y);
    for (Index ring = 0; ring < nb; ring++) {
      // Any site in this ring is at least (ring - 1) * cell away.
      double reach = 0;
      for (auto const &v : poly) {
        reach = std::max(reach, len(v - s));
      }
      if (ring >= 2 && double(ring - 1) * cell > 2 * reach) {
        break;
      }
      for (Index yy = by - ring; yy <= by + ring; yy++) {
        for (Index xx = bx - ring; xx <= bx + ring; xx++) {
          if (std::max(std::abs(xx - bx), std::abs(yy - by)) != ring || xx < 0 || yy < 0 || xx >= nb || yy >= nb) {
            continue;
          }
          for (Index j : buckets[xx + nb * yy]) {
            if (j == i) {
              continue;
            }
            P2 const nrm = sites[j] - s;
            double const c = dotp(nrm, 0.5 * (sites[j] + s));
            poly = clip(poly, nrm, c);
          }
        }
      }
    }
    areas[i] = polygon_disc_area(poly, r);
  });
  return areas;
}

} // namespace geom

/// Density compensation from per-partition Voronoi cell areas (cycles^2/mm^2).
/// Cells are clipped to the disc of radius kmax_partition + dk/2; coincident
/// samples share their cell equally.
inline SampleWeights voronoi_dcf(Trajectory const &t)
{
  SampleWeights w;
  w.values.assign(t.points.size(), 0.0);
  double const dk = t.grid.dk_xy();
  std::unordered_map<Index, std::vector<Index>> by_part;
  for (Index j = 0; j < t.samples(); j++) {
    by_part[t.partition[j]].push_back(j);
  }
  for (auto &[p, idx] : by_part) {
    double const r = partition_kmax(t.grid, p) + dk / 2;
    double const tol = 1e-12 * std::max(r, 1e-300);
    // Coalesce coincident samples.
    std::vector<Index> order = idx;
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
      auto const &A = t.points[a];
      auto const &B = t.points[b];
      return A.kx < B.kx || (A.kx == B.kx && A.ky < B.ky);
    });
    std::vector<Index> group(t.samples(), -1);
    std::vector<geom::P2> sites;
    std::vector<Index> mult;
    for (std::size_t a = 0; a < order.size(); a++) {
      Index const ja = order[a];
      if (group[ja] >= 0) {
        continue;
      }
      Index const g = Index(sites.size());
      group[ja] = g;
      sites.push_back({t.points[ja].kx, t.points[ja].ky});
      mult.push_back(1);
      for (std::size_t b = a + 1; b < order.size(); b++) {
        Index const jb = order[b];
        if (t.points[jb].kx - t.points[ja].kx > tol) {
          break;
        }
        if (group[jb] < 0 && std::abs(t.points[jb].ky - t.points[ja].ky) <= tol) {
          group[jb] = g;
          mult[g]++;
        }
      }
    }
    std::vector<double> areas;
    if (sites.size() == 1) {
      areas = {std::numbers::pi * r * r};
    } else {
      areas = geom::voronoi_disc_areas(sites, r);
    }
    for (Index j : idx) {
      w.values[j] = areas[group[j]] / double(mult[group[j]]);
    }
  }
  return w;
}

/// Scale cell areas so that F^H diag(w) F is the identity for full Cartesian sampling.
inline SampleWeights inversion_dcf(SampleWeights const &areas, GridSpec const &g)
{
  double const s = g.fov_x * g.fov_y / double(g.voxels());
  SampleWeights out = areas;
  for (auto &v : out.values) {
    v *= s;
  }
  return out;
}

} // namespace mrsi
