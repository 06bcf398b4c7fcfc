#include "helpers.hpp"

#include "mrsi/trajectory/voronoi.hpp"

#include <gtest/gtest.h>

using namespace mrsi;

namespace {

// Every Cartesian cell centre inside a partition disc must have a sample within dk.
Index uncovered_cells(Trajectory const &t)
{
  auto const &g = t.grid;
  double const dk = g.dk_xy();
  Index missing = 0;
  for (Index p = 0; p < g.nz; p++) {
    double const kp = partition_kmax(g, p);
    for (Index y = 0; y < g.ny; y++) {
      for (Index x = 0; x < g.nx; x++) {
        double const kx = double(x - g.nx / 2) / g.fov_x, ky = double(y - g.ny / 2) / g.fov_y;
        if (std::hypot(kx, ky) > kp) {
          continue;
        }
        double best = 1e300;
        for (Index j = 0; j < t.samples(); j++) {
          if (t.partition[j] == p) {
            best = std::min(best, std::hypot(t.points[j].kx - kx, t.points[j].ky - ky));
          }
        }
        missing += best > dk * (1 + 1e-9);
      }
    }
  }
  return missing;
}

} // namespace

TEST(Trajectory, ToyGridCoverageAndCentreCrossing)
{
  auto const g = test::grid(16, 16, 4);
  auto const t = generate_eccentric(g, 0.125, 42);
  EXPECT_EQ(uncovered_cells(t), 0);
  for (Index p = 0; p < g.nz; p++) {
    Index cc = 0;
    for (auto const &c : t.circles) {
      cc += c.partition == p && c.crosses_center;
    }
    EXPECT_GE(cc, 1) << "partition " << p;
  }
  for (auto const &c : t.circles) {
    EXPECT_LE(std::hypot(c.cx, c.cy) + c.radius, partition_kmax(g, c.partition) + 1e-12);
  }
}

TEST(Trajectory, CentreCrossingCircleSamplesTheOrigin)
{
  auto const g = test::grid(16, 16, 3);
  auto const t = generate_eccentric(g, 0.125, 1);
  for (Index p = 0; p < g.nz; p++) {
    bool found = false;
    for (Index j = 0; j < t.samples(); j++) {
      found |= t.partition[j] == p && t.points[j].kx == 0.0 && t.points[j].ky == 0.0;
    }
    EXPECT_TRUE(found) << "partition " << p;
  }
}

TEST(Trajectory, SeedDeterminism)
{
  auto const g = test::grid(12, 12, 2);
  auto const a = generate_eccentric(g, 0.2, 7), b = generate_eccentric(g, 0.2, 7), c = generate_eccentric(g, 0.2, 8);
  ASSERT_EQ(a.samples(), b.samples());
  for (Index j = 0; j < a.samples(); j++) {
    EXPECT_EQ(a.points[j].kx, b.points[j].kx);
    EXPECT_EQ(a.points[j].ky, b.points[j].ky);
  }
  bool differ = a.samples() != c.samples();
  for (Index j = 0; !differ && j < a.samples(); j++) {
    differ = a.points[j].kx != c.points[j].kx;
  }
  EXPECT_TRUE(differ);
}

TEST(Trajectory, TinyGridHasOneCentreCircle)
{
  auto const g = test::grid(2, 2, 1);
  auto const t = generate_eccentric(g, 0.125, 3);
  ASSERT_EQ(t.circles.size(), 1u);
  EXPECT_TRUE(t.circles[0].crosses_center);
}

TEST(Trajectory, NonSquareGridIsCovered)
{
  GridSpec g = test::grid(12, 20, 3);
  g.fov_x = 120;
  g.fov_y = 200;
  auto const t = generate_eccentric(g, 0.125, 4);
  EXPECT_EQ(uncovered_cells(t), 0);
}

TEST(Trajectory, RejectsBadRadius)
{
  EXPECT_THROW(generate_eccentric(test::grid(8, 8, 1), 0.0, 1), Error);
  EXPECT_THROW(generate_eccentric(test::grid(8, 8, 1), 0.7, 1), Error);
}

TEST(Undersample, KeepsCentreCirclesAndCount)
{
  auto const g = test::grid(24, 24, 3);
  auto const t = generate_eccentric(g, 0.125, 11);
  Index const n = Index(t.circles.size());
  for (double af : {1.0, 2.0, 3.0}) {
    auto const u = undersample(t, af, 5);
    EXPECT_EQ(Index(u.circles.size()), std::max<Index>(count_center_crossing(t), std::llround(n / af)));
    EXPECT_EQ(count_center_crossing(u), count_center_crossing(t));
    EXPECT_DOUBLE_EQ(u.af_nominal, af);
  }
  auto const a = undersample(t, 2.0, 5), b = undersample(t, 2.0, 5);
  ASSERT_EQ(a.circles.size(), b.circles.size());
  for (std::size_t i = 0; i < a.circles.size(); i++) {
    EXPECT_EQ(a.circles[i].cx, b.circles[i].cx);
  }
}

TEST(Undersample, InfeasibleFactorNamesRange)
{
  auto const t = generate_eccentric(test::grid(16, 16, 1), 0.125, 2);
  try {
    undersample(t, 1000.0, 1);
    FAIL();
  } catch (Error const &e) {
    EXPECT_EQ(e.code(), Errc::invalid_argument);
    EXPECT_NE(std::string(e.what()).find("feasible"), std::string::npos);
  }
  EXPECT_THROW(undersample(t, 0.5, 1), Error);
}

TEST(Hamming, CentreAndEdge)
{
  auto const g = test::grid(16, 16, 1);
  auto const t = trajectory_from_points(g, {{0, 0, 0}, {g.kmax_x(), 0, 0}, {0.5 * g.kmax_x(), 0, 0}, {1.0, 1.0, 0}});
  auto const w = hamming_weights(t);
  EXPECT_NEAR(w.values[0], 1.0, 1e-15);
  EXPECT_NEAR(w.values[1], 0.08, 1e-12);
  EXPECT_NEAR(w.values[2], 0.54, 1e-12);
  EXPECT_NEAR(w.values[3], 0.08, 1e-12);
}

TEST(Voronoi, TriangleDiscAreaAgainstSampling)
{
  using geom::P2;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 20; trial++) {
    P2 a{u(rng), u(rng)}, b{u(rng), u(rng)};
    double const r = 1.0;
    double const exact = geom::triangle_disc_area(a, b, r);
    // Grid quadrature of the signed area of (0, a, b) intersected with the disc.
    Index const n = 1200;
    double acc = 0;
    double const h = 2.0 * r / double(n);
    for (Index i = 0; i < n; i++) {
      for (Index j = 0; j < n; j++) {
        P2 p{-r + (i + 0.5) * h, -r + (j + 0.5) * h};
        if (geom::len(p) > r) {
          continue;
        }
        double const s = geom::cross(a, b);
        double const o1 = geom::cross(a, p) * s, o2 = geom::cross(b - a, p - a) * s, o3 = geom::cross(p, b) * s;
        bool const inside = o1 >= 0 && o2 >= 0 && o3 >= 0;
        if (inside) {
          acc += (s > 0 ? 1 : -1) * h * h;
        }
      }
    }
    EXPECT_NEAR(exact, acc, 5e-3);
  }
}

TEST(Voronoi, AreasTileTheDisc)
{
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<geom::P2> sites;
  while (sites.size() < 300) {
    geom::P2 p{u(rng), u(rng)};
    if (geom::len(p) < 1) {
      sites.push_back(p);
    }
  }
  auto const a = geom::voronoi_disc_areas(sites, 1.05);
  double total = 0;
  for (double v : a) {
    EXPECT_GT(v, 0);
    total += v;
  }
  EXPECT_NEAR(total, std::numbers::pi * 1.05 * 1.05, 1e-9);
}

TEST(Voronoi, CartesianLatticeCellsAreUnitCells)
{
  auto const g = test::grid(16, 16, 1);
  auto const t = cartesian_trajectory(g);
  auto const w = voronoi_dcf(t);
  double const dk = g.dk_xy();
  double const r = g.kmax_xy() * 0.7;
  for (Index j = 0; j < t.samples(); j++) {
    if (std::hypot(t.points[j].kx, t.points[j].ky) < r) {
      EXPECT_NEAR(w.values[j], dk * dk, 1e-12 * dk * dk);
    }
  }
}

TEST(Voronoi, DuplicatesShareTheirCell)
{
  auto const g = test::grid(8, 8, 1);
  std::vector<KPoint> pts{{0, 0, 0}, {0, 0, 0}, {0.02, 0, 0}, {-0.02, 0.01, 0}};
  auto const w = voronoi_dcf(trajectory_from_points(g, pts));
  EXPECT_DOUBLE_EQ(w.values[0], w.values[1]);
  double const r = partition_kmax(g, 0) + g.dk_xy() / 2;
  EXPECT_NEAR(w.values[0] + w.values[1] + w.values[2] + w.values[3], std::numbers::pi * r * r, 1e-12);
}

TEST(Voronoi, SingleSamplePartitionTakesTheDisc)
{
  auto const g = test::grid(8, 8, 1);
  auto const w = voronoi_dcf(trajectory_from_points(g, {{0.01, 0, 0}}));
  double const r = partition_kmax(g, 0) + g.dk_xy() / 2;
  EXPECT_NEAR(w.values[0], std::numbers::pi * r * r, 1e-15);
}
