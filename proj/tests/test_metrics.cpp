#include "helpers.hpp"

#include "mrsi/metrics/metrics.hpp"

#include <gtest/gtest.h>

using namespace mrsi;

namespace {

std::vector<double> random_image(Index n, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> v(n);
  for (auto &e : v) {
    e = u(rng);
  }
  return v;
}

// Direct per-pixel SSIM with an explicit 2D window sum.
double ssim_direct(std::vector<double> const &a, std::vector<double> const &b, Index nx, Index ny)
{
  double const c1 = 1e-4, c2 = 9e-4;
  double total = 0;
  for (Index y = 0; y < ny; y++) {
    for (Index x = 0; x < nx; x++) {
      double W = 0, sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (Index dy = -5; dy <= 5; dy++) {
        for (Index dx = -5; dx <= 5; dx++) {
          Index const xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= nx || yy >= ny) {
            continue;
          }
          double const w = std::exp(-(dx * dx + dy * dy) / (2 * 1.5 * 1.5));
          double const va = a[xx + nx * yy], vb = b[xx + nx * yy];
          W += w;
          sa += w * va;
          sb += w * vb;
          saa += w * va * va;
          sbb += w * vb * vb;
          sab += w * va * vb;
        }
      }
      double const ma = sa / W, mb = sb / W;
      double const va = saa / W - ma * ma, vb = sbb / W - mb * mb, cab = sab / W - ma * mb;
      total += (2 * ma * mb + c1) * (2 * cab + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
  }
  return total / double(nx * ny);
}

} // namespace

TEST(Nrmse, Definitions)
{
  auto const ref = test::random_cx(100, 1);
  EXPECT_EQ(nrmse(ref, ref), 0.0);
  std::vector<Cx> zero(100, 0.0);
  EXPECT_DOUBLE_EQ(nrmse(zero, ref), 1.0);
  auto eps = test::random_cx(100, 2);
  double const s = 0.1 * std::sqrt(norm2(ref) / norm2(eps));
  std::vector<Cx> pred(100);
  for (Index i = 0; i < 100; i++) {
    pred[i] = ref[i] + s * eps[i];
  }
  EXPECT_NEAR(nrmse(pred, ref), 0.1, 1e-12);
  EXPECT_THROW(nrmse(ref, zero), Error);
}

TEST(Ssim, IdentityAndConstants)
{
  auto const a = random_image(16 * 12 * 2, 1);
  EXPECT_NEAR(ssim(a, a, 16, 12, 2), 1.0, 1e-12);
  std::vector<double> ones(64, 1.0), zeros(64, 0.0);
  EXPECT_NEAR(ssim(ones, zeros, 8, 8, 1), 1e-4 / (1 + 1e-4), 1e-15);
}

TEST(Ssim, SymmetricAndBounded)
{
  auto const a = random_image(20 * 20, 2), b = random_image(20 * 20, 3);
  double const s = ssim(a, b, 20, 20, 1);
  EXPECT_NEAR(s, ssim(b, a, 20, 20, 1), 1e-12);
  EXPECT_LE(std::abs(s), 1.0);
}

TEST(Ssim, MatchesDirectWindowSum)
{
  auto const a = random_image(17 * 13, 4), b = random_image(17 * 13, 5);
  EXPECT_NEAR(ssim(a, b, 17, 13, 1), ssim_direct(a, b, 17, 13), 1e-12);
}

TEST(Ssim, GradientMatchesFiniteDifferences)
{
  Index const nx = 6, ny = 6, nz = 2;
  auto a = random_image(nx * ny * nz, 6);
  auto const b = random_image(nx * ny * nz, 7);
  std::vector<double> g(a.size());
  ssim(a, b, nx, ny, nz, {}, g);
  double const h = 1e-6;
  for (std::size_t i = 0; i < a.size(); i++) {
    double const keep = a[i];
    a[i] = keep + h;
    double const up = ssim(a, b, nx, ny, nz);
    a[i] = keep - h;
    double const dn = ssim(a, b, nx, ny, nz);
    a[i] = keep;
    double const fd = (up - dn) / (2 * h);
    EXPECT_NEAR(g[i], fd, 1e-4 * std::max(std::abs(fd), 1e-3)) << i;
  }
}

TEST(Pearson, AffineAndSign)
{
  auto const a = random_image(50, 8);
  std::vector<double> b(50), c(50);
  for (int i = 0; i < 50; i++) {
    b[i] = 2 * a[i] + 3;
    c[i] = -a[i];
  }
  EXPECT_NEAR(pearson_cc(a, b), 1.0, 1e-12);
  EXPECT_NEAR(pearson_cc(a, c), -1.0, 1e-12);
  std::vector<double> flat(50, 1.0);
  EXPECT_THROW(pearson_cc(a, flat), Error);
}

TEST(Pearson, IndependentSamplesAreUncorrelated)
{
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  std::vector<double> a(10000), b(10000);
  for (int i = 0; i < 10000; i++) {
    a[i] = g(rng);
    b[i] = g(rng);
  }
  EXPECT_LT(std::abs(pearson_cc(a, b)), 0.05);
}

TEST(BlandAltman, ClosedForms)
{
  auto const a = random_image(30, 10);
  auto const r0 = bland_altman(a, a);
  EXPECT_EQ(r0.bias, 0.0);
  EXPECT_EQ(r0.loa_low, 0.0);
  std::vector<double> b(30);
  for (int i = 0; i < 30; i++) {
    b[i] = a[i] - 1.0;
  }
  auto const r1 = bland_altman(a, b);
  EXPECT_NEAR(r1.bias, 1.0, 1e-12);
  EXPECT_NEAR(r1.loa_low, 1.0, 1e-12);
  EXPECT_NEAR(r1.loa_high, 1.0, 1e-12);
  EXPECT_THROW(bland_altman(a, std::vector<double>(29)), Error);
}

TEST(BlandAltman, StatisticalLimits)
{
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.5, 1.0);
  std::vector<double> a(100000), b(100000, 0.0);
  for (auto &v : a) {
    v = g(rng);
  }
  auto const r = bland_altman(a, b);
  EXPECT_NEAR(r.bias, 0.5, 0.02);
  EXPECT_NEAR(r.loa_high - r.bias, 1.96, 0.05);
}
