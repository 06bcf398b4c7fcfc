#include "helpers.hpp"

#include "mrsi/tgv/tgv_er.hpp"
#include "mrsi/trajectory/voronoi.hpp"

#include <gtest/gtest.h>

using namespace mrsi;

namespace {

std::vector<double> random_real(Index n, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (auto &e : v) {
    e = g(rng);
  }
  return v;
}

double dotr(std::span<double const> a, std::span<double const> b)
{
  double s = 0;
  for (std::size_t i = 0; i < a.size(); i++) {
    s += a[i] * b[i];
  }
  return s;
}

double nrmse_real(std::span<double const> a, std::span<double const> b)
{
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); i++) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

} // namespace

class TgvShapes : public ::testing::TestWithParam<std::array<Index, 3>>
{};

TEST_P(TgvShapes, OperatorAdjoints)
{
  auto const [nx, ny, nz] = GetParam();
  TgvGrid const tg(test::grid(nx, ny, nz));
  Index const n = tg.voxels(), nd = tg.dims(), ns = tg.sym();
  auto const u = random_real(n, 1), w = random_real(nd * n, 2), p = random_real(nd * n, 3), q = random_real(ns * n, 4);
  std::vector<double> ku(nd * n), kq(ns * n), tu(n), tw(nd * n);
  tg.apply_k(u.data(), w.data(), ku.data(), kq.data());
  tg.apply_kt(p.data(), q.data(), tu.data(), tw.data());
  // Symmetric-tensor inner product counts off-diagonal entries twice.
  double qq = 0;
  for (Index c = 0; c < ns; c++) {
    for (Index i = 0; i < n; i++) {
      qq += (c >= nd ? 2.0 : 1.0) * kq[c * n + i] * q[c * n + i];
    }
  }
  double const lhs = dotr(ku, p) + qq;
  double const rhs = dotr(u, tu) + dotr(w, tw);
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs));
}

TEST_P(TgvShapes, ConstantsHaveZeroTgv)
{
  auto const [nx, ny, nz] = GetParam();
  auto const g = test::grid(nx, ny, nz);
  TgvGrid const tg(g);
  std::vector<double> c(g.voxels(), 3.5), zero(tg.dims() * g.voxels(), 0.0);
  EXPECT_EQ(tg.energy(c.data(), zero.data(), {}), 0.0);
  auto const r = random_real(g.voxels(), 9);
  EXPECT_GT(tg.energy(r.data(), zero.data(), {}), 0.0);
}

INSTANTIATE_TEST_SUITE_P(Shapes, TgvShapes,
                         ::testing::Values(std::array<Index, 3>{8, 7, 1}, std::array<Index, 3>{6, 5, 4},
                                           std::array<Index, 3>{9, 1, 1}));

TEST(Tgv2, ZeroLambdaIsIdentity)
{
  ComplexVolume v(test::grid(8, 8, 2));
  v.data = test::random_cx(v.size(), 3);
  auto const out = tgv2_denoise(v, 0.0, 50);
  EXPECT_EQ(out.data, v.data);
}

TEST(Tgv2, ConstantInputUnchanged)
{
  ComplexVolume v(test::grid(8, 8, 2));
  std::fill(v.data.begin(), v.data.end(), Cx(1.5, -0.5));
  auto const out = tgv2_denoise(v, 0.7, 50);
  for (auto const &e : out.data) {
    EXPECT_NEAR(std::abs(e - Cx(1.5, -0.5)), 0.0, 1e-12);
  }
}

TEST(Tgv2, CommutesWithAddingAConstant)
{
  auto const g = test::grid(12, 10, 1);
  ComplexVolume v(g), w(g);
  v.data = test::random_cx(v.size(), 5);
  for (Index i = 0; i < v.size(); i++) {
    w.data[i] = v.data[i] + Cx(4.0, -2.0);
  }
  auto const a = tgv2_denoise(v, 0.3, 60), b = tgv2_denoise(w, 0.3, 60);
  for (Index i = 0; i < v.size(); i++) {
    EXPECT_NEAR(std::abs(b.data[i] - a.data[i] - Cx(4.0, -2.0)), 0.0, 1e-10);
  }
}

TEST(Tgv2, GapIsMonotoneAndShrinks)
{
  auto const g = test::grid(16, 16, 1);
  TgvGrid const tg(g);
  auto const y = random_real(g.voxels(), 7);
  auto const r = tgv2_solve(tg, y, 0.5, 300);
  for (std::size_t i = 1; i < r.gap.size(); i++) {
    EXPECT_LE(r.gap[i], r.gap[i - 1] + 1e-10);
  }
  EXPECT_GE(r.gap.back(), -1e-9);
  EXPECT_LT(r.gap.back(), 0.05 * r.gap.front());
}

TEST(Tgv2, DenoisesPiecewiseAffineRamp)
{
  auto const g = test::grid(32, 32, 1);
  TgvGrid const tg(g);
  std::vector<double> clean(g.voxels()), noisy(g.voxels());
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (Index y = 0; y < 32; y++) {
    for (Index x = 0; x < 32; x++) {
      double const v = x < 16 ? 0.5 + 0.03 * x : 1.5 - 0.02 * (x - 16) + 0.01 * y;
      clean[voxel_index(g, x, y, 0)] = v;
      noisy[voxel_index(g, x, y, 0)] = v + noise(rng);
    }
  }
  auto const r = tgv2_solve(tg, noisy, 0.08, 300);
  EXPECT_LT(nrmse_real(r.u, clean), 0.6 * nrmse_real(noisy, clean));
}

TEST(Tgv2, WarmStartIsNeverWorse)
{
  auto const g = test::grid(10, 10, 1);
  TgvGrid const tg(g);
  auto const y = random_real(g.voxels(), 8);
  auto const first = tgv2_solve(tg, y, 0.4, 100);
  auto const again = tgv2_solve(tg, y, 0.4, 3, {}, first.u, first.w);
  EXPECT_LE(again.primal, first.primal);
}

namespace {

struct LowRankProblem
{
  GridSpec g;
  Trajectory traj;
  ImageTimeSeries truth;
  CoilKSpaceSeries data;
};

// Exact rank-2 series: two smooth spatial maps with decaying temporal signatures.
LowRankProblem rank2_problem(Index nx, Index ny, Index nz, Index T)
{
  LowRankProblem p;
  p.g = test::grid(nx, ny, nz);
  p.g.n_time = T;
  p.traj = cartesian_trajectory(p.g);
  p.truth = ImageTimeSeries(p.g);
  for (Index t = 0; t < T; t++) {
    Cx const v1 = std::exp(-0.1 * t) * std::polar(1.0, 0.3 * t), v2 = std::exp(-0.05 * t) * std::polar(1.0, -0.7 * t);
    for (Index z = 0; z < nz; z++) {
      for (Index y = 0; y < ny; y++) {
        for (Index x = 0; x < nx; x++) {
          double const a = std::exp(-(std::pow(x - nx / 2.0, 2) + std::pow(y - ny / 2.0, 2)) / 20.0);
          double const b = std::cos(0.4 * x) * std::sin(0.3 * y + 0.5 * z) + 0.2;
          p.truth.frame(t)[voxel_index(p.g, x, y, z)] = a * v1 + b * v2;
        }
      }
    }
  }
  EncodingOperator op(p.traj, SensitivityMaps::identity(p.g));
  p.data = op.forward(p.truth, p.traj.points);
  return p;
}

} // namespace

TEST(TgvEr, ExactRankTwoRecovery)
{
  auto const p = rank2_problem(16, 16, 2, 8);
  EncodingOperator op(p.traj, SensitivityMaps::identity(p.g));
  TgvConfig cfg;
  cfg.lambda = 0;
  cfg.rank = 2;
  cfg.outer_iters = 30;
  auto const dcf = inversion_dcf(voronoi_dcf(p.traj), p.g);
  auto const r = tgv_er_reconstruct(p.data, op, nullptr, dcf, cfg);
  auto const rec = r.state.f.product();
  EXPECT_LT(test::rel_err(rec.data, p.truth.data), 1e-3);
  EXPECT_EQ(r.state.f.rank, 2);
  EXPECT_EQ(Index(r.state.f.V.size()), 2 * 8);
}

TEST(TgvEr, ZeroDataGivesZeroFactors)
{
  auto p = rank2_problem(8, 8, 1, 6);
  std::fill(p.data.data.begin(), p.data.data.end(), Cx(0));
  EncodingOperator op(p.traj, SensitivityMaps::identity(p.g));
  TgvConfig cfg;
  cfg.lambda = 1e-2;
  cfg.rank = 2;
  cfg.outer_iters = 3;
  LipidMask mask(p.g);
  mask.mask[0] = 1;
  auto const r = tgv_er_reconstruct(p.data, op, &mask, inversion_dcf(voronoi_dcf(p.traj), p.g), cfg);
  EXPECT_EQ(max_abs(r.state.f.product().data), 0.0);
  EXPECT_EQ(max_abs(r.state.L.data), 0.0);
}

TEST(TgvEr, RankLargerThanTimepointsIsRejected)
{
  auto const p = rank2_problem(8, 8, 1, 4);
  EncodingOperator op(p.traj, SensitivityMaps::identity(p.g));
  TgvConfig cfg;
  cfg.rank = 5;
  EXPECT_THROW(tgv_er_reconstruct(p.data, op, nullptr, SampleWeights::ones(p.traj.samples()), cfg), Error);
}

namespace {

// Direct TGV value with a given field, written out for a 2D grid.
double tgv_direct_2d(GridSpec const &g, std::vector<double> const &u, std::vector<double> const &w, TgvWeights a)
{
  auto at = [&](std::vector<double> const &v, Index c, Index x, Index y) { return v[c * g.voxels() + x + g.nx * y]; };
  double first = 0, second = 0;
  for (Index y = 0; y < g.ny; y++) {
    for (Index x = 0; x < g.nx; x++) {
      double const gx = x + 1 < g.nx ? u[x + 1 + g.nx * y] - u[x + g.nx * y] : 0;
      double const gy = y + 1 < g.ny ? u[x + g.nx * (y + 1)] - u[x + g.nx * y] : 0;
      first += std::hypot(gx - at(w, 0, x, y), gy - at(w, 1, x, y));
      auto bx = [&](Index c) {
        return (x + 1 < g.nx ? at(w, c, x, y) : 0) - (x > 0 ? at(w, c, x - 1, y) : 0);
      };
      auto by = [&](Index c) {
        return (y + 1 < g.ny ? at(w, c, x, y) : 0) - (y > 0 ? at(w, c, x, y - 1) : 0);
      };
      double const exx = bx(0), eyy = by(1), exy = 0.5 * (by(0) + bx(1));
      second += std::sqrt(exx * exx + eyy * eyy + 2 * exy * exy);
    }
  }
  return a.alpha1 * first + a.alpha0 * second;
}

} // namespace

TEST(TgvEr, ObjectiveMatchesIndependentEvaluation)
{
  auto g = test::grid(10, 8, 1);
  g.n_time = 5;
  auto const traj = generate_eccentric(g, 0.25, 3);
  auto maps = SensitivityMaps(g, 2);
  auto const mv = test::random_cx(2 * g.voxels(), 1);
  std::copy(mv.begin(), mv.end(), maps.data.begin());
  maps.normalize();
  B0Map b0(g);
  for (Index v = 0; v < g.voxels(); v++) {
    b0.df[v] = 15.0 * std::cos(double(v));
  }
  EncodingOperator op(traj, maps, b0, hamming_weights(traj));
  CoilKSpaceSeries s(GridSpec{g.nx, g.ny, g.nz, g.fov_x, g.fov_y, g.fov_z, g.dwell, g.n_time, 2}, traj.points);
  s.data = test::random_cx(Index(s.data.size()), 2);

  TgvErState st;
  st.f = LowRankFactors(g, 2);
  st.f.U = test::random_cx(2 * g.voxels(), 3);
  st.f.V = test::random_cx(2 * g.n_time, 4);
  st.L = ImageTimeSeries(g);
  st.L.data = test::random_cx(Index(st.L.data.size()), 5);
  st.w_re.assign(2, std::vector<double>(2 * g.voxels()));
  st.w_im.assign(2, std::vector<double>(2 * g.voxels()));
  std::mt19937_64 rng(6);
  std::normal_distribution<double> gauss;
  for (auto *w : {&st.w_re, &st.w_im}) {
    for (auto &c : *w) {
      for (auto &v : c) {
        v = gauss(rng);
      }
    }
  }
  double const lam = 0.37;
  auto const o = objective_value(s, st, op, lam);

  // Double entry: full-series forward model, then Hamming applied to the residual.
  auto x = st.f.product();
  for (std::size_t i = 0; i < x.data.size(); i++) {
    x.data[i] += st.L.data[i];
  }
  auto const pred = EncodingOperator(traj, maps, b0).forward(x, traj.points);
  auto const w = hamming_weights(traj);
  double data = 0;
  for (Index c = 0; c < 2; c++) {
    for (Index t = 0; t < g.n_time; t++) {
      for (Index j = 0; j < traj.samples(); j++) {
        data += std::norm(w.values[j] * (s.readout(c, t)[j] - pred.readout(c, t)[j]));
      }
    }
  }
  double reg = 0;
  for (Index k = 0; k < 2; k++) {
    std::vector<double> re(g.voxels()), im(g.voxels());
    for (Index i = 0; i < g.voxels(); i++) {
      re[i] = st.f.u(k)[i].real();
      im[i] = st.f.u(k)[i].imag();
    }
    reg += tgv_direct_2d(g, re, st.w_re[k], {}) + tgv_direct_2d(g, im, st.w_im[k], {});
  }
  EXPECT_NEAR(o.data, data, 1e-12 * data);
  EXPECT_NEAR(o.reg, lam * reg, 1e-12 * lam * reg);

  TgvErState zero = st;
  std::fill(zero.f.U.begin(), zero.f.U.end(), Cx(0));
  std::fill(zero.L.data.begin(), zero.L.data.end(), Cx(0));
  for (auto *ww : {&zero.w_re, &zero.w_im}) {
    for (auto &c : *ww) {
      std::fill(c.begin(), c.end(), 0.0);
    }
  }
  double ws = 0;
  for (Index c = 0; c < 2; c++) {
    for (Index t = 0; t < g.n_time; t++) {
      for (Index j = 0; j < traj.samples(); j++) {
        ws += std::norm(w.values[j] * s.readout(c, t)[j]);
      }
    }
  }
  EXPECT_NEAR(objective_value(s, zero, op, lam).total(), ws, 1e-12 * ws);
}

TEST(TgvEr, ObjectiveNonIncreasingWithLipidsAndB0)
{
  auto g = test::grid(12, 12, 2);
  g.n_time = 6;
  auto const traj = undersample(generate_eccentric(g, 0.2, 5), 2.0, 1);
  ImageTimeSeries x(g);
  x.data = test::random_cx(Index(x.data.size()), 7);
  B0Map b0(g);
  for (Index v = 0; v < g.voxels(); v++) {
    b0.df[v] = 10.0 * std::sin(0.3 * double(v));
  }
  EncodingOperator sim(traj, SensitivityMaps::identity(g), b0);
  auto const s = sim.forward(x, traj.points);
  EncodingOperator op(traj, SensitivityMaps::identity(g), b0, hamming_weights(traj));
  LipidMask mask(g);
  for (Index i = 0; i < g.voxels(); i += 7) {
    mask.mask[i] = 1;
  }
  TgvConfig cfg;
  cfg.lambda = 1e-3;
  cfg.rank = 3;
  cfg.outer_iters = 8;
  cfg.pd_iters = 20;
  auto const r = tgv_er_reconstruct(s, op, &mask, inversion_dcf(voronoi_dcf(traj), g), cfg);
  for (std::size_t i = 1; i < r.trace.size(); i++) {
    EXPECT_LE(r.trace[i].objective, r.trace[i - 1].objective * (1 + 1e-8)) << "iteration " << i;
  }
  for (Index v = 0; v < g.voxels(); v++) {
    if (!mask.mask[v]) {
      for (Index t = 0; t < g.n_time; t++) {
        EXPECT_EQ(r.state.L.frame(t)[v], Cx(0));
      }
    }
  }
  auto const direct = objective_value(s, r.state, op, r.lambda_eff);
  EXPECT_NEAR(direct.total(), r.trace.back().objective, 1e-9 * direct.total());
}

TEST(WaterRecon, CartesianRecoveryWithoutRegularization)
{
  auto const g = test::grid(16, 16, 2);
  auto const traj = cartesian_trajectory(g);
  auto const maps = SensitivityMaps::identity(g);
  EncodingOperator op(traj, maps);
  ComplexVolume truth(g);
  truth.data = test::random_cx(g.voxels(), 3);
  std::vector<Cx> s(op.frame_samples());
  op.forward_frame(truth.data, 0, s);
  TgvConfig cfg;
  cfg.lambda = 0;
  auto const rec = water_reconstruct_per_timepoint(s, 0, op, inversion_dcf(voronoi_dcf(traj), g), cfg);
  EXPECT_LT(test::rel_err(rec.data, truth.data), 1e-3);
  std::vector<Cx> zero(op.frame_samples(), Cx(0));
  cfg.lambda = 1e-3;
  auto const z = water_reconstruct_per_timepoint(zero, 0, op, inversion_dcf(voronoi_dcf(traj), g), cfg);
  EXPECT_EQ(max_abs(z.data), 0.0);
}

TEST(WaterRecon, ObjectiveNeverIncreases)
{
  auto g = test::grid(12, 12, 1);
  auto const traj = undersample(generate_eccentric(g, 0.2, 2), 2.0, 3);
  EncodingOperator op(traj, SensitivityMaps::identity(g), std::nullopt, hamming_weights(traj));
  auto const s = test::random_cx(op.frame_samples(), 4);
  TgvConfig cfg;
  cfg.lambda = 1e-2;
  cfg.outer_iters = 15;
  std::vector<double> trace;
  water_reconstruct_per_timepoint(s, 0, op, inversion_dcf(voronoi_dcf(traj), g), cfg, &trace);
  for (std::size_t i = 1; i < trace.size(); i++) {
    EXPECT_LE(trace[i], trace[i - 1]);
  }
}
