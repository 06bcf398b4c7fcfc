#pragma once

#include "mrsi/core/log.hpp"
#include "mrsi/encoding/encode.hpp"
#include "mrsi/nuisance/lipid.hpp"
#include "mrsi/tgv/tgv2.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace mrsi {

struct TgvConfig
{
  double lambda = 3e-4;
  Index rank = 40;
  Index outer_iters = 30;
  Index pd_iters = 50;
  TgvWeights weights;
  double step_safety = 1.1;
  // Multiply lambda by |A|^2 max|x0| so the weight is independent of data scaling.
  bool scale_lambda = true;

  void validate() const
  {
    if (!(lambda >= 0)) {
      fail(Errc::invalid_argument, "tgv.lambda must be >= 0, got {}", lambda);
    }
    if (rank < 1 || outer_iters < 1 || pd_iters < 1) {
      fail(Errc::invalid_argument, "tgv rank and iteration counts must be >= 1");
    }
    if (!(weights.alpha0 > 0 && weights.alpha1 > 0)) {
      fail(Errc::invalid_argument, "tgv alpha weights must be positive");
    }
    if (!(step_safety >= 1.0)) {
      fail(Errc::invalid_argument, "tgv.step_safety must be >= 1");
    }
  }
};

/// x(r, t) = sum_k U_k(r) V(k, t)
struct LowRankFactors
{
  GridSpec grid; // n_time = T
  Index rank = 0;
  std::vector<Cx> U; // [k][voxel]
  std::vector<Cx> V; // [k][t]

  LowRankFactors() = default;
  LowRankFactors(GridSpec const &g, Index k)
    : grid(g)
    , rank(k)
    , U(k * g.voxels(), Cx(0))
    , V(k * g.n_time, Cx(0))
  {
  }
  std::span<Cx> u(Index k) { return {U.data() + k * grid.voxels(), std::size_t(grid.voxels())}; }
  std::span<Cx const> u(Index k) const { return {U.data() + k * grid.voxels(), std::size_t(grid.voxels())}; }
  Cx v(Index k, Index t) const { return V[k * grid.n_time + t]; }

  void frame(Index t, std::span<Cx> out) const
  {
    Index const n = grid.voxels();
    std::fill(out.begin(), out.end(), Cx(0));
    for (Index k = 0; k < rank; k++) {
      Cx const c = v(k, t);
      Cx const *src = U.data() + k * n;
      for (Index i = 0; i < n; i++) {
        out[i] += src[i] * c;
      }
    }
  }

  ImageTimeSeries product() const
  {
    ImageTimeSeries s(grid);
    for (Index t = 0; t < grid.n_time; t++) {
      frame(t, s.frame(t));
    }
    return s;
  }
};

/// Solver state: factors, lipid series (zero off the mask) and the TGV
/// auxiliary fields of the real and imaginary part of every spatial component.
struct TgvErState
{
  LowRankFactors f;
  ImageTimeSeries L;
  std::vector<std::vector<double>> w_re, w_im;
};

struct ObjectiveParts
{
  double data = 0, reg = 0;
  double total() const { return data + reg; }
};

struct TraceRow
{
  Index iter = 0;
  double objective = 0, data = 0, reg = 0, step_u = 0, step_l = 0;
  int backtracks = 0;
};

struct TgvErResult
{
  TgvErState state;
  double lambda_eff = 0;
  double op_norm = 0;
  std::vector<TraceRow> trace;
};

namespace detail {

inline std::vector<Cx> gather_frame(CoilKSpaceSeries const &s, Index t)
{
  Index const m = s.samples();
  std::vector<Cx> out(s.grid.n_coils * m);
  for (Index c = 0; c < s.grid.n_coils; c++) {
    auto const r = s.readout(c, t);
    std::copy(r.begin(), r.end(), out.begin() + c * m);
  }
  return out;
}

// W s per frame, matching the weighting inside the operator.
inline std::vector<std::vector<Cx>> weighted_frames(CoilKSpaceSeries const &s, EncodingOperator const &op)
{
  if (s.grid.n_coils != op.coils() || s.samples() != op.samples()) {
    fail(Errc::shape_mismatch, "data has {} coils x {} samples, operator expects {} x {}", s.grid.n_coils, s.samples(),
         op.coils(), op.samples());
  }
  std::vector<std::vector<Cx>> out(s.grid.n_time);
  for (Index t = 0; t < s.grid.n_time; t++) {
    out[t] = gather_frame(s, t);
    if (op.weights()) {
      auto const &w = op.weights()->values;
      Index const m = op.samples();
      for (Index i = 0; i < Index(out[t].size()); i++) {
        out[t][i] *= w[i % m];
      }
    }
  }
  return out;
}

inline double tgv_reg(TgvGrid const &tg, TgvErState const &st, TgvWeights const &a)
{
  Index const n = st.f.grid.voxels();
  double reg = 0;
  std::vector<double> re(n), im(n);
  for (Index k = 0; k < st.f.rank; k++) {
    auto const u = st.f.u(k);
    for (Index i = 0; i < n; i++) {
      re[i] = u[i].real();
      im[i] = u[i].imag();
    }
    reg += tg.energy(re.data(), st.w_re[k].data(), a) + tg.energy(im.data(), st.w_im[k].data(), a);
  }
  return reg;
}

// Residuals A_t x_t - W s_t and their total energy.
inline double residuals(TgvErState const &st, EncodingOperator const &op, std::vector<std::vector<Cx>> const &ws,
                        std::vector<std::vector<Cx>> &res)
{
  Index const T = st.f.grid.n_time, n = st.f.grid.voxels();
  res.resize(T);
  std::vector<double> parts(T);
  parallel_for(T, [&](Index t) {
    std::vector<Cx> x(n);
    st.f.frame(t, x);
    auto const l = st.L.frame(t);
    for (Index i = 0; i < n; i++) {
      x[i] += l[i];
    }
    res[t].resize(op.frame_samples());
    op.forward_frame(x, t, res[t]);
    double e = 0;
    for (Index i = 0; i < op.frame_samples(); i++) {
      res[t][i] -= ws[t][i];
      e += std::norm(res[t][i]);
    }
    parts[t] = e;
  });
  double s = 0;
  for (double p : parts) {
    s += p;
  }
  return s;
}

inline double spectral_norm(LowRankFactors const &f)
{
  Eigen::MatrixXcd V(f.rank, f.grid.n_time);
  for (Index k = 0; k < f.rank; k++) {
    for (Index t = 0; t < f.grid.n_time; t++) {
      V(k, t) = f.v(k, t);
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(V);
  return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

} // namespace detail

/// Gridding reconstruction per timepoint: B^-1 C^H F^H diag(dcf) s.
inline ImageTimeSeries gridding_recon(CoilKSpaceSeries const &s, EncodingOperator const &op, SampleWeights const &dcf)
{
  return op.with_weights(dcf).adjoint(s);
}

/// |W (s - F C B (U V + L))|^2 + lambda sum_k TGV2(U_k; aux_k), both parts as the solver minimizes them.
inline ObjectiveParts objective_value(CoilKSpaceSeries const &s, TgvErState const &st, EncodingOperator const &op,
                                      double lambda, TgvWeights const &a = {})
{
  if (st.f.grid.voxels() != op.grid().voxels() || st.f.grid.n_time != s.grid.n_time ||
      st.L.voxels() != op.grid().voxels() || st.L.frames() != s.grid.n_time ||
      Index(st.w_re.size()) != st.f.rank || Index(st.w_im.size()) != st.f.rank) {
    fail(Errc::shape_mismatch, "objective: factor shapes do not match data and operator");
  }
  auto const ws = detail::weighted_frames(s, op);
  std::vector<std::vector<Cx>> res;
  ObjectiveParts o;
  o.data = detail::residuals(st, op, ws, res);
  o.reg = lambda > 0 ? lambda * detail::tgv_reg(TgvGrid(op.grid()), st, a) : 0.0;
  return o;
}

/// Initial state: rank-K truncated SVD of the gridding reconstruction, zero lipids.
inline TgvErState tgv_er_initial_state(ImageTimeSeries const &x0, Index rank)
{
  Index const n = x0.voxels(), T = x0.frames();
  if (rank > std::min(n, T)) {
    fail(Errc::invalid_argument, "rank K = {} exceeds min(voxels, timepoints) = {}", rank, std::min(n, T));
  }
  Eigen::MatrixXcd X(n, T);
  for (Index t = 0; t < T; t++) {
    for (Index i = 0; i < n; i++) {
      X(i, t) = x0.data[i + n * t];
    }
  }
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  TgvErState st;
  st.f = LowRankFactors(x0.grid, rank);
  for (Index k = 0; k < rank; k++) {
    double const sv = svd.singularValues()(k);
    for (Index i = 0; i < n; i++) {
      st.f.U[k * n + i] = svd.matrixU()(i, k) * sv;
    }
    for (Index t = 0; t < T; t++) {
      st.f.V[k * T + t] = std::conj(svd.matrixV()(t, k));
    }
  }
  st.L = ImageTimeSeries(x0.grid);
  TgvGrid const tg(x0.grid);
  st.w_re.assign(rank, std::vector<double>(tg.dims() * n, 0.0));
  st.w_im.assign(rank, std::vector<double>(tg.dims() * n, 0.0));
  return st;
}

/// Alternating minimization of the low-rank + lipid objective:
/// proximal gradient step on U with a TGV2 prox per component, exact least
/// squares for V, masked gradient step for L. Each step is non-increasing
/// (with backtracking on the Lipschitz bounds); three consecutive increases abort.
inline TgvErResult tgv_er_reconstruct(CoilKSpaceSeries const &s, EncodingOperator const &op, LipidMask const *mask,
                                      SampleWeights const &dcf, TgvConfig const &cfg,
                                      TgvErState const *warm = nullptr)
{
  cfg.validate();
  auto const &g = op.grid();
  Index const n = g.voxels(), T = s.grid.n_time, K = cfg.rank;
  if (!all_finite<Cx>(s.data)) {
    fail(Errc::non_finite, "k-space data contains non-finite values");
  }
  bool const use_lipid = mask && !mask->empty();
  if (mask && Index(mask->mask.size()) != n) {
    fail(Errc::shape_mismatch, "lipid mask has {} voxels, grid {}", mask->mask.size(), n);
  }
  auto const ws = detail::weighted_frames(s, op);
  auto const x0 = gridding_recon(s, op, dcf);
  TgvErResult out;
  out.state = warm ? *warm : tgv_er_initial_state(x0, K);
  auto &st = out.state;
  st.L.grid.dwell = s.grid.dwell;
  TgvGrid const tg(g);
  double const a2 = std::pow(op.norm_estimate(), 2) * cfg.step_safety;
  out.op_norm = std::sqrt(a2 / cfg.step_safety);
  double const lam = cfg.scale_lambda ? cfg.lambda * a2 / cfg.step_safety * max_abs(x0.data) : cfg.lambda;
  out.lambda_eff = lam;

  std::vector<std::vector<Cx>> res;
  auto objective = [&](double &data) {
    data = detail::residuals(st, op, ws, res);
    return data + (lam > 0 ? lam * detail::tgv_reg(tg, st, cfg.weights) : 0.0);
  };
  double data = 0;
  double J = objective(data);
  out.trace.push_back({0, J, data, J - data, 0, 0, 0});
  log::info("tgv-er: K={} lambda_eff={:.4g} |A|={:.4g} J0={:.6g}", K, lam, out.op_norm, J);

  int increases = 0;
  std::vector<Cx> grad_u(K * n), grad_l;
  for (Index it = 1; it <= cfg.outer_iters; it++) {
    double const J_start = J;
    TraceRow row;
    row.iter = it;

    // Gradient pieces g_t = A_t^H r_t.
    auto back_project = [&](std::vector<std::vector<Cx>> &gt) {
      gt.assign(T, std::vector<Cx>(n));
      parallel_for(T, [&](Index t) { op.adjoint_frame(res[t], t, gt[t]); });
    };
    std::vector<std::vector<Cx>> gt;

    // U step.
    double const vnorm = detail::spectral_norm(st.f);
    if (vnorm > 0) {
      back_project(gt);
      std::fill(grad_u.begin(), grad_u.end(), Cx(0));
      parallel_for(K, [&](Index k) {
        Cx *gk = grad_u.data() + k * n;
        for (Index t = 0; t < T; t++) {
          Cx const c = 2.0 * std::conj(st.f.v(k, t));
          for (Index i = 0; i < n; i++) {
            gk[i] += c * gt[t][i];
          }
        }
      });
      double lip = 2.0 * a2 * vnorm * vnorm;
      auto const saved = st;
      double const J_before = J;
      for (int bt = 0;; bt++) {
        parallel_for(K, [&](Index k) {
          std::vector<double> yr(n), yi(n), ur(n), ui(n);
          auto const u = saved.f.u(k);
          for (Index i = 0; i < n; i++) {
            Cx const y = u[i] - grad_u[k * n + i] / lip;
            yr[i] = y.real();
            yi[i] = y.imag();
            ur[i] = u[i].real();
            ui[i] = u[i].imag();
          }
          auto const rr = tgv2_solve(tg, yr, lam / lip, cfg.pd_iters, cfg.weights, ur, saved.w_re[k]);
          auto const ri = tgv2_solve(tg, yi, lam / lip, cfg.pd_iters, cfg.weights, ui, saved.w_im[k]);
          auto dst = st.f.u(k);
          for (Index i = 0; i < n; i++) {
            dst[i] = Cx(rr.u[i], ri.u[i]);
          }
          if (lam > 0) {
            st.w_re[k] = rr.w;
            st.w_im[k] = ri.w;
          }
        });
        J = objective(data);
        if (J <= J_before * (1 + 1e-12) || bt >= 30) {
          row.backtracks += bt;
          break;
        }
        lip *= 2.0;
        st = saved;
      }
      row.step_u = 1.0 / lip;
      if (J > J_before) {
        st = saved;
        J = objective(data);
      }
    }

    // V step: exact least squares per timepoint against W s_t - A_t L_t.
    {
      bool const invariant = !op.has_b0();
      std::vector<std::vector<Cx>> AU;
      auto build = [&](Index t, Eigen::MatrixXcd &M) {
        M.resize(op.frame_samples(), K);
        std::vector<Cx> col(op.frame_samples());
        for (Index k = 0; k < K; k++) {
          op.forward_frame(st.f.u(k), t, col);
          for (Index i = 0; i < op.frame_samples(); i++) {
            M(i, k) = col[i];
          }
        }
      };
      Eigen::MatrixXcd M0;
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> cod0;
      if (invariant) {
        build(0, M0);
        cod0.compute(M0);
      }
      auto const saved_v = st.f.V;
      parallel_for(T, [&](Index t) {
        Eigen::VectorXcd b(op.frame_samples());
        std::vector<Cx> al(op.frame_samples(), Cx(0));
        if (use_lipid) {
          op.forward_frame(st.L.frame(t), t, al);
        }
        for (Index i = 0; i < op.frame_samples(); i++) {
          b(i) = ws[t][i] - al[i];
        }
        Eigen::VectorXcd v;
        if (invariant) {
          v = cod0.solve(b);
        } else {
          Eigen::MatrixXcd M;
          build(t, M);
          v = M.completeOrthogonalDecomposition().solve(b);
        }
        for (Index k = 0; k < K; k++) {
          st.f.V[k * T + t] = v(k);
        }
      });
      double const J_prev = J;
      J = objective(data);
      if (J > J_prev) {
        // Least squares cannot increase the data term beyond rounding; keep the old V if it did.
        st.f.V = saved_v;
        J = objective(data);
      }
    }

    // L step: gradient step restricted to the mask.
    if (use_lipid) {
      back_project(gt);
      double lip = 2.0 * a2;
      auto const saved_l = st.L;
      double const J_before = J;
      for (int bt = 0;; bt++) {
        for (Index t = 0; t < T; t++) {
          auto dst = st.L.frame(t);
          auto const src = saved_l.frame(t);
          for (Index i = 0; i < n; i++) {
            dst[i] = mask->mask[i] ? src[i] - 2.0 * gt[t][i] / lip : Cx(0);
          }
        }
        J = objective(data);
        if (J <= J_before * (1 + 1e-12) || bt >= 30) {
          row.backtracks += bt;
          break;
        }
        lip *= 2.0;
      }
      row.step_l = 1.0 / lip;
      if (J > J_before) {
        st.L = saved_l;
        J = objective(data);
      }
    }

    row.objective = J;
    row.data = data;
    row.reg = J - data;
    out.trace.push_back(row);
    log::debug("tgv-er it {}: J={:.9g} data={:.6g} reg={:.6g} step_u={:.3g} bt={}", it, J, data, J - data,
               row.step_u, row.backtracks);
    if (!std::isfinite(J)) {
      fail(Errc::non_finite, "tgv-er objective became non-finite at iteration {}", it);
    }
    if (J > J_start * (1 + 1e-8)) {
      if (++increases >= 3) {
        fail(Errc::diverged, "tgv-er diverged: objective rose 3 iterations in a row (J={:.6g}, step_u={:.3g}, "
                             "step_l={:.3g}, |A|^2={:.4g}, lambda_eff={:.4g})",
             J, row.step_u, row.step_l, a2, lam);
      }
    } else {
      increases = 0;
    }
  }
  return out;
}

/// Single-timepoint water reconstruction: min_x |W (s_t - F C B_t x)|^2 + lambda TGV2(x)
/// by proximal gradient with a warm-started TGV2 prox, started from gridding.
inline ComplexVolume water_reconstruct_per_timepoint(std::span<Cx const> samples, Index t, EncodingOperator const &op,
                                                     SampleWeights const &dcf, TgvConfig const &cfg,
                                                     std::vector<double> *objective_trace = nullptr)
{
  cfg.validate();
  auto const &g = op.grid();
  Index const n = g.voxels(), m = op.frame_samples();
  if (Index(samples.size()) != m) {
    fail(Errc::shape_mismatch, "water recon: {} samples, operator expects {}", samples.size(), m);
  }
  if (!all_finite(samples)) {
    fail(Errc::non_finite, "water recon: non-finite samples");
  }
  std::vector<Cx> ws(samples.begin(), samples.end());
  if (op.weights()) {
    for (Index i = 0; i < m; i++) {
      ws[i] *= op.weights()->values[i % op.samples()];
    }
  }
  ComplexVolume x(g);
  op.with_weights(dcf).adjoint_frame(samples, t, x.data);
  double const a2 = std::pow(op.norm_estimate(), 2) * cfg.step_safety;
  double const lam = cfg.scale_lambda ? cfg.lambda * a2 / cfg.step_safety * max_abs(x.data) : cfg.lambda;
  TgvGrid const tg(g);
  std::vector<double> wr(tg.dims() * n, 0.0), wi(tg.dims() * n, 0.0);
  std::vector<Cx> r(m), grad(n);

  auto eval = [&](std::vector<Cx> const &xx, std::vector<double> const &a, std::vector<double> const &b) {
    op.forward_frame(xx, t, r);
    double d = 0;
    for (Index i = 0; i < m; i++) {
      r[i] -= ws[i];
      d += std::norm(r[i]);
    }
    if (lam > 0) {
      std::vector<double> re(n), im(n);
      for (Index i = 0; i < n; i++) {
        re[i] = xx[i].real();
        im[i] = xx[i].imag();
      }
      d += lam * (tg.energy(re.data(), a.data(), cfg.weights) + tg.energy(im.data(), b.data(), cfg.weights));
    }
    return d;
  };
  double J = eval(x.data, wr, wi);
  if (objective_trace) {
    objective_trace->assign(1, J);
  }
  double lip = 2.0 * a2;
  for (Index it = 0; it < cfg.outer_iters; it++) {
    op.adjoint_frame(r, t, grad);
    auto const xs = x.data;
    auto const sr = wr, si = wi;
    for (int bt = 0;; bt++) {
      std::vector<double> yr(n), yi(n), ur(n), ui(n);
      for (Index i = 0; i < n; i++) {
        Cx const y = xs[i] - 2.0 * grad[i] / lip;
        yr[i] = y.real();
        yi[i] = y.imag();
        ur[i] = xs[i].real();
        ui[i] = xs[i].imag();
      }
      auto const rr = tgv2_solve(tg, yr, lam / lip, cfg.pd_iters, cfg.weights, ur, sr);
      auto const ri = tgv2_solve(tg, yi, lam / lip, cfg.pd_iters, cfg.weights, ui, si);
      for (Index i = 0; i < n; i++) {
        x.data[i] = Cx(rr.u[i], ri.u[i]);
      }
      wr = lam > 0 ? rr.w : sr;
      wi = lam > 0 ? ri.w : si;
      double const Jn = eval(x.data, wr, wi);
      if (Jn <= J * (1 + 1e-12) || bt >= 30) {
        if (Jn > J) {
          x.data = xs;
          wr = sr;
          wi = si;
          eval(x.data, wr, wi);
        } else {
          J = Jn;
        }
        break;
      }
      lip *= 2.0;
    }
    if (objective_trace) {
      objective_trace->push_back(J);
    }
  }
  return x;
}

} // namespace mrsi
