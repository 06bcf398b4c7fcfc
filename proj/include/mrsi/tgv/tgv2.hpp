#pragma once

#include "mrsi/core/types.hpp"

#include <map>
#include <mutex>
#include <random>

namespace mrsi {

struct TgvWeights
{
  double alpha1 = 1.0; // first-order term
  double alpha0 = 2.0; // second-order term
};

/// Finite-difference machinery for TGV2 on a voxel grid with unit spacing.
/// Forward differences with Neumann boundary for the gradient; the symmetrized
/// derivative uses backward differences (the negative adjoint of the forward ones).
/// Singleton axes are dropped.
class TgvGrid
{
public:
  explicit TgvGrid(GridSpec const &g)
    : n_(g.voxels())
  {
    Index const dims[3] = {g.nx, g.ny, g.nz};
    Index stride = 1;
    for (int a = 0; a < 3; a++) {
      if (dims[a] > 1) {
        axes_.push_back({dims[a], stride});
      }
      stride *= dims[a];
    }
  }

  Index voxels() const { return n_; }
  Index dims() const { return Index(axes_.size()); }
  Index sym() const { return dims() * (dims() + 1) / 2; }

  // out = fwd_d(u)
  void fwd(Index d, double const *u, double *out) const
  {
    auto const [n, s] = axes_[d];
    for (Index i = 0; i < n_; i++) {
      Index const c = (i / s) % n;
      out[i] = c + 1 < n ? u[i + s] - u[i] : 0.0;
    }
  }

  // out (+)= fwd_d^T(p)
  void fwd_t(Index d, double const *p, double *out, bool accumulate) const
  {
    auto const [n, s] = axes_[d];
    for (Index i = 0; i < n_; i++) {
      Index const c = (i / s) % n;
      double const v = (c > 0 ? p[i - s] : 0.0) - (c + 1 < n ? p[i] : 0.0);
      out[i] = accumulate ? out[i] + v : v;
    }
  }

  // out (+)= scale * bwd_d(v), bwd = -fwd^T
  void bwd(Index d, double const *v, double *out, double scale, bool accumulate) const
  {
    auto const [n, s] = axes_[d];
    for (Index i = 0; i < n_; i++) {
      Index const c = (i / s) % n;
      double const b = scale * ((c + 1 < n ? v[i] : 0.0) - (c > 0 ? v[i - s] : 0.0));
      out[i] = accumulate ? out[i] + b : b;
    }
  }

  // out -= fwd_d(q), i.e. out += bwd_d^T(q)
  void bwd_t_acc(Index d, double const *q, double *out) const
  {
    auto const [n, s] = axes_[d];
    for (Index i = 0; i < n_; i++) {
      Index const c = (i / s) % n;
      out[i] -= c + 1 < n ? q[i + s] - q[i] : 0.0;
    }
  }

  // Index of the symmetric tensor entry (d, e), d <= e: diagonal first, then pairs.
  Index sym_index(Index d, Index e) const
  {
    if (d == e) {
      return d;
    }
    Index k = dims();
    for (Index a = 0; a < dims(); a++) {
      for (Index b = a + 1; b < dims(); b++) {
        if (a == d && b == e) {
          return k;
        }
        k++;
      }
    }
    return -1;
  }

  /// Gradient, w-shaped: [d][voxel]
  void grad(double const *u, double *out) const
  {
    for (Index d = 0; d < dims(); d++) {
      fwd(d, u, out + d * n_);
    }
  }

  void grad_t(double const *p, double *out) const
  {
    std::fill(out, out + n_, 0.0);
    for (Index d = 0; d < dims(); d++) {
      fwd_t(d, p + d * n_, out, true);
    }
  }

  /// Symmetrized derivative of a vector field, [sym][voxel].
  void eps(double const *w, double *out) const
  {
    for (Index d = 0; d < dims(); d++) {
      bwd(d, w + d * n_, out + d * n_, 1.0, false);
    }
    for (Index d = 0; d < dims(); d++) {
      for (Index e = d + 1; e < dims(); e++) {
        double *o = out + sym_index(d, e) * n_;
        bwd(d, w + e * n_, o, 0.5, false);
        bwd(e, w + d * n_, o, 0.5, true);
      }
    }
  }

  /// Adjoint of eps under the inner product that counts off-diagonal entries twice.
  void eps_t(double const *q, double *out) const
  {
    std::fill(out, out + dims() * n_, 0.0);
    for (Index d = 0; d < dims(); d++) {
      bwd_t_acc(d, q + d * n_, out + d * n_);
      for (Index e = 0; e < dims(); e++) {
        if (e != d) {
          bwd_t_acc(e, q + sym_index(std::min(d, e), std::max(d, e)) * n_, out + d * n_);
        }
      }
    }
  }

  /// Pointwise Euclidean norm summed over voxels; `offdiag_twice` for symmetric tensors.
  double l1_norm(double const *v, Index comps, bool tensor) const
  {
    double s = 0;
    for (Index i = 0; i < n_; i++) {
      s += std::sqrt(point_sq(v, i, comps, tensor));
    }
    return s;
  }

  double point_sq(double const *v, Index i, Index comps, bool tensor) const
  {
    double a = 0;
    for (Index c = 0; c < comps; c++) {
      double const x = v[c * n_ + i];
      a += (tensor && c >= dims() ? 2.0 : 1.0) * x * x;
    }
    return a;
  }

  void project(double *v, Index comps, bool tensor, double radius) const
  {
    for (Index i = 0; i < n_; i++) {
      double const m = std::sqrt(point_sq(v, i, comps, tensor));
      if (m > radius) {
        double const f = radius / m;
        for (Index c = 0; c < comps; c++) {
          v[c * n_ + i] *= f;
        }
      }
    }
  }

  /// TGV value with a given auxiliary field: alpha1 |grad u - w|_1 + alpha0 |eps w|_1.
  double energy(double const *u, double const *w, TgvWeights const &a) const
  {
    if (dims() == 0) {
      return 0.0;
    }
    std::vector<double> g(dims() * n_), e(sym() * n_);
    grad(u, g.data());
    for (Index i = 0; i < dims() * n_; i++) {
      g[i] -= w[i];
    }
    eps(w, e.data());
    return a.alpha1 * l1_norm(g.data(), dims(), false) + a.alpha0 * l1_norm(e.data(), sym(), true);
  }

  /// Norm of K(u, w) = (grad u - w, eps w) by power iteration; cached per shape.
  double operator_norm() const
  {
    static std::mutex mtx;
    static std::map<std::vector<Index>, double> cache;
    std::vector<Index> key{n_};
    for (auto const &[n, s] : axes_) {
      key.push_back(n);
    }
    {
      std::lock_guard lock(mtx);
      if (auto it = cache.find(key); it != cache.end()) {
        return it->second;
      }
    }
    Index const nd = dims(), ns = sym();
    std::vector<double> u(n_), w(nd * n_), p(nd * n_), q(ns * n_), tu(n_), tw(nd * n_);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> gauss;
    for (auto &v : u) {
      v = gauss(rng);
    }
    for (auto &v : w) {
      v = gauss(rng);
    }
    double lam = 0;
    for (int it = 0; it < 20; it++) {
      double nrm = 0;
      for (auto v : u) {
        nrm += v * v;
      }
      for (auto v : w) {
        nrm += v * v;
      }
      nrm = std::sqrt(nrm);
      for (auto &v : u) {
        v /= nrm;
      }
      for (auto &v : w) {
        v /= nrm;
      }
      apply_k(u.data(), w.data(), p.data(), q.data());
      apply_kt(p.data(), q.data(), tu.data(), tw.data());
      double n2 = 0;
      for (auto v : tu) {
        n2 += v * v;
      }
      for (auto v : tw) {
        n2 += v * v;
      }
      lam = std::sqrt(n2);
      u.swap(tu);
      w.swap(tw);
    }
    double const L = std::sqrt(lam);
    std::lock_guard lock(mtx);
    cache[key] = L;
    return L;
  }

  void apply_k(double const *u, double const *w, double *p, double *q) const
  {
    grad(u, p);
    for (Index i = 0; i < dims() * n_; i++) {
      p[i] -= w[i];
    }
    eps(w, q);
  }

  void apply_kt(double const *p, double const *q, double *u, double *w) const
  {
    grad_t(p, u);
    eps_t(q, w);
    for (Index i = 0; i < dims() * n_; i++) {
      w[i] -= p[i];
    }
  }

private:
  struct Axis
  {
    Index n, stride;
  };
  Index n_;
  std::vector<Axis> axes_;
};

struct Tgv2Result
{
  std::vector<double> u, w;
  double primal = 0, dual = 0;
  std::vector<double> gap; // best primal minus best dual after each iteration
};

/// min_{u,w} 1/2 |u - y|^2 + lambda (alpha1 |grad u - w|_1 + alpha0 |eps w|_1)
/// by Chambolle-Pock. The returned iterate is the best primal one seen, so the
/// reported gap never increases. `u0`, `w0` warm-start the primal variables and
/// compete as candidates.
inline Tgv2Result tgv2_solve(TgvGrid const &tg, std::span<double const> y, double lambda, Index iters,
                             TgvWeights const &a = {}, std::span<double const> u0 = {},
                             std::span<double const> w0 = {})
{
  Index const n = tg.voxels(), nd = tg.dims(), ns = tg.sym();
  Tgv2Result r;
  if (!(lambda >= 0)) {
    fail(Errc::invalid_argument, "TGV lambda must be >= 0, got {}", lambda);
  }
  if (lambda == 0 || nd == 0) {
    r.u.assign(y.begin(), y.end());
    r.w.assign(nd * n, 0.0);
    return r;
  }
  std::vector<double> u(y.begin(), y.end()), w(nd * n, 0.0);
  if (!u0.empty()) {
    u.assign(u0.begin(), u0.end());
  }
  if (!w0.empty()) {
    w.assign(w0.begin(), w0.end());
  }
  auto primal = [&](std::vector<double> const &uu, std::vector<double> const &ww) {
    double f = 0;
    for (Index i = 0; i < n; i++) {
      f += 0.5 * (uu[i] - y[i]) * (uu[i] - y[i]);
    }
    return f + lambda * tg.energy(uu.data(), ww.data(), a);
  };
  std::vector<double> p(nd * n, 0.0), q(ns * n, 0.0), kp(nd * n), kq(ns * n), ku(n), kw(nd * n);
  std::vector<double> ub = u, wb = w, un(n), wn(nd * n), gu(n);
  r.u = u;
  r.w = w;
  r.primal = primal(u, w);
  r.dual = -std::numeric_limits<double>::infinity();
  double const L = tg.operator_norm() * 1.05;
  double const tau = 1.0 / L, sigma = 1.0 / L;
  double const r1 = lambda * a.alpha1, r0 = lambda * a.alpha0;

  for (Index it = 0; it < iters; it++) {
    tg.apply_k(ub.data(), wb.data(), kp.data(), kq.data());
    for (Index i = 0; i < nd * n; i++) {
      p[i] += sigma * kp[i];
    }
    for (Index i = 0; i < ns * n; i++) {
      q[i] += sigma * kq[i];
    }
    tg.project(p.data(), nd, false, r1);
    tg.project(q.data(), ns, true, r0);
    tg.apply_kt(p.data(), q.data(), ku.data(), kw.data());
    for (Index i = 0; i < n; i++) {
      un[i] = (u[i] - tau * ku[i] + tau * y[i]) / (1.0 + tau);
      ub[i] = 2.0 * un[i] - u[i];
    }
    for (Index i = 0; i < nd * n; i++) {
      wn[i] = w[i] - tau * kw[i];
      wb[i] = 2.0 * wn[i] - w[i];
    }
    u.swap(un);
    w.swap(wn);

    double const pv = primal(u, w);
    if (pv < r.primal) {
      r.primal = pv;
      r.u = u;
      r.w = w;
    }
    // Feasible dual point: p = eps^T q, scaled into the alpha1 ball.
    std::vector<double> ph(nd * n);
    tg.eps_t(q.data(), ph.data());
    double mx = 0;
    for (Index i = 0; i < n; i++) {
      mx = std::max(mx, std::sqrt(tg.point_sq(ph.data(), i, nd, false)));
    }
    double const s = mx > r1 ? r1 / mx : 1.0;
    for (auto &v : ph) {
      v *= s;
    }
    tg.grad_t(ph.data(), gu.data());
    double dv = 0;
    for (Index i = 0; i < n; i++) {
      dv += -0.5 * gu[i] * gu[i] + gu[i] * y[i];
    }
    r.dual = std::max(r.dual, dv);
    r.gap.push_back(r.primal - r.dual);
  }
  return r;
}

/// Complex TGV2 denoising, real and imaginary parts independently.
inline ComplexVolume tgv2_denoise(ComplexVolume const &vol, double lambda, Index pd_iters, TgvWeights const &a = {})
{
  TgvGrid const tg(vol.grid);
  Index const n = vol.size();
  std::vector<double> re(n), im(n);
  for (Index i = 0; i < n; i++) {
    re[i] = vol.data[i].real();
    im[i] = vol.data[i].imag();
  }
  auto const rr = tgv2_solve(tg, re, lambda, pd_iters, a);
  auto const ri = tgv2_solve(tg, im, lambda, pd_iters, a);
  ComplexVolume out(vol.grid);
  for (Index i = 0; i < n; i++) {
    out.data[i] = Cx(rr.u[i], ri.u[i]);
  }
  return out;
}

} // namespace mrsi
