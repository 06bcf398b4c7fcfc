#pragma once

#include "mrsi/core/types.hpp"

namespace mrsi {

/// |pred - ref| / |ref|
inline double nrmse(std::span<Cx const> pred, std::span<Cx const> ref)
{
  if (pred.size() != ref.size()) {
    fail(Errc::shape_mismatch, "nrmse: {} vs {} values", pred.size(), ref.size());
  }
  double num = 0, den = 0;
  for (std::size_t i = 0; i < ref.size(); i++) {
    num += std::norm(pred[i] - ref[i]);
    den += std::norm(ref[i]);
  }
  if (!(den > 0)) {
    fail(Errc::degenerate, "nrmse: reference is zero");
  }
  return std::sqrt(num / den);
}

struct SsimOptions
{
  Index window = 11;
  double sigma = 1.5;
  double k1 = 0.01, k2 = 0.03;
  double range = 1.0;
};

namespace detail {

// Truncated Gaussian window along one axis; returns the unnormalized filter.
class GaussFilter
{
public:
  GaussFilter(SsimOptions const &o)
    : half_(o.window / 2)
  {
    for (Index i = -half_; i <= half_; i++) {
      taps_.push_back(std::exp(-double(i * i) / (2.0 * o.sigma * o.sigma)));
    }
  }

  // out[x] = sum_{|d| <= half, 0 <= x + d < n} g(d) in[x + d], along x (stride 1) or y (stride nx).
  void apply(double const *in, double *out, Index nx, Index ny, bool along_x) const
  {
    for (Index y = 0; y < ny; y++) {
      for (Index x = 0; x < nx; x++) {
        double s = 0;
        for (Index d = -half_; d <= half_; d++) {
          Index const xx = along_x ? x + d : x, yy = along_x ? y : y + d;
          if (xx >= 0 && yy >= 0 && xx < nx && yy < ny) {
            s += taps_[d + half_] * in[xx + nx * yy];
          }
        }
        out[x + nx * y] = s;
      }
    }
  }

  void apply2(double const *in, double *out, Index nx, Index ny) const
  {
    std::vector<double> tmp(nx * ny);
    apply(in, tmp.data(), nx, ny, true);
    apply(tmp.data(), out, nx, ny, false);
  }

private:
  Index half_;
  std::vector<double> taps_;
};

} // namespace detail

/// Mean local SSIM of two real images, computed per in-plane slice (x fastest,
/// then y, then z) with a truncated, renormalized Gaussian window and averaged
/// over all pixels. If `grad_a` is given it receives d(SSIM)/d(a).
inline double ssim(std::span<double const> a, std::span<double const> b, Index nx, Index ny, Index nz,
                   SsimOptions const &o = {}, std::span<double> grad_a = {})
{
  Index const np = nx * ny;
  if (Index(a.size()) != np * nz || Index(b.size()) != np * nz) {
    fail(Errc::shape_mismatch, "ssim: images have {} and {} values, shape needs {}", a.size(), b.size(), np * nz);
  }
  double const c1 = std::pow(o.k1 * o.range, 2), c2 = std::pow(o.k2 * o.range, 2);
  detail::GaussFilter const gf(o);
  std::vector<double> one(np, 1.0), norm(np);
  gf.apply2(one.data(), norm.data(), nx, ny);
  double const inv_p = 1.0 / double(np * nz);
  double total = 0;
  std::vector<double> prod(np), ma(np), mb(np), maa(np), mbb(np), mab(np);
  std::vector<double> d1(np), d2(np), d3(np), f1(np), f2(np), f3(np);
  for (Index z = 0; z < nz; z++) {
    double const *pa = a.data() + z * np, *pb = b.data() + z * np;
    gf.apply2(pa, ma.data(), nx, ny);
    gf.apply2(pb, mb.data(), nx, ny);
    for (Index i = 0; i < np; i++) {
      prod[i] = pa[i] * pa[i];
    }
    gf.apply2(prod.data(), maa.data(), nx, ny);
    for (Index i = 0; i < np; i++) {
      prod[i] = pb[i] * pb[i];
    }
    gf.apply2(prod.data(), mbb.data(), nx, ny);
    for (Index i = 0; i < np; i++) {
      prod[i] = pa[i] * pb[i];
    }
    gf.apply2(prod.data(), mab.data(), nx, ny);
    for (Index i = 0; i < np; i++) {
      double const w = norm[i];
      double const mua = ma[i] / w, mub = mb[i] / w;
      double const va = maa[i] / w - mua * mua, vb = mbb[i] / w - mub * mub, cab = mab[i] / w - mua * mub;
      double const A1 = 2 * mua * mub + c1, A2 = 2 * cab + c2;
      double const B1 = mua * mua + mub * mub + c1, B2 = va + vb + c2;
      double const s = A1 * A2 / (B1 * B2);
      total += s;
      if (!grad_a.empty()) {
        double const ds_dmu = 2 * mub * A2 / (B1 * B2) - s * 2 * mua / B1;
        double const ds_dva = -s / B2;
        double const ds_dcab = 2 * A1 / (B1 * B2);
        // Chain through the raw windowed moments m_a, m_aa, m_ab.
        d1[i] = (ds_dmu + ds_dva * (-2 * mua) + ds_dcab * (-mub)) / w;
        d2[i] = ds_dva / w;
        d3[i] = ds_dcab / w;
      }
    }
    if (!grad_a.empty()) {
      gf.apply2(d1.data(), f1.data(), nx, ny);
      gf.apply2(d2.data(), f2.data(), nx, ny);
      gf.apply2(d3.data(), f3.data(), nx, ny);
      for (Index i = 0; i < np; i++) {
        grad_a[z * np + i] = inv_p * (f1[i] + 2 * pa[i] * f2[i] + pb[i] * f3[i]);
      }
    }
  }
  return total * inv_p;
}

/// SSIM of two complex volumes on magnitudes, both scaled by max|ref| so the reference spans [0, 1].
inline double ssim_volumes(ComplexVolume const &pred, ComplexVolume const &ref, SsimOptions const &o = {})
{
  if (pred.size() != ref.size()) {
    fail(Errc::shape_mismatch, "ssim: {} vs {} voxels", pred.size(), ref.size());
  }
  double const peak = max_abs(ref.data);
  if (!(peak > 0)) {
    fail(Errc::degenerate, "ssim: reference is zero");
  }
  std::vector<double> a(pred.size()), b(ref.size());
  for (Index i = 0; i < pred.size(); i++) {
    a[i] = std::abs(pred.data[i]) / peak;
    b[i] = std::abs(ref.data[i]) / peak;
  }
  return ssim(a, b, ref.grid.nx, ref.grid.ny, ref.grid.nz, o);
}

inline double pearson_cc(std::span<double const> a, std::span<double const> b)
{
  if (a.size() != b.size() || a.size() < 2) {
    fail(Errc::shape_mismatch, "pearson: need equal lengths >= 2, got {} and {}", a.size(), b.size());
  }
  double const n = double(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); i++) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); i++) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0 && sbb > 0)) {
    fail(Errc::degenerate, "pearson: zero variance");
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

struct BlandAltman
{
  double bias = 0, loa_low = 0, loa_high = 0;
};

/// Bias and 1.96 sigma limits of agreement of a - b (sample standard deviation).
inline BlandAltman bland_altman(std::span<double const> a, std::span<double const> b)
{
  if (a.size() != b.size()) {
    fail(Errc::shape_mismatch, "bland-altman: lengths {} and {} differ", a.size(), b.size());
  }
  if (a.size() < 2) {
    fail(Errc::invalid_argument, "bland-altman needs at least 2 pairs");
  }
  double const n = double(a.size());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); i++) {
    m += a[i] - b[i];
  }
  m /= n;
  double v = 0;
  for (std::size_t i = 0; i < a.size(); i++) {
    v += std::pow(a[i] - b[i] - m, 2);
  }
  double const sd = std::sqrt(v / (n - 1));
  return {m, m - 1.96 * sd, m + 1.96 * sd};
}

inline std::vector<double> magnitudes(std::span<Cx const> v)
{
  std::vector<double> m(v.size());
  for (std::size_t i = 0; i < v.size(); i++) {
    m[i] = std::abs(v[i]);
  }
  return m;
}

} // namespace mrsi
