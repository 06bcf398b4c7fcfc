#pragma once

#include "mrsi/core/parallel.hpp"
#include "mrsi/core/types.hpp"

#include <cmath>

namespace mrsi::nn {

/// Spatial shape of every feature map; channel-major buffers [c][voxel], x fastest.
struct Shape
{
  Index nx = 1, ny = 1, nz = 1;
  Index voxels() const { return nx * ny * nz; }
  bool operator==(Shape const &) const = default;
};

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

namespace detail {

// out[p] += w * in[p + d] over all p with p + d inside the volume.
inline void shift_acc(double *out, double const *in, double w, Shape s, Index dx, Index dy, Index dz)
{
  Index const x0 = std::max<Index>(0, -dx), x1 = std::min(s.nx, s.nx - dx);
  Index const y0 = std::max<Index>(0, -dy), y1 = std::min(s.ny, s.ny - dy);
  Index const z0 = std::max<Index>(0, -dz), z1 = std::min(s.nz, s.nz - dz);
  for (Index z = z0; z < z1; z++) {
    for (Index y = y0; y < y1; y++) {
      double *o = out + s.nx * (y + s.ny * z);
      double const *i = in + (dx + s.nx * (y + dy + s.ny * (z + dz)));
      for (Index x = x0; x < x1; x++) {
        o[x] += w * i[x];
      }
    }
  }
}

// sum_p a[p] * b[p + d]
inline double shift_dot(double const *a, double const *b, Shape s, Index dx, Index dy, Index dz)
{
  Index const x0 = std::max<Index>(0, -dx), x1 = std::min(s.nx, s.nx - dx);
  Index const y0 = std::max<Index>(0, -dy), y1 = std::min(s.ny, s.ny - dy);
  Index const z0 = std::max<Index>(0, -dz), z1 = std::min(s.nz, s.nz - dz);
  double acc = 0;
  for (Index z = z0; z < z1; z++) {
    for (Index y = y0; y < y1; y++) {
      double const *pa = a + s.nx * (y + s.ny * z);
      double const *pb = b + (dx + s.nx * (y + dy + s.ny * (z + dz)));
      for (Index x = x0; x < x1; x++) {
        acc += pa[x] * pb[x];
      }
    }
  }
  return acc;
}

} // namespace detail

/// 3x3x3 convolution (cross-correlation) with zero padding and bias.
/// Weights [out][in][kz][ky][kx] then bias [out], stored at `offset` in the flat parameter vector.
struct Conv3
{
  Index in = 0, out = 0, offset = 0;

  static constexpr Index kTaps = 27;
  Index weight_count() const { return out * in * kTaps; }
  Index size() const { return weight_count() + out; }
  Index bias_offset() const { return offset + weight_count(); }

  void forward(double const *p, Shape s, std::span<double const> x, std::span<double> y) const
  {
    Index const nv = s.voxels();
    double const *w = p + offset;
    double const *b = p + bias_offset();
    parallel_for(out, [&](Index o) {
      double *yo = y.data() + o * nv;
      std::fill(yo, yo + nv, b[o]);
      for (Index i = 0; i < in; i++) {
        double const *xi = x.data() + i * nv;
        double const *wk = w + (o * in + i) * kTaps;
        for (Index t = 0; t < kTaps; t++) {
          if (wk[t] != 0.0) {
            detail::shift_acc(yo, xi, wk[t], s, t % 3 - 1, (t / 3) % 3 - 1, t / 9 - 1);
          }
        }
      }
    });
  }

  /// Accumulates parameter gradients into g and writes the input gradient to gx (if non-empty).
  void backward(double const *p, Shape s, std::span<double const> x, std::span<double const> gy, double *g,
                std::span<double> gx) const
  {
    Index const nv = s.voxels();
    double const *w = p + offset;
    parallel_for(out, [&](Index o) {
      double const *go = gy.data() + o * nv;
      double sb = 0;
      for (Index v = 0; v < nv; v++) {
        sb += go[v];
      }
      g[bias_offset() + o] += sb;
      for (Index i = 0; i < in; i++) {
        double const *xi = x.data() + i * nv;
        double *gw = g + offset + (o * in + i) * kTaps;
        for (Index t = 0; t < kTaps; t++) {
          gw[t] += detail::shift_dot(go, xi, s, t % 3 - 1, (t / 3) % 3 - 1, t / 9 - 1);
        }
      }
    });
    if (gx.empty()) {
      return;
    }
    parallel_for(in, [&](Index i) {
      double *gi = gx.data() + i * nv;
      std::fill(gi, gi + nv, 0.0);
      for (Index o = 0; o < out; o++) {
        double const *go = gy.data() + o * nv;
        double const *wk = w + (o * in + i) * kTaps;
        for (Index t = 0; t < kTaps; t++) {
          if (wk[t] != 0.0) {
            detail::shift_acc(gi, go, wk[t], s, -(t % 3 - 1), -((t / 3) % 3 - 1), -(t / 9 - 1));
          }
        }
      }
    });
  }
};

/// Per-channel batch normalization over the spatial dimensions.
/// Parameters gamma[ch], beta[ch] at `offset`; running statistics live outside the parameter vector.
struct BatchNorm
{
  Index ch = 0, offset = 0;
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.9;

  Index size() const { return 2 * ch; }

  struct Cache
  {
    std::vector<double> xhat, inv_std;
  };

  /// Training mode uses batch statistics and updates the running averages when `running` is given.
  void forward_train(double const *p, Index nv, std::span<double const> x, std::span<double> y, Cache &c,
                     double *running_mean = nullptr, double *running_var = nullptr) const
  {
    c.xhat.resize(ch * nv);
    c.inv_std.resize(ch);
    for (Index k = 0; k < ch; k++) {
      double const *xk = x.data() + k * nv;
      double mean = 0;
      for (Index v = 0; v < nv; v++) {
        mean += xk[v];
      }
      mean /= double(nv);
      double var = 0;
      for (Index v = 0; v < nv; v++) {
        var += (xk[v] - mean) * (xk[v] - mean);
      }
      var /= double(nv);
      double const is = 1.0 / std::sqrt(var + kEps);
      c.inv_std[k] = is;
      double const gam = p[offset + k], bet = p[offset + ch + k];
      for (Index v = 0; v < nv; v++) {
        double const h = (xk[v] - mean) * is;
        c.xhat[k * nv + v] = h;
        y[k * nv + v] = gam * h + bet;
      }
      if (running_mean) {
        running_mean[k] = kMomentum * running_mean[k] + (1 - kMomentum) * mean;
        running_var[k] = kMomentum * running_var[k] + (1 - kMomentum) * var;
      }
    }
  }

  void forward_eval(double const *p, Index nv, std::span<double const> x, std::span<double> y,
                    double const *running_mean, double const *running_var) const
  {
    for (Index k = 0; k < ch; k++) {
      double const is = 1.0 / std::sqrt(running_var[k] + kEps);
      double const gam = p[offset + k], bet = p[offset + ch + k];
      for (Index v = 0; v < nv; v++) {
        y[k * nv + v] = gam * (x[k * nv + v] - running_mean[k]) * is + bet;
      }
    }
  }

  void backward(double const *p, Index nv, Cache const &c, std::span<double const> gy, double *g,
                std::span<double> gx) const
  {
    for (Index k = 0; k < ch; k++) {
      double const *gk = gy.data() + k * nv;
      double const *hk = c.xhat.data() + k * nv;
      double sg = 0, sgh = 0;
      for (Index v = 0; v < nv; v++) {
        sg += gk[v];
        sgh += gk[v] * hk[v];
      }
      g[offset + k] += sgh;
      g[offset + ch + k] += sg;
      double const f = p[offset + k] * c.inv_std[k] / double(nv);
      for (Index v = 0; v < nv; v++) {
        gx[k * nv + v] = f * (double(nv) * gk[v] - sg - hk[v] * sgh);
      }
    }
  }
};

/// Continuous three-piece linear activation per channel:
/// f(v) = clamp(v, -tau, tau) + a min(v + tau, 0) + b max(v - tau, 0), tau = exp(t).
/// Parameters a[ch], b[ch], t[ch] at `offset`.
struct ThreePiece
{
  Index ch = 0, offset = 0;

  Index size() const { return 3 * ch; }

  void forward(double const *p, Index nv, std::span<double const> x, std::span<double> y) const
  {
    for (Index k = 0; k < ch; k++) {
      double const a = p[offset + k], b = p[offset + ch + k], tau = std::exp(p[offset + 2 * ch + k]);
      for (Index v = 0; v < nv; v++) {
        double const u = x[k * nv + v];
        y[k * nv + v] = u < -tau ? -tau + a * (u + tau) : (u > tau ? tau + b * (u - tau) : u);
      }
    }
  }

  void backward(double const *p, Index nv, std::span<double const> x, std::span<double const> gy, double *g,
                std::span<double> gx) const
  {
    for (Index k = 0; k < ch; k++) {
      double const a = p[offset + k], b = p[offset + ch + k], tau = std::exp(p[offset + 2 * ch + k]);
      double ga = 0, gb = 0, gt = 0;
      for (Index v = 0; v < nv; v++) {
        double const u = x[k * nv + v], gv = gy[k * nv + v];
        if (u < -tau) {
          ga += gv * (u + tau);
          gt += gv * (a - 1.0) * tau;
          gx[k * nv + v] = a * gv;
        } else if (u > tau) {
          gb += gv * (u - tau);
          gt += gv * (1.0 - b) * tau;
          gx[k * nv + v] = b * gv;
        } else {
          gx[k * nv + v] = gv;
        }
      }
      g[offset + k] += ga;
      g[offset + ch + k] += gb;
      g[offset + 2 * ch + k] += gt;
    }
  }
};

inline void relu_forward(std::span<double const> x, std::span<double> y)
{
  for (std::size_t i = 0; i < x.size(); i++) {
    y[i] = x[i] > 0 ? x[i] : 0.0;
  }
}

inline void relu_backward(std::span<double const> x, std::span<double const> gy, std::span<double> gx)
{
  for (std::size_t i = 0; i < x.size(); i++) {
    gx[i] = x[i] > 0 ? gy[i] : 0.0;
  }
}

} // namespace mrsi::nn
