#pragma once

#include "mrsi/core/fft.hpp"
#include "mrsi/core/parallel.hpp"
#include "mrsi/trajectory/trajectory.hpp"

#include <memory>

namespace mrsi {

/// Kaiser-Bessel gridding NUFT. In-plane frequencies are interpolated from a
/// 2x oversampled grid (kernel width 4); kz uses the exact DFT phase of its partition.
///
/// Forward: s_j = sum_r x(r) exp(-i 2 pi k_j . r), with r measured from the
/// grid centre voxel (index n/2). The adjoint is its exact transpose.
class Nufft
{
public:
  static constexpr double kOversample = 2.0;
  static constexpr double kWidth = 4.0;

  explicit Nufft(Trajectory const &traj)
    : grid_(traj.grid)
    , gx_(Index(std::llround(kOversample * double(traj.grid.nx))))
    , gy_(Index(std::llround(kOversample * double(traj.grid.ny))))
    , m_(traj.samples())
  {
    grid_.validate();
    beta_ = std::numbers::pi *
            std::sqrt((kWidth / kOversample) * (kWidth / kOversample) * (kOversample - 0.5) * (kOversample - 0.5) - 0.8);
    deapod_x_ = deapodization(grid_.nx, gx_);
    deapod_y_ = deapodization(grid_.ny, gy_);

    for (Index j = 0; j < m_; j++) {
      auto const &k = traj.points[j];
      Index const p = traj.partition.empty() ? partition_of_kz(grid_, k.kz) : traj.partition[j];
      auto it = std::find_if(parts_.begin(), parts_.end(), [&](auto const &q) { return q.kz == k.kz; });
      if (it == parts_.end()) {
        parts_.push_back(Part{k.kz, p, {}, {}});
        it = parts_.end() - 1;
      }
      it->samples.push_back(j);
      it->taps.push_back(make_taps(k));
    }
    // z phase per partition: exp(-i 2 pi kz rz).
    for (auto &part : parts_) {
      part.zphase.resize(grid_.nz);
      for (Index z = 0; z < grid_.nz; z++) {
        double const rz = double(z - grid_.nz / 2) * grid_.dz();
        part.zphase[z] = std::polar(1.0, -2.0 * std::numbers::pi * part.kz * rz);
      }
    }
  }

  GridSpec const &grid() const { return grid_; }
  Index samples() const { return m_; }

  void forward(std::span<Cx const> vol, std::span<Cx> out) const
  {
    check(vol.size(), out.size());
    Index const nxy = grid_.nx * grid_.ny;
    std::vector<Cx> slice(nxy), os(gx_ * gy_);
    for (auto const &part : parts_) {
      std::fill(slice.begin(), slice.end(), Cx(0));
      for (Index z = 0; z < grid_.nz; z++) {
        Cx const ph = part.zphase[z];
        Cx const *src = vol.data() + z * nxy;
        for (Index i = 0; i < nxy; i++) {
          slice[i] += src[i] * ph;
        }
      }
      std::fill(os.begin(), os.end(), Cx(0));
      for (Index y = 0; y < grid_.ny; y++) {
        Index const my = wrap(y - grid_.ny / 2, gy_);
        for (Index x = 0; x < grid_.nx; x++) {
          Index const mx = wrap(x - grid_.nx / 2, gx_);
          os[mx + gx_ * my] = slice[x + grid_.nx * y] / (deapod_x_[x] * deapod_y_[y]);
        }
      }
      fft_raw(os, gx_, gy_, 1, FFTW_FORWARD);
      for (std::size_t s = 0; s < part.samples.size(); s++) {
        auto const &t = part.taps[s];
        Cx acc = 0;
        for (int b = 0; b < t.ny; b++) {
          Cx row = 0;
          Index const base = gx_ * t.iy[b];
          for (int a = 0; a < t.nx; a++) {
            row += t.wx[a] * os[base + t.ix[a]];
          }
          acc += t.wy[b] * row;
        }
        out[part.samples[s]] = acc;
      }
    }
  }

  void adjoint(std::span<Cx const> samples, std::span<Cx> vol) const
  {
    check(vol.size(), samples.size());
    Index const nxy = grid_.nx * grid_.ny;
    std::fill(vol.begin(), vol.end(), Cx(0));
    std::vector<Cx> slice(nxy), os(gx_ * gy_);
    for (auto const &part : parts_) {
      std::fill(os.begin(), os.end(), Cx(0));
      for (std::size_t s = 0; s < part.samples.size(); s++) {
        auto const &t = part.taps[s];
        Cx const v = samples[part.samples[s]];
        for (int b = 0; b < t.ny; b++) {
          Cx const vy = t.wy[b] * v;
          Index const base = gx_ * t.iy[b];
          for (int a = 0; a < t.nx; a++) {
            os[base + t.ix[a]] += t.wx[a] * vy;
          }
        }
      }
      fft_raw(os, gx_, gy_, 1, FFTW_BACKWARD);
      for (Index y = 0; y < grid_.ny; y++) {
        Index const my = wrap(y - grid_.ny / 2, gy_);
        for (Index x = 0; x < grid_.nx; x++) {
          Index const mx = wrap(x - grid_.nx / 2, gx_);
          slice[x + grid_.nx * y] = os[mx + gx_ * my] / (deapod_x_[x] * deapod_y_[y]);
        }
      }
      for (Index z = 0; z < grid_.nz; z++) {
        Cx const ph = std::conj(part.zphase[z]);
        Cx *dst = vol.data() + z * nxy;
        for (Index i = 0; i < nxy; i++) {
          dst[i] += slice[i] * ph;
        }
      }
    }
  }

private:
  struct Taps
  {
    int nx = 0, ny = 0;
    Index ix[5], iy[5];
    double wx[5], wy[5];
  };

  struct Part
  {
    double kz;
    Index index;
    std::vector<Index> samples;
    std::vector<Taps> taps;
    std::vector<Cx> zphase;
  };

  static Index wrap(Index i, Index n) { return ((i % n) + n) % n; }

  double kernel(double t) const
  {
    double const u = 2.0 * t / kWidth;
    if (std::abs(u) > 1.0) {
      return 0.0;
    }
    return std::cyl_bessel_i(0.0, beta_ * std::sqrt(1.0 - u * u));
  }

  // Continuous Fourier transform of the kernel at offset m on an n -> g grid.
  std::vector<double> deapodization(Index n, Index g) const
  {
    std::vector<double> d(n);
    for (Index i = 0; i < n; i++) {
      double const nu = double(i - n / 2) / double(g);
      double const a = std::pow(std::numbers::pi * kWidth * nu, 2);
      double const b2 = beta_ * beta_;
      if (b2 > a) {
        double const s = std::sqrt(b2 - a);
        d[i] = kWidth * std::sinh(s) / s;
      } else if (b2 < a) {
        double const s = std::sqrt(a - b2);
        d[i] = kWidth * std::sin(s) / s;
      } else {
        d[i] = kWidth;
      }
    }
    return d;
  }

  Taps make_taps(KPoint const &k) const
  {
    Taps t;
    auto fill = [&](double u, Index g, int &count, Index *idx, double *w) {
      double const c = kOversample * u;
      Index const lo = Index(std::ceil(c - kWidth / 2));
      Index const hi = Index(std::floor(c + kWidth / 2));
      count = 0;
      for (Index q = lo; q <= hi && count < 5; q++) {
        idx[count] = wrap(q, g);
        w[count] = kernel(c - double(q));
        count++;
      }
    };
    fill(k.kx * grid_.fov_x, gx_, t.nx, t.ix, t.wx);
    fill(k.ky * grid_.fov_y, gy_, t.ny, t.iy, t.wy);
    return t;
  }

  void check(std::size_t vol, std::size_t samples) const
  {
    if (Index(vol) != grid_.voxels() || Index(samples) != m_) {
      fail(Errc::shape_mismatch, "NUFT expects {} voxels / {} samples, got {} / {}", grid_.voxels(), m_, vol, samples);
    }
  }

  GridSpec grid_;
  Index gx_, gy_, m_;
  double beta_ = 0;
  std::vector<double> deapod_x_, deapod_y_;
  std::vector<Part> parts_;
};

inline std::vector<Cx> nuft_forward(ComplexVolume const &vol, Trajectory const &traj)
{
  if (!vol.grid.same_space(traj.grid)) {
    fail(Errc::shape_mismatch, "volume grid does not match trajectory grid");
  }
  Nufft op(traj);
  std::vector<Cx> out(traj.samples());
  op.forward(vol.data, out);
  return out;
}

/// x = F^H diag(dcf) s.
inline ComplexVolume inuft_adjoint(std::span<Cx const> samples, Trajectory const &traj, SampleWeights const &dcf)
{
  if (dcf.size() != traj.samples() || Index(samples.size()) != traj.samples()) {
    fail(Errc::shape_mismatch, "iNUFT: {} samples, {} weights, trajectory has {}", samples.size(), dcf.size(),
         traj.samples());
  }
  Nufft op(traj);
  std::vector<Cx> w(samples.begin(), samples.end());
  for (std::size_t j = 0; j < w.size(); j++) {
    w[j] *= dcf.values[j];
  }
  ComplexVolume v(traj.grid);
  op.adjoint(w, v.data);
  return v;
}

} // namespace mrsi
