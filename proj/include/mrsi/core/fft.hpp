#pragma once

#include "mrsi/core/types.hpp"

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>
#include <tuple>

namespace mrsi {

namespace detail {

class FftwPlan
{
public:
  // dims in row-major order (slowest first), as FFTW expects.
  FftwPlan(std::vector<int> const &dims, int sign)
  {
    Index n = 1;
    for (int d : dims) {
      n *= d;
    }
    std::vector<Cx> scratch(n);
    auto *p = reinterpret_cast<fftw_complex *>(scratch.data());
    plan_ = fftw_plan_dft(int(dims.size()), dims.data(), p, p, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!plan_) {
      fail(Errc::invalid_argument, "could not create FFT plan");
    }
  }
  ~FftwPlan() { fftw_destroy_plan(plan_); }
  FftwPlan(FftwPlan const &) = delete;
  FftwPlan &operator=(FftwPlan const &) = delete;

  // New-array execution is thread-safe in FFTW.
  void execute(Cx *data) const
  {
    auto *p = reinterpret_cast<fftw_complex *>(data);
    fftw_execute_dft(plan_, p, p);
  }

private:
  fftw_plan plan_;
};

inline std::mutex &fftw_mutex()
{
  static std::mutex m;
  return m;
}

inline FftwPlan const &cached_plan(std::vector<int> const &dims, int sign)
{
  static std::map<std::tuple<std::vector<int>, int>, std::unique_ptr<FftwPlan>> cache;
  std::lock_guard lock(fftw_mutex());
  auto key = std::make_tuple(dims, sign);
  auto it = cache.find(key);
  if (it == cache.end()) {
    it = cache.emplace(key, std::make_unique<FftwPlan>(dims, sign)).first;
  }
  return *it->second;
}

// out[(i + s) mod n] = in[i] along each axis of an x-fastest array.
inline void circshift3(std::span<Cx> data, Index nx, Index ny, Index nz, Index sx, Index sy, Index sz)
{
  std::vector<Cx> tmp(data.begin(), data.end());
  for (Index z = 0; z < nz; z++) {
    Index const oz = (z + sz) % nz;
    for (Index y = 0; y < ny; y++) {
      Index const oy = (y + sy) % ny;
      for (Index x = 0; x < nx; x++) {
        Index const ox = (x + sx) % nx;
        data[ox + nx * (oy + ny * oz)] = tmp[x + nx * (y + ny * z)];
      }
    }
  }
}

} // namespace detail

/// Unnormalized in-place DFT of an x-fastest array; sign -1 forward, +1 backward.
inline void fft_raw(std::span<Cx> data, Index nx, Index ny, Index nz, int sign)
{
  std::vector<int> dims;
  if (nz > 1) {
    dims.push_back(int(nz));
  }
  if (ny > 1 || nz > 1) {
    dims.push_back(int(ny));
  }
  dims.push_back(int(nx));
  detail::cached_plan(dims, sign).execute(data.data());
}

/// Centered (DC at index n/2), orthonormal 3D DFT in place.
/// direction -1 is the forward transform, +1 its inverse.
inline void fft3c_inplace(std::span<Cx> data, Index nx, Index ny, Index nz, int direction)
{
  if (Index(data.size()) != nx * ny * nz) {
    fail(Errc::shape_mismatch, "fft buffer has {} values, expected {}", data.size(), nx * ny * nz);
  }
  // ifftshift, transform, fftshift
  detail::circshift3(data, nx, ny, nz, (nx + 1) / 2, (ny + 1) / 2, (nz + 1) / 2);
  fft_raw(data, nx, ny, nz, direction < 0 ? FFTW_FORWARD : FFTW_BACKWARD);
  detail::circshift3(data, nx, ny, nz, nx / 2, ny / 2, nz / 2);
  double const scale = 1.0 / std::sqrt(double(nx * ny * nz));
  for (auto &v : data) {
    v *= scale;
  }
}

inline GriddedKSpace fft3_centered(ComplexVolume const &vol)
{
  if (vol.size() != vol.grid.voxels()) {
    fail(Errc::shape_mismatch, "volume size {} does not match grid {}", vol.size(), vol.grid.voxels());
  }
  if (!all_finite<Cx>(vol.data)) {
    fail(Errc::non_finite, "fft3_centered input contains non-finite values");
  }
  GriddedKSpace k(vol.grid, 1);
  std::copy(vol.data.begin(), vol.data.end(), k.data.begin());
  fft3c_inplace(k.data, vol.grid.nx, vol.grid.ny, vol.grid.nz, -1);
  return k;
}

/// Inverse of fft3_centered for a single-coil spectrum.
inline ComplexVolume ifft3_centered(GriddedKSpace const &k)
{
  if (k.n_coils != 1 || Index(k.data.size()) != k.grid.voxels()) {
    fail(Errc::shape_mismatch, "ifft3_centered expects one coil of {} cells, got {} values", k.grid.voxels(),
         k.data.size());
  }
  ComplexVolume v(k.grid, k.data);
  fft3c_inplace(v.data, k.grid.nx, k.grid.ny, k.grid.nz, +1);
  return v;
}

} // namespace mrsi
