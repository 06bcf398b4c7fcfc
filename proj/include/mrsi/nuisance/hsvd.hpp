#pragma once

#include "mrsi/core/parallel.hpp"
#include "mrsi/core/types.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <numbers>

namespace mrsi {

struct HsvdComponent
{
  Cx amplitude = 0;
  double frequency = 0; // Hz
  double damping = 0;   // 1/s

  Cx at(Index n, double dwell) const
  {
    double const t = double(n) * dwell;
    return amplitude * std::exp(-damping * t) * std::polar(1.0, 2.0 * std::numbers::pi * frequency * t);
  }
};

/// Sum of damped exponentials fitted through the Hankel matrix of the FID
/// (state-space / shift-invariance variant). Poles outside the unit circle
/// are pulled onto it so every component decays.
inline std::vector<HsvdComponent> hsvd_decompose(std::span<Cx const> fid, Index order, double dwell)
{
  Index const n = Index(fid.size());
  if (order < 1 || 2 * order >= n) {
    fail(Errc::invalid_argument, "HSVD order {} must satisfy 1 <= order < n_time / 2 = {}", order, double(n) / 2);
  }
  if (!all_finite(fid)) {
    fail(Errc::non_finite, "HSVD input contains non-finite samples");
  }
  if (max_abs(fid) == 0.0) {
    return {};
  }
  Index const L = n / 2;
  Index const cols = n - L + 1;
  Eigen::MatrixXcd H(L, cols);
  for (Index i = 0; i < L; i++) {
    for (Index j = 0; j < cols; j++) {
      H(i, j) = fid[i + j];
    }
  }
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(H, Eigen::ComputeThinU);
  auto const &s = svd.singularValues();
  Index rank = 0;
  while (rank < std::min<Index>(order, s.size()) && s(rank) > 1e-10 * s(0)) {
    rank++;
  }
  Eigen::MatrixXcd const Ur = svd.matrixU().leftCols(rank);
  Eigen::MatrixXcd const up = Ur.topRows(L - 1), down = Ur.bottomRows(L - 1);
  Eigen::MatrixXcd const Z = up.completeOrthogonalDecomposition().solve(down);
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(Z, false);

  std::vector<HsvdComponent> comps(rank);
  for (Index k = 0; k < rank; k++) {
    Cx z = es.eigenvalues()(k);
    double const mag = std::abs(z);
    if (mag > 1.0) {
      z /= mag;
    }
    comps[k].frequency = std::arg(z) / (2.0 * std::numbers::pi * dwell);
    comps[k].damping = std::max(0.0, -std::log(std::clamp(std::abs(z), 1e-300, 1.0)) / dwell);
  }
  Eigen::MatrixXcd B(n, rank);
  for (Index k = 0; k < rank; k++) {
    for (Index i = 0; i < n; i++) {
      B(i, k) = HsvdComponent{1.0, comps[k].frequency, comps[k].damping}.at(i, dwell);
    }
  }
  Eigen::VectorXcd y(n);
  for (Index i = 0; i < n; i++) {
    y(i) = fid[i];
  }
  Eigen::VectorXcd const a = B.completeOrthogonalDecomposition().solve(y);
  for (Index k = 0; k < rank; k++) {
    comps[k].amplitude = a(k);
  }
  return comps;
}

/// Subtract the fitted components whose frequency lies in [band_lo, band_hi] Hz.
inline void hsvd_remove_band(std::span<Cx> fid, Index order, double dwell, double band_lo, double band_hi)
{
  auto const comps = hsvd_decompose(fid, order, dwell);
  for (auto const &c : comps) {
    if (c.frequency >= band_lo && c.frequency <= band_hi) {
      for (Index i = 0; i < Index(fid.size()); i++) {
        fid[i] -= c.at(i, dwell);
      }
    }
  }
}

/// Voxelwise water removal by HSVD.
inline ImageTimeSeries water_remove(ImageTimeSeries const &series, double band_lo, double band_hi, Index order = 16)
{
  if (!(band_lo <= band_hi)) {
    fail(Errc::invalid_argument, "water band [{}, {}] Hz is empty", band_lo, band_hi);
  }
  ImageTimeSeries out = series;
  Index const nv = series.voxels(), nt = series.frames();
  if (2 * order >= nt) {
    fail(Errc::invalid_argument, "HSVD order {} must satisfy order < n_time / 2 = {}", order, double(nt) / 2);
  }
  parallel_for(nv, [&](Index v) {
    std::vector<Cx> fid(nt);
    for (Index t = 0; t < nt; t++) {
      fid[t] = series.data[v + nv * t];
    }
    hsvd_remove_band(fid, order, series.grid.dwell, band_lo, band_hi);
    for (Index t = 0; t < nt; t++) {
      out.data[v + nv * t] = fid[t];
    }
  });
  return out;
}

} // namespace mrsi
