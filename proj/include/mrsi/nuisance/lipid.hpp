#pragma once

#include "mrsi/core/parallel.hpp"
#include "mrsi/core/types.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace mrsi {

struct LipidMask
{
  GridSpec grid;
  std::vector<std::uint8_t> mask;

  LipidMask() = default;
  explicit LipidMask(GridSpec const &g)
    : grid(g)
    , mask(g.voxels(), 0)
  {
  }
  Index count() const { return Index(std::count(mask.begin(), mask.end(), std::uint8_t(1))); }
  bool empty() const { return count() == 0; }
};

/// Threshold a magnitude image at `threshold * max`, keep the object minus its
/// in-plane erosion by `erosion` voxels (square structuring element).
inline LipidMask lipid_mask_estimate(ComplexVolume const &vol, double threshold = 0.1, Index erosion = 2)
{
  auto const &g = vol.grid;
  double const peak = max_abs(vol.data);
  if (!(peak > 0)) {
    fail(Errc::degenerate, "lipid mask: volume is zero, no object to threshold");
  }
  std::vector<std::uint8_t> obj(g.voxels(), 0);
  for (Index v = 0; v < g.voxels(); v++) {
    obj[v] = std::abs(vol.data[v]) >= threshold * peak;
  }
  LipidMask m(g);
  for (Index z = 0; z < g.nz; z++) {
    for (Index y = 0; y < g.ny; y++) {
      for (Index x = 0; x < g.nx; x++) {
        Index const v = voxel_index(g, x, y, z);
        if (!obj[v]) {
          continue;
        }
        bool interior = true;
        for (Index dy = -erosion; dy <= erosion && interior; dy++) {
          for (Index dx = -erosion; dx <= erosion && interior; dx++) {
            Index const xx = x + dx, yy = y + dy;
            interior = xx >= 0 && yy >= 0 && xx < g.nx && yy < g.ny && obj[voxel_index(g, xx, yy, z)];
          }
        }
        m.mask[v] = !interior;
      }
    }
  }
  return m;
}

/// Per voxel x = (I + beta L L^H)^{-1} y, with the columns of L the time series
/// of the mask voxels of `basis` (defaults to the input itself).
/// Uses L = U S W^H so x = y - U diag(beta s^2 / (1 + beta s^2)) U^H y.
inline ImageTimeSeries lipid_l2_suppress(ImageTimeSeries const &series, LipidMask const &mask, double beta,
                                         ImageTimeSeries const *basis = nullptr)
{
  ImageTimeSeries const &src = basis ? *basis : series;
  if (src.voxels() != series.voxels() || src.frames() != series.frames()) {
    fail(Errc::shape_mismatch, "lipid basis series does not match the input shape");
  }
  if (!(beta >= 0)) {
    fail(Errc::invalid_argument, "lipid beta must be >= 0, got {}", beta);
  }
  if (Index(mask.mask.size()) != series.voxels()) {
    fail(Errc::shape_mismatch, "lipid mask has {} voxels, series {}", mask.mask.size(), series.voxels());
  }
  if (mask.empty()) {
    fail(Errc::degenerate, "lipid mask is empty");
  }
  if (beta == 0) {
    return series;
  }
  Index const nv = series.voxels(), nt = series.frames();
  std::vector<Index> idx;
  for (Index v = 0; v < nv; v++) {
    if (mask.mask[v]) {
      idx.push_back(v);
    }
  }
  Eigen::MatrixXcd L(nt, Index(idx.size()));
  for (Index j = 0; j < Index(idx.size()); j++) {
    for (Index t = 0; t < nt; t++) {
      L(t, j) = src.data[idx[j] + nv * t];
    }
  }
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(L, Eigen::ComputeThinU);
  Eigen::VectorXd const s = svd.singularValues();
  Eigen::VectorXd d(s.size());
  for (Index k = 0; k < s.size(); k++) {
    double const b = beta * s(k) * s(k);
    d(k) = b / (1.0 + b);
  }
  Eigen::MatrixXcd const U = svd.matrixU().leftCols(s.size());
  ImageTimeSeries out = series;
  parallel_for(nv, [&](Index v) {
    Eigen::VectorXcd y(nt);
    for (Index t = 0; t < nt; t++) {
      y(t) = series.data[v + nv * t];
    }
    Eigen::VectorXcd const c = d.cast<Cx>().cwiseProduct(U.adjoint() * y);
    Eigen::VectorXcd const x = y - U * c;
    for (Index t = 0; t < nt; t++) {
      out.data[v + nv * t] = x(t);
    }
  });
  return out;
}

} // namespace mrsi
