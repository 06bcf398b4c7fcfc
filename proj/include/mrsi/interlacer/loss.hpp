#pragma once

#include "mrsi/metrics/metrics.hpp"

namespace mrsi {

struct LossParts
{
  double mse = 0, ssim = 0;
  double total() const { return mse + (1.0 - ssim); }
};

/// L = mean |pred - gt|^2 + (1 - SSIM(|pred|, |gt|)), both magnitudes scaled by max|gt|.
/// If `grad` is non-empty it receives dL/dRe + i dL/dIm for every voxel of pred.
inline LossParts interlacer_loss(ComplexVolume const &pred, ComplexVolume const &gt, std::span<Cx> grad = {},
                                 SsimOptions const &o = {})
{
  Index const n = gt.size();
  if (pred.size() != n || !pred.grid.same_space(gt.grid)) {
    fail(Errc::shape_mismatch, "loss: prediction has {} voxels, target {}", pred.size(), n);
  }
  double const peak = max_abs(gt.data);
  if (!(peak > 0)) {
    fail(Errc::degenerate, "loss: target is zero");
  }
  LossParts out;
  std::vector<double> a(n), b(n), ga(grad.empty() ? 0 : n);
  for (Index i = 0; i < n; i++) {
    out.mse += std::norm(pred.data[i] - gt.data[i]);
    a[i] = std::abs(pred.data[i]) / peak;
    b[i] = std::abs(gt.data[i]) / peak;
  }
  out.mse /= double(n);
  auto const &g = gt.grid;
  out.ssim = ssim(a, b, g.nx, g.ny, g.nz, o, ga);
  if (!grad.empty()) {
    for (Index i = 0; i < n; i++) {
      Cx d = 2.0 * (pred.data[i] - gt.data[i]) / double(n);
      double const m = std::abs(pred.data[i]);
      if (m > 0) {
        d -= ga[i] / peak * pred.data[i] / m;
      }
      grad[i] = d;
    }
  }
  return out;
}

} // namespace mrsi
