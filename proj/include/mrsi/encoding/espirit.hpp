#pragma once

#include "mrsi/encoding/coils.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <numbers>

namespace mrsi {

struct EspiritOptions
{
  Index kernel_x = 6, kernel_y = 6, kernel_z = 3;
  double sv_threshold = 0.01;  // keep singular values >= threshold * sigma_1
  double eig_threshold = 0.9;  // zero maps where the dominant eigenvalue is lower
};

/// ESPIRiT sensitivity estimation from a Cartesian low-resolution calibration
/// region (`calib.grid` holds the calibration matrix and shares the target FOV).
/// Block-Hankel calibration matrix -> SVD row space -> per-voxel eigenvectors of
/// the image-space projection operator on `target`. Kernel extents are clipped
/// to half the calibration extent (rounded up).
inline SensitivityMaps espirit_maps(GriddedKSpace const &calib, GridSpec const &target,
                                    EspiritOptions const &opt = {}, std::vector<double> *eigenvalues = nullptr)
{
  GridSpec const &cg = calib.grid;
  Index const nc = calib.n_coils;
  // A kernel wider than half the calibration extent has fewer shifts than
  // taps along that axis, and the eigenvalues in the object drop below 1.
  auto fit = [](Index k, Index n) { return std::min(k, (n + 1) / 2); };
  Index const kx = fit(opt.kernel_x, cg.nx), ky = fit(opt.kernel_y, cg.ny), kz = fit(opt.kernel_z, cg.nz);
  if (cg.nx < 1 || kx < 1 || ky < 1 || kz < 1) {
    fail(Errc::invalid_argument, "calibration region smaller than kernel");
  }
  Index const px = cg.nx - kx + 1, py = cg.ny - ky + 1, pz = cg.nz - kz + 1;
  Index const ksz = kx * ky * kz;
  Index const rows = px * py * pz;
  Index const cols = nc * ksz;

  Eigen::MatrixXcd A(rows, cols);
  for (Index oz = 0; oz < pz; oz++) {
    for (Index oy = 0; oy < py; oy++) {
      for (Index ox = 0; ox < px; ox++) {
        Index const row = ox + px * (oy + py * oz);
        for (Index c = 0; c < nc; c++) {
          auto const cd = calib.coil(c);
          for (Index z = 0; z < kz; z++) {
            for (Index y = 0; y < ky; y++) {
              for (Index x = 0; x < kx; x++) {
                Index const col = c * ksz + x + kx * (y + ky * z);
                A(row, col) = cd[voxel_index(cg, ox + x, oy + y, oz + z)];
              }
            }
          }
        }
      }
    }
  }
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(A, Eigen::ComputeThinV);
  auto const &sv = svd.singularValues();
  if (sv.size() == 0 || !(sv(0) > 0)) {
    fail(Errc::degenerate, "calibration matrix has rank 0");
  }
  Index keep = 0;
  while (keep < sv.size() && sv(keep) >= opt.sv_threshold * sv(0)) {
    keep++;
  }
  Eigen::MatrixXcd const V = svd.matrixV().leftCols(keep);

  // h_jc(r) = sum_kappa conj(V[(c,kappa), j]) exp(+i 2 pi kappa . r / N)
  auto phases = [](Index n, Index k) {
    std::vector<Cx> e(n * k);
    for (Index q = 0; q < k; q++) {
      for (Index i = 0; i < n; i++) {
        e[q * n + i] = std::polar(1.0, 2.0 * std::numbers::pi * double(q) * double(i - n / 2) / double(n));
      }
    }
    return e;
  };
  auto const Ex = phases(target.nx, kx), Ey = phases(target.ny, ky), Ez = phases(target.nz, kz);
  Index const nv = target.voxels();
  Index const nxy = target.nx * target.ny;
  std::vector<Cx> Q(nv * nc * nc, Cx(0));
  std::vector<Cx> h(nc * nv), t1(kz * ky * target.nx), t2(kz * nxy);
  double const inv_m = 1.0 / double(ksz);
  for (Index j = 0; j < keep; j++) {
    for (Index c = 0; c < nc; c++) {
      std::fill(t1.begin(), t1.end(), Cx(0));
      for (Index z = 0; z < kz; z++) {
        for (Index y = 0; y < ky; y++) {
          for (Index x = 0; x < kx; x++) {
            Cx const v = std::conj(V(c * ksz + x + kx * (y + ky * z), j));
            Cx *dst = t1.data() + (z * ky + y) * target.nx;
            for (Index i = 0; i < target.nx; i++) {
              dst[i] += v * Ex[x * target.nx + i];
            }
          }
        }
      }
      std::fill(t2.begin(), t2.end(), Cx(0));
      for (Index z = 0; z < kz; z++) {
        for (Index y = 0; y < ky; y++) {
          Cx const *src = t1.data() + (z * ky + y) * target.nx;
          for (Index iy = 0; iy < target.ny; iy++) {
            Cx const e = Ey[y * target.ny + iy];
            Cx *dst = t2.data() + z * nxy + iy * target.nx;
            for (Index i = 0; i < target.nx; i++) {
              dst[i] += e * src[i];
            }
          }
        }
      }
      Cx *hc = h.data() + c * nv;
      std::fill(hc, hc + nv, Cx(0));
      for (Index z = 0; z < kz; z++) {
        for (Index iz = 0; iz < target.nz; iz++) {
          Cx const e = Ez[z * target.nz + iz];
          for (Index i = 0; i < nxy; i++) {
            hc[iz * nxy + i] += e * t2[z * nxy + i];
          }
        }
      }
    }
    for (Index v = 0; v < nv; v++) {
      Cx *q = Q.data() + v * nc * nc;
      for (Index a = 0; a < nc; a++) {
        for (Index b = 0; b < nc; b++) {
          q[a * nc + b] += h[a * nv + v] * std::conj(h[b * nv + v]) * inv_m;
        }
      }
    }
  }

  SensitivityMaps maps(target, nc);
  if (eigenvalues) {
    eigenvalues->assign(nv, 0.0);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es;
  Eigen::MatrixXcd M(nc, nc);
  for (Index v = 0; v < nv; v++) {
    for (Index a = 0; a < nc; a++) {
      for (Index b = 0; b < nc; b++) {
        M(a, b) = Q[v * nc * nc + a * nc + b];
      }
    }
    es.compute(M);
    double const lam = es.eigenvalues()(nc - 1);
    if (eigenvalues) {
      (*eigenvalues)[v] = lam;
    }
    if (lam < opt.eig_threshold) {
      continue;
    }
    Eigen::VectorXcd vec = es.eigenvectors().col(nc - 1);
    Index anchor = 0;
    if (std::abs(vec(0)) < 1e-8) {
      vec.cwiseAbs().maxCoeff(&anchor);
    }
    Cx const ph = std::polar(1.0, -std::arg(vec(anchor)));
    vec *= ph;
    vec.normalize();
    for (Index c = 0; c < nc; c++) {
      maps.data[c * nv + v] = vec(c);
    }
  }
  return maps;
}

} // namespace mrsi
