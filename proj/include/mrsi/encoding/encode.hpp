#pragma once

#include "mrsi/encoding/b0.hpp"
#include "mrsi/encoding/coils.hpp"
#include "mrsi/encoding/nufft.hpp"

#include <optional>

namespace mrsi {

/// A = W F C B_t: off-resonance (simulation direction), coil expansion,
/// non-uniform Fourier encoding per coil and sample weighting.
class EncodingOperator
{
public:
  EncodingOperator(Trajectory const &traj, SensitivityMaps maps, std::optional<B0Map> b0 = std::nullopt,
                   std::optional<SampleWeights> weights = std::nullopt)
    : grid_(traj.grid)
    , nufft_(std::make_shared<Nufft>(traj))
    , maps_(std::move(maps))
    , b0_(std::move(b0))
    , weights_(std::move(weights))
  {
    check_maps(grid_, maps_, maps_.n_coils);
    if (b0_ && Index(b0_->df.size()) != grid_.voxels()) {
      fail(Errc::shape_mismatch, "B0 map has {} voxels, grid has {}", b0_->df.size(), grid_.voxels());
    }
    if (weights_ && weights_->size() != traj.samples()) {
      fail(Errc::shape_mismatch, "{} sample weights for {} samples", weights_->size(), traj.samples());
    }
  }

  GridSpec const &grid() const { return grid_; }
  Index coils() const { return maps_.n_coils; }
  Index samples() const { return nufft_->samples(); }
  Index frame_samples() const { return coils() * samples(); }
  SensitivityMaps const &maps() const { return maps_; }
  Nufft const &nufft() const { return *nufft_; }
  bool weighted() const { return weights_.has_value(); }
  bool has_b0() const { return b0_.has_value(); }
  std::optional<SampleWeights> const &weights() const { return weights_; }
  EncodingOperator with_weights(std::optional<SampleWeights> w) const
  {
    EncodingOperator o = *this;
    o.weights_ = std::move(w);
    return o;
  }

  /// samples[coil][sample] for timepoint t.
  void forward_frame(std::span<Cx const> vol, Index t, std::span<Cx> out) const
  {
    Index const nv = grid_.voxels(), m = samples();
    if (Index(vol.size()) != nv || Index(out.size()) != coils() * m) {
      fail(Errc::shape_mismatch, "encode: {} voxels / {} outputs, expected {} / {}", vol.size(), out.size(), nv,
           coils() * m);
    }
    std::vector<Cx> x(vol.begin(), vol.end());
    if (b0_) {
      b0_apply_frame(x, *b0_, t, grid_.dwell, +1);
    }
    std::vector<Cx> y(nv);
    for (Index c = 0; c < coils(); c++) {
      auto const map = maps_.coil(c);
      for (Index v = 0; v < nv; v++) {
        y[v] = map[v] * x[v];
      }
      auto dst = out.subspan(c * m, m);
      nufft_->forward(y, dst);
      if (weights_) {
        for (Index j = 0; j < m; j++) {
          dst[j] *= weights_->values[j];
        }
      }
    }
  }

  void adjoint_frame(std::span<Cx const> in, Index t, std::span<Cx> vol) const
  {
    Index const nv = grid_.voxels(), m = samples();
    if (Index(vol.size()) != nv || Index(in.size()) != coils() * m) {
      fail(Errc::shape_mismatch, "encode adjoint: {} inputs / {} voxels, expected {} / {}", in.size(), vol.size(),
           coils() * m, nv);
    }
    std::fill(vol.begin(), vol.end(), Cx(0));
    std::vector<Cx> s(m), y(nv);
    for (Index c = 0; c < coils(); c++) {
      auto const src = in.subspan(c * m, m);
      std::copy(src.begin(), src.end(), s.begin());
      if (weights_) {
        for (Index j = 0; j < m; j++) {
          s[j] *= weights_->values[j];
        }
      }
      nufft_->adjoint(s, y);
      auto const map = maps_.coil(c);
      for (Index v = 0; v < nv; v++) {
        vol[v] += std::conj(map[v]) * y[v];
      }
    }
    if (b0_) {
      b0_apply_frame(vol, *b0_, t, grid_.dwell, -1);
    }
  }

  CoilKSpaceSeries forward(ImageTimeSeries const &series, std::vector<KPoint> const &coords) const
  {
    if (series.voxels() != grid_.voxels()) {
      fail(Errc::shape_mismatch, "series has {} voxels, operator {}", series.voxels(), grid_.voxels());
    }
    GridSpec g = series.grid;
    g.n_coils = coils();
    CoilKSpaceSeries out(g, coords);
    Index const m = samples();
    parallel_for(series.frames(), [&](Index t) {
      std::vector<Cx> buf(coils() * m);
      forward_frame(series.frame(t), t, buf);
      for (Index c = 0; c < coils(); c++) {
        std::copy(buf.begin() + c * m, buf.begin() + (c + 1) * m, out.readout(c, t).begin());
      }
    });
    return out;
  }

  ImageTimeSeries adjoint(CoilKSpaceSeries const &data) const
  {
    GridSpec g = grid_;
    g.n_time = data.grid.n_time;
    g.dwell = data.grid.dwell;
    ImageTimeSeries out(g);
    Index const m = samples();
    if (data.samples() != m || data.grid.n_coils != coils()) {
      fail(Errc::shape_mismatch, "data has {} coils x {} samples, operator {} x {}", data.grid.n_coils, data.samples(),
           coils(), m);
    }
    parallel_for(out.frames(), [&](Index t) {
      std::vector<Cx> buf(coils() * m);
      for (Index c = 0; c < coils(); c++) {
        auto const r = data.readout(c, t);
        std::copy(r.begin(), r.end(), buf.begin() + c * m);
      }
      adjoint_frame(buf, t, out.frame(t));
    });
    return out;
  }

  /// Largest singular value of the per-frame operator by power iteration.
  double norm_estimate(int iterations = 20, std::uint64_t seed = 7) const
  {
    Index const nv = grid_.voxels();
    std::vector<Cx> x(nv), y(frame_samples());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    for (auto &v : x) {
      v = Cx(g(rng), g(rng));
    }
    double lam = 0;
    for (int it = 0; it < iterations; it++) {
      double const n = std::sqrt(norm2(x));
      if (n == 0) {
        return 0.0;
      }
      for (auto &v : x) {
        v /= n;
      }
      forward_frame(x, 0, y);
      adjoint_frame(y, 0, x);
      lam = std::sqrt(norm2(x));
    }
    return std::sqrt(lam);
  }

private:
  GridSpec grid_;
  std::shared_ptr<Nufft const> nufft_;
  SensitivityMaps maps_;
  std::optional<B0Map> b0_;
  std::optional<SampleWeights> weights_;
};

/// Full forward chain on a time series: B(+1), C expansion, F per timepoint, then W.
inline CoilKSpaceSeries encode_forward(ImageTimeSeries const &series, SensitivityMaps const &maps,
                                       std::optional<B0Map> const &b0, Trajectory const &traj,
                                       std::optional<SampleWeights> const &hamming)
{
  EncodingOperator op(traj, maps, b0, hamming);
  return op.forward(series, traj.points);
}

} // namespace mrsi
