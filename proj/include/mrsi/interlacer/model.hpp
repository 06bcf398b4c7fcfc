#pragma once

#include "mrsi/core/fft.hpp"
#include "mrsi/encoding/coils.hpp"
#include "mrsi/encoding/nufft.hpp"
#include "mrsi/interlacer/layers.hpp"

#include <random>

namespace mrsi {

struct InterlacerArch
{
  nn::Shape shape;
  Index coils = 1;
  Index layers = 10;
  Index features = 64;

  void validate() const
  {
    if (layers < 1) {
      fail(Errc::invalid_argument, "interlacer needs at least one layer, got {}", layers);
    }
    if (coils < 1 || features < 1 || shape.voxels() < 1) {
      fail(Errc::invalid_argument, "interlacer shape, coil and feature counts must be positive");
    }
  }
};

struct InterlacerLayerParams
{
  Index alpha = 0, beta = 0; // unconstrained, mapped through a sigmoid
  nn::Conv3 kconv;
  nn::BatchNorm kbn;
  nn::ThreePiece kact;
  nn::Conv3 iconv[3];
  nn::BatchNorm ibn[3];
  Index kbn_stats = 0, ibn_stats[3] = {};
};

/// Named slice of the flat parameter vector.
struct ParamSegment
{
  std::string name;
  Index offset = 0, size = 0;
};

/// Recurrent image/k-space network. Streams are real channel-major buffers:
/// image x as [re, im], k-space as [coil0 re, coil0 im, coil1 re, ...].
class InterlacerModel
{
public:
  InterlacerModel() = default;
  explicit InterlacerModel(InterlacerArch const &arch, std::uint64_t seed = 1)
    : arch_(arch)
  {
    arch_.validate();
    Index off = 0, soff = 0;
    auto conv = [&](Index in, Index out) {
      nn::Conv3 c{in, out, off};
      off += c.size();
      return c;
    };
    auto bn = [&](Index ch, Index &stats) {
      nn::BatchNorm b{ch, off};
      off += b.size();
      stats = soff;
      soff += 2 * ch;
      return b;
    };
    Index const kc = 2 * arch_.coils;
    Index const chans[4] = {2, 2, arch_.features, 2};
    for (Index l = 0; l < arch_.layers; l++) {
      InterlacerLayerParams p;
      std::string const pre = fmt::format("layer{}.", l);
      p.alpha = off++;
      segments_.push_back({pre + "alpha", p.alpha, 1});
      p.beta = off++;
      segments_.push_back({pre + "beta", p.beta, 1});
      p.kconv = conv(kc, kc);
      segments_.push_back({pre + "kconv", p.kconv.offset, p.kconv.size()});
      p.kbn = bn(kc, p.kbn_stats);
      segments_.push_back({pre + "kbn", p.kbn.offset, p.kbn.size()});
      p.kact = nn::ThreePiece{kc, off};
      off += p.kact.size();
      segments_.push_back({pre + "threepiece", p.kact.offset, p.kact.size()});
      for (int b = 0; b < 3; b++) {
        p.iconv[b] = conv(chans[b], chans[b + 1]);
        segments_.push_back({pre + fmt::format("iconv{}", b), p.iconv[b].offset, p.iconv[b].size()});
        p.ibn[b] = bn(chans[b + 1], p.ibn_stats[b]);
        segments_.push_back({pre + fmt::format("ibn{}", b), p.ibn[b].offset, p.ibn[b].size()});
      }
      layers_.push_back(p);
    }
    final_ = conv(kc, kc);
    segments_.push_back({"final_conv", final_.offset, final_.size()});
    params_.assign(off, 0.0);
    stats_.assign(soff, 0.0);
    initialize(seed);
  }

  InterlacerArch const &arch() const { return arch_; }
  std::vector<InterlacerLayerParams> const &layers() const { return layers_; }
  nn::Conv3 const &final_conv() const { return final_; }
  std::vector<ParamSegment> const &segments() const { return segments_; }
  std::vector<double> &params() { return params_; }
  std::vector<double> const &params() const { return params_; }
  std::vector<double> &running_stats() { return stats_; }
  std::vector<double> const &running_stats() const { return stats_; }

  double alpha(Index l) const { return nn::sigmoid(params_[layers_[l].alpha]); }
  double beta(Index l) const { return nn::sigmoid(params_[layers_[l].beta]); }

  static constexpr double kLastScale = 0.03;

  /// He-normal convolution weights, unit BatchNorm scale, 3-piece slopes 0.5 with tau 1,
  /// alpha = beta = 0.5. The last normalization of each branch starts at a small scale and
  /// the final conv at zero, so the untrained network stays close to its gridded input.

  void initialize(std::uint64_t seed)
  {
    std::mt19937_64 rng(seed);
    std::fill(params_.begin(), params_.end(), 0.0);
    auto he = [&](nn::Conv3 const &c) {
      std::normal_distribution<double> g(0.0, std::sqrt(2.0 / double(c.in * nn::Conv3::kTaps)));
      for (Index i = 0; i < c.weight_count(); i++) {
        params_[c.offset + i] = g(rng);
      }
    };
    auto unit = [&](nn::BatchNorm const &b, double gamma) {
      for (Index k = 0; k < b.ch; k++) {
        params_[b.offset + k] = gamma;
      }
    };
    for (auto const &p : layers_) {
      he(p.kconv);
      unit(p.kbn, kLastScale);
      for (Index k = 0; k < p.kact.ch; k++) {
        params_[p.kact.offset + k] = 0.5;
        params_[p.kact.offset + p.kact.ch + k] = 0.5;
      }
      for (int b = 0; b < 3; b++) {
        he(p.iconv[b]);
        unit(p.ibn[b], b == 2 ? kLastScale : 1.0);
      }
    }
    std::fill(stats_.begin(), stats_.end(), 0.0);
    for (auto const &p : layers_) {
      std::fill_n(stats_.begin() + p.kbn_stats + p.kbn.ch, p.kbn.ch, 1.0);
      for (int b = 0; b < 3; b++) {
        std::fill_n(stats_.begin() + p.ibn_stats[b] + p.ibn[b].ch, p.ibn[b].ch, 1.0);
      }
    }
  }

private:
  InterlacerArch arch_;
  std::vector<InterlacerLayerParams> layers_;
  nn::Conv3 final_;
  std::vector<ParamSegment> segments_;
  std::vector<double> params_;
  std::vector<double> stats_; // per BatchNorm: running mean[ch], running var[ch]
};

namespace nn {

inline void check_maps_shape(Shape s, SensitivityMaps const &maps, Index coils)
{
  if (maps.grid.nx != s.nx || maps.grid.ny != s.ny || maps.grid.nz != s.nz || maps.n_coils != coils) {
    fail(Errc::shape_mismatch, "sensitivity maps {}x{}x{} with {} coils do not match network {}x{}x{} with {} coils",
         maps.grid.nx, maps.grid.ny, maps.grid.nz, maps.n_coils, s.nx, s.ny, s.nz, coils);
  }
}

/// k_c = F(S_c x): image stream [2][nv] to k-space stream [2C][nv].
inline void coil_fft(Shape s, SensitivityMaps const &maps, std::span<double const> x, std::span<double> k)
{
  Index const nv = s.voxels();
  std::vector<Cx> buf(nv);
  for (Index c = 0; c < maps.n_coils; c++) {
    auto const m = maps.coil(c);
    for (Index v = 0; v < nv; v++) {
      buf[v] = m[v] * Cx(x[v], x[nv + v]);
    }
    fft3c_inplace(buf, s.nx, s.ny, s.nz, -1);
    for (Index v = 0; v < nv; v++) {
      k[2 * c * nv + v] = buf[v].real();
      k[(2 * c + 1) * nv + v] = buf[v].imag();
    }
  }
}

/// x = sum_c conj(S_c) F^-1(k_c); the adjoint of coil_fft.
inline void coil_ifft_combine(Shape s, SensitivityMaps const &maps, std::span<double const> k, std::span<double> x)
{
  Index const nv = s.voxels();
  std::vector<Cx> buf(nv), acc(nv, Cx(0));
  for (Index c = 0; c < maps.n_coils; c++) {
    for (Index v = 0; v < nv; v++) {
      buf[v] = Cx(k[2 * c * nv + v], k[(2 * c + 1) * nv + v]);
    }
    fft3c_inplace(buf, s.nx, s.ny, s.nz, +1);
    auto const m = maps.coil(c);
    for (Index v = 0; v < nv; v++) {
      acc[v] += std::conj(m[v]) * buf[v];
    }
  }
  for (Index v = 0; v < nv; v++) {
    x[v] = acc[v].real();
    x[nv + v] = acc[v].imag();
  }
}

inline std::vector<double> to_channels(std::span<Cx const> v)
{
  Index const n = Index(v.size());
  std::vector<double> out(2 * n);
  for (Index i = 0; i < n; i++) {
    out[i] = v[i].real();
    out[n + i] = v[i].imag();
  }
  return out;
}

inline std::vector<double> coils_to_channels(std::span<Cx const> k, Index coils)
{
  Index const nv = Index(k.size()) / coils;
  std::vector<double> out(2 * k.size());
  for (Index c = 0; c < coils; c++) {
    for (Index v = 0; v < nv; v++) {
      out[2 * c * nv + v] = k[c * nv + v].real();
      out[(2 * c + 1) * nv + v] = k[c * nv + v].imag();
    }
  }
  return out;
}

inline std::vector<Cx> from_channels(std::span<double const> x)
{
  Index const n = Index(x.size()) / 2;
  std::vector<Cx> out(n);
  for (Index i = 0; i < n; i++) {
    out[i] = Cx(x[i], x[n + i]);
  }
  return out;
}

inline bool finite(std::span<double const> v)
{
  return std::all_of(v.begin(), v.end(), [](double d) { return std::isfinite(d); });
}

} // namespace nn

/// Network input from one timepoint of non-Cartesian samples ([coil][sample]):
/// per-coil iNUFT images, their coil combination x1 and their centred spectra k1.
struct GriddedInput
{
  ComplexVolume x1;
  GriddedKSpace k1;
};

inline GriddedInput gridding_input(std::span<Cx const> samples, Nufft const &nufft, SampleWeights const &dcf,
                                   SensitivityMaps const &maps)
{
  GridSpec const &g = nufft.grid();
  Index const m = nufft.samples(), nc = maps.n_coils;
  if (Index(samples.size()) != nc * m || dcf.size() != m) {
    fail(Errc::shape_mismatch, "gridding input: {} samples and {} weights for {} coils x {} samples", samples.size(),
         dcf.size(), nc, m);
  }
  if (maps.grid.voxels() != g.voxels()) {
    fail(Errc::shape_mismatch, "sensitivity maps hold {} voxels, grid has {}", maps.grid.voxels(), g.voxels());
  }
  GriddedInput out{ComplexVolume(g), GriddedKSpace(g, nc)};
  std::vector<Cx> w(m);
  for (Index c = 0; c < nc; c++) {
    for (Index j = 0; j < m; j++) {
      w[j] = samples[c * m + j] * dcf.values[j];
    }
    auto img = out.k1.coil(c);
    nufft.adjoint(w, img);
    auto const map = maps.coil(c);
    for (Index v = 0; v < g.voxels(); v++) {
      out.x1.data[v] += std::conj(map[v]) * img[v];
    }
    fft3c_inplace(img, g.nx, g.ny, g.nz, -1);
  }
  return out;
}

/// k_mix = alpha F(C^-1 x) + (1 - alpha) k,  x_mix = beta x + (1 - beta) C(F^-1 k).
inline std::pair<ComplexVolume, GriddedKSpace> mix(ComplexVolume const &x, GriddedKSpace const &k, double alpha,
                                                   double beta, SensitivityMaps const &maps)
{
  if (!(alpha >= 0 && alpha <= 1 && beta >= 0 && beta <= 1)) {
    fail(Errc::invalid_argument, "mixing weights must lie in [0, 1], got alpha = {}, beta = {}", alpha, beta);
  }
  nn::Shape const s{x.grid.nx, x.grid.ny, x.grid.nz};
  nn::check_maps_shape(s, maps, k.n_coils);
  Index const nv = s.voxels();
  auto const xc = nn::to_channels(x.data);
  auto const kc = nn::coils_to_channels(k.data, k.n_coils);
  std::vector<double> u(kc.size()), v(xc.size());
  nn::coil_fft(s, maps, xc, u);
  nn::coil_ifft_combine(s, maps, kc, v);
  std::pair<ComplexVolume, GriddedKSpace> out{ComplexVolume(x.grid), GriddedKSpace(k.grid, k.n_coils)};
  for (Index i = 0; i < nv; i++) {
    out.first.data[i] = beta * x.data[i] + (1 - beta) * Cx(v[i], v[nv + i]);
  }
  for (Index c = 0; c < k.n_coils; c++) {
    for (Index i = 0; i < nv; i++) {
      Cx const f(u[2 * c * nv + i], u[(2 * c + 1) * nv + i]);
      out.second.data[c * nv + i] = alpha * f + (1 - alpha) * k.data[c * nv + i];
    }
  }
  return out;
}

} // namespace mrsi
