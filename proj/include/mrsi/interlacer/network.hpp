#pragma once

#include "mrsi/interlacer/model.hpp"

namespace mrsi {

enum class NetMode
{
  train, // batch statistics, running averages updated
  eval   // running statistics
};

/// Intermediate tensors of one forward pass, kept for the reverse sweep.
struct LayerTape
{
  std::vector<double> x, k;       // layer inputs
  std::vector<double> u, v;       // F(C^-1 x), C(F^-1 k)
  std::vector<double> kmix, xmix; // mixed inputs of the two branches
  std::vector<double> kconv, knorm;
  nn::BatchNorm::Cache kcache;
  std::vector<double> iconv[3], inorm[3], iact[3];
  nn::BatchNorm::Cache icache[3];
};

struct NetTape
{
  std::vector<LayerTape> layers;
  std::vector<double> k_last, k_final;
  std::vector<double> pred; // [re][im]
  bool recorded = false;
  NetMode mode = NetMode::eval;
};

namespace detail {

inline void layer_forward(InterlacerModel &model, Index l, std::span<double const> x, std::span<double const> k,
                          std::vector<double> &x_next, std::vector<double> &k_next, NetMode mode,
                          SensitivityMaps const &maps, LayerTape *tape)
{
  auto const &arch = model.arch();
  auto const &p = model.layers()[Index(l)];
  nn::Shape const s = arch.shape;
  Index const nv = s.voxels(), kc = 2 * arch.coils;
  double const *par = model.params().data();
  double *stats = model.running_stats().data();
  double const a = model.alpha(l), b = model.beta(l);

  LayerTape local;
  LayerTape &t = tape ? *tape : local;
  t.x.assign(x.begin(), x.end());
  t.k.assign(k.begin(), k.end());
  t.u.resize(kc * nv);
  t.v.resize(2 * nv);
  nn::coil_fft(s, maps, x, t.u);
  nn::coil_ifft_combine(s, maps, k, t.v);
  t.kmix.resize(kc * nv);
  for (Index i = 0; i < kc * nv; i++) {
    t.kmix[i] = a * t.u[i] + (1 - a) * k[i];
  }
  t.xmix.resize(2 * nv);
  for (Index i = 0; i < 2 * nv; i++) {
    t.xmix[i] = b * x[i] + (1 - b) * t.v[i];
  }

  auto norm = [&](nn::BatchNorm const &bn, Index st, std::span<double const> in, std::vector<double> &out,
                  nn::BatchNorm::Cache &cache) {
    out.resize(in.size());
    if (mode == NetMode::train) {
      bn.forward_train(par, nv, in, out, cache, stats + st, stats + st + bn.ch);
    } else {
      bn.forward_eval(par, nv, in, out, stats + st, stats + st + bn.ch);
    }
  };

  t.kconv.resize(kc * nv);
  p.kconv.forward(par, s, t.kmix, t.kconv);
  norm(p.kbn, p.kbn_stats, t.kconv, t.knorm, t.kcache);
  k_next.resize(kc * nv);
  p.kact.forward(par, nv, t.knorm, k_next);
  for (Index i = 0; i < kc * nv; i++) {
    k_next[i] += k[i];
  }

  std::span<double const> in = t.xmix;
  for (int j = 0; j < 3; j++) {
    t.iconv[j].resize(p.iconv[j].out * nv);
    p.iconv[j].forward(par, s, in, t.iconv[j]);
    norm(p.ibn[j], p.ibn_stats[j], t.iconv[j], t.inorm[j], t.icache[j]);
    t.iact[j].resize(t.inorm[j].size());
    nn::relu_forward(t.inorm[j], t.iact[j]);
    in = t.iact[j];
  }
  x_next.resize(2 * nv);
  for (Index i = 0; i < 2 * nv; i++) {
    x_next[i] = x[i] + t.iact[2][i];
  }
}

} // namespace detail

/// Runs the residual layers, the final residual k-space convolution, the inverse FFT
/// and the coil combination on a gridded input. Returns the predicted volume.
/// The gridded input is assumed consistent, x1 = C(F^-1 k1).
inline ComplexVolume network_forward_gridded(InterlacerModel &model, GriddedInput const &in, SensitivityMaps const &maps,
                                             NetMode mode = NetMode::eval, NetTape *tape = nullptr)
{
  auto const &arch = model.arch();
  nn::Shape const s = arch.shape;
  if (in.x1.grid.nx != s.nx || in.x1.grid.ny != s.ny || in.x1.grid.nz != s.nz || in.k1.n_coils != arch.coils) {
    fail(Errc::shape_mismatch, "network built for {}x{}x{} with {} coils, input is {}x{}x{} with {} coils", s.nx, s.ny,
         s.nz, arch.coils, in.x1.grid.nx, in.x1.grid.ny, in.x1.grid.nz, in.k1.n_coils);
  }
  nn::check_maps_shape(s, maps, arch.coils);
  Index const nv = s.voxels(), kc = 2 * arch.coils;
  std::vector<double> x = nn::to_channels(in.x1.data), k = nn::coils_to_channels(in.k1.data, arch.coils);
  std::vector<double> xn, kn;
  if (tape) {
    tape->layers.assign(arch.layers, {});
    tape->recorded = true;
    tape->mode = mode;
  }
  for (Index l = 0; l < arch.layers; l++) {
    detail::layer_forward(model, l, x, k, xn, kn, mode, maps, tape ? &tape->layers[l] : nullptr);
    if (!nn::finite(xn) || !nn::finite(kn)) {
      fail(Errc::non_finite, "interlacer layer {} produced non-finite values", l);
    }
    std::swap(x, xn);
    std::swap(k, kn);
  }
  std::vector<double> kf(kc * nv);
  model.final_conv().forward(model.params().data(), s, k, kf);
  for (Index i = 0; i < kc * nv; i++) {
    kf[i] += k[i];
  }
  // pred = x1 + C(F^-1(k_final - k1)); equal to C(F^-1 k_final) for a gridded input,
  // and exactly x1 when every increment is zero.
  auto const k1 = nn::coils_to_channels(in.k1.data, arch.coils);
  std::vector<double> dk(kc * nv), pred(2 * nv);
  for (Index i = 0; i < kc * nv; i++) {
    dk[i] = kf[i] - k1[i];
  }
  nn::coil_ifft_combine(s, maps, dk, pred);
  for (Index v = 0; v < nv; v++) {
    pred[v] += in.x1.data[v].real();
    pred[nv + v] += in.x1.data[v].imag();
  }
  if (!nn::finite(pred)) {
    fail(Errc::non_finite, "interlacer final layer produced non-finite values");
  }
  if (tape) {
    tape->k_last = std::move(k);
    tape->k_final = std::move(kf);
    tape->pred = pred;
  }
  GridSpec g = in.x1.grid;
  return ComplexVolume(g, nn::from_channels(pred));
}

/// Gridding layer followed by the network, for one timepoint of samples [coil][sample].
inline ComplexVolume network_forward(InterlacerModel &model, std::span<Cx const> samples, Nufft const &nufft,
                                     SampleWeights const &dcf, SensitivityMaps const &maps, NetMode mode = NetMode::eval)
{
  return network_forward_gridded(model, gridding_input(samples, nufft, dcf, maps), maps, mode);
}

/// Reverse sweep. `grad_pred` is dL/dRe + i dL/dIm of the prediction; parameter
/// gradients are accumulated into `grad` (same layout as model.params()).
inline void network_backward(InterlacerModel const &model, NetTape const &tape, SensitivityMaps const &maps,
                             std::span<Cx const> grad_pred, std::vector<double> &grad)
{
  if (!tape.recorded) {
    fail(Errc::invalid_argument, "network_backward called without a recorded forward pass");
  }
  if (tape.mode != NetMode::train) {
    fail(Errc::invalid_argument, "network_backward needs a forward pass in training mode");
  }
  auto const &arch = model.arch();
  nn::Shape const s = arch.shape;
  Index const nv = s.voxels(), kc = 2 * arch.coils;
  if (Index(grad_pred.size()) != nv) {
    fail(Errc::shape_mismatch, "prediction gradient has {} values, expected {}", grad_pred.size(), nv);
  }
  grad.resize(model.params().size(), 0.0);
  double const *par = model.params().data();
  double *g = grad.data();

  std::vector<double> gp = nn::to_channels(grad_pred);
  std::vector<double> gkf(kc * nv);
  nn::coil_fft(s, maps, gp, gkf);
  std::vector<double> gk(kc * nv), gx(2 * nv, 0.0);
  model.final_conv().backward(par, s, tape.k_last, gkf, g, gk);
  for (Index i = 0; i < kc * nv; i++) {
    gk[i] += gkf[i];
  }

  std::vector<double> t1, t2, gxmix, gkmix(kc * nv), tmp2(2 * nv), tmpk(kc * nv);
  for (Index l = arch.layers - 1; l >= 0; l--) {
    auto const &p = model.layers()[l];
    auto const &t = tape.layers[l];
    double const a = model.alpha(l), b = model.beta(l);

    // Image branch: x_next = x + relu(bn(conv(...))) three times.
    std::vector<double> gin = gx;
    for (int j = 2; j >= 0; j--) {
      t1.resize(t.inorm[j].size());
      nn::relu_backward(t.inorm[j], gin, t1);
      t2.resize(t1.size());
      p.ibn[j].backward(par, nv, t.icache[j], t1, g, t2);
      std::span<double const> input = j == 0 ? std::span<double const>(t.xmix) : std::span<double const>(t.iact[j - 1]);
      gin.assign(input.size(), 0.0);
      p.iconv[j].backward(par, s, input, t2, g, gin);
    }
    gxmix = std::move(gin);

    // k branch: k_next = k + threepiece(bn(conv(kmix))).
    t1.resize(kc * nv);
    p.kact.backward(par, nv, t.knorm, gk, g, t1);
    t2.resize(kc * nv);
    p.kbn.backward(par, nv, t.kcache, t1, g, t2);
    p.kconv.backward(par, s, t.kmix, t2, g, gkmix);

    // Mixing.
    double da = 0, db = 0;
    for (Index i = 0; i < 2 * nv; i++) {
      db += gxmix[i] * (t.x[i] - t.v[i]);
      gx[i] += b * gxmix[i];
      tmp2[i] = (1 - b) * gxmix[i];
    }
    for (Index i = 0; i < kc * nv; i++) {
      da += gkmix[i] * (t.u[i] - t.k[i]);
      gk[i] += (1 - a) * gkmix[i];
    }
    g[p.alpha] += da * a * (1 - a);
    g[p.beta] += db * b * (1 - b);
    // v = C(F^-1 k) -> dk += F(C^-1 dv); u = F(C^-1 x) -> dx += C(F^-1 du).
    nn::coil_fft(s, maps, tmp2, tmpk);
    for (Index i = 0; i < kc * nv; i++) {
      gk[i] += tmpk[i];
      tmpk[i] = a * gkmix[i];
    }
    nn::coil_ifft_combine(s, maps, tmpk, tmp2);
    for (Index i = 0; i < 2 * nv; i++) {
      gx[i] += tmp2[i];
    }
  }
}

} // namespace mrsi
