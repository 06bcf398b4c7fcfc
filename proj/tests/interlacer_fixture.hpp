#pragma once

#include "helpers.hpp"

#include "mrsi/interlacer/train.hpp"
#include "mrsi/phantom/phantom.hpp"

namespace mrsi::test {

struct NetProblem
{
  InterlacerModel model;
  SensitivityMaps maps;
  GriddedInput input;
  ComplexVolume target;
};

/// Every parameter moved off its structured initial value.
inline void randomize(InterlacerModel &m, std::uint64_t seed)
{
  m.initialize(seed);
  std::mt19937_64 rng(seed + 100);
  std::normal_distribution<double> g(0.0, 1.0);
  auto &p = m.params();
  for (auto const &l : m.layers()) {
    p[l.alpha] = 0.8 * g(rng);
    p[l.beta] = 0.8 * g(rng);
    auto bn = [&](nn::BatchNorm const &b) {
      for (Index k = 0; k < b.ch; k++) {
        p[b.offset + k] = 1.0 + 0.3 * g(rng);
        p[b.offset + b.ch + k] = 0.3 * g(rng);
      }
    };
    bn(l.kbn);
    for (auto const &b : l.ibn) {
      bn(b);
    }
    for (Index k = 0; k < l.kact.ch; k++) {
      p[l.kact.offset + k] = 0.5 + 0.3 * g(rng);
      p[l.kact.offset + l.kact.ch + k] = 0.5 + 0.3 * g(rng);
      p[l.kact.offset + 2 * l.kact.ch + k] = -0.5 + 0.3 * g(rng);
    }
    for (auto const *c : {&l.kconv, &l.iconv[0], &l.iconv[1], &l.iconv[2]}) {
      for (Index o = 0; o < c->out; o++) {
        p[c->bias_offset() + o] = 0.1 * g(rng);
      }
    }
  }
  auto const &f = m.final_conv();
  for (Index i = 0; i < f.size(); i++) {
    p[f.offset + i] = 0.1 * g(rng);
  }
}

inline NetProblem net_problem(Index nx, Index ny, Index nz, Index coils, Index layers, Index features,
                              std::uint64_t seed)
{
  GridSpec g = grid(nx, ny, nz);
  InterlacerModel model(InterlacerArch{{nx, ny, nz}, coils, layers, features}, seed);
  randomize(model, seed);
  NetProblem p{std::move(model), synthetic_coil_maps(g, coils), {ComplexVolume(g), GriddedKSpace(g, coils)},
               ComplexVolume(g)};
  p.input.x1.data = random_cx(g.voxels(), seed + 1);
  p.input.k1.data = random_cx(g.voxels() * coils, seed + 2);
  p.target.data = random_cx(g.voxels(), seed + 3);
  return p;
}

inline double net_loss(NetProblem &p)
{
  auto const pred = network_forward_gridded(p.model, p.input, p.maps, NetMode::train);
  return interlacer_loss(pred, p.target).total();
}

inline std::vector<double> net_gradient(NetProblem &p)
{
  std::vector<double> grad;
  PreparedStep step{p.input, p.target, 1.0};
  loss_and_gradient(p.model, step, p.maps, grad);
  return grad;
}

inline double central_difference(NetProblem &p, Index i, double h)
{
  double &w = p.model.params()[i];
  double const w0 = w;
  w = w0 + h;
  double const lp = net_loss(p);
  w = w0 - h;
  double const lm = net_loss(p);
  w = w0;
  return (lp - lm) / (2 * h);
}

inline bool gradient_close(double analytic, double fd, double rel = 1e-3, double abs = 1e-8)
{
  return std::abs(analytic - fd) <= std::max(abs, rel * std::max(std::abs(analytic), std::abs(fd)));
}

} // namespace mrsi::test
