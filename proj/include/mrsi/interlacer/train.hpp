#pragma once

#include "mrsi/core/log.hpp"
#include "mrsi/core/normalize.hpp"
#include "mrsi/interlacer/loss.hpp"
#include "mrsi/interlacer/network.hpp"
#include "mrsi/trajectory/voronoi.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>

namespace mrsi {

struct AugmentConfig
{
  bool phase = true;
  bool rotation = true;    // about z, uniform +-max_rotation rad
  bool translation = true; // uniform +-max_shift mm per axis
  bool scale = true;       // isotropic, uniform 1 +- max_scale
  double max_rotation = 0.3, max_shift = 20.0, max_scale = 0.2;
};

/// Image-space training pair: `source` is encoded to produce the fully sampled data,
/// `target` is the reference the prediction is scored against.
struct TrainingSample
{
  ComplexVolume source, target;
};

struct AugmentParams
{
  double phase = 0, rotation = 0, tx = 0, ty = 0, tz = 0, scale = 1;
};

inline AugmentParams draw_augment(std::uint64_t seed, AugmentConfig const &c)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  AugmentParams p;
  // Draw every component so switching one off does not shift the others.
  double const ph = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
  double const rot = u(rng), sx = u(rng), sy = u(rng), sz = u(rng), sc = u(rng);
  if (c.phase) {
    p.phase = ph;
  }
  if (c.rotation) {
    p.rotation = rot * c.max_rotation;
  }
  if (c.translation) {
    p.tx = sx * c.max_shift, p.ty = sy * c.max_shift, p.tz = sz * c.max_shift;
  }
  if (c.scale) {
    p.scale = 1.0 + sc * c.max_scale;
  }
  return p;
}

/// out(r) = e^{i phase} in(T^-1 r), T = translate o rotate_z o scale about the grid centre,
/// trilinear interpolation with zero fill outside the volume. Shifts are limited to a quarter
/// of the field of view per axis and dropped along single-voxel axes.
inline ComplexVolume apply_augment(ComplexVolume const &in, AugmentParams p)
{
  GridSpec const &g = in.grid;
  auto limit = [](double t, Index n, double fov) { return n > 1 ? std::clamp(t, -fov / 4, fov / 4) : 0.0; };
  p.tx = limit(p.tx, g.nx, g.fov_x);
  p.ty = limit(p.ty, g.ny, g.fov_y);
  p.tz = limit(p.tz, g.nz, g.fov_z);
  ComplexVolume out(g);
  double const c = std::cos(p.rotation), s = std::sin(p.rotation);
  Cx const ph = std::polar(1.0, p.phase);
  bool const identity = p.rotation == 0 && p.tx == 0 && p.ty == 0 && p.tz == 0 && p.scale == 1;
  auto at = [&](Index x, Index y, Index z) -> Cx {
    if (x < 0 || y < 0 || z < 0 || x >= g.nx || y >= g.ny || z >= g.nz) {
      return 0.0;
    }
    return in(x, y, z);
  };
  for (Index z = 0; z < g.nz; z++) {
    for (Index y = 0; y < g.ny; y++) {
      for (Index x = 0; x < g.nx; x++) {
        if (identity) {
          out(x, y, z) = ph * in(x, y, z);
          continue;
        }
        double const rx = double(x - g.nx / 2) * g.dx() - p.tx;
        double const ry = double(y - g.ny / 2) * g.dy() - p.ty;
        double const rz = double(z - g.nz / 2) * g.dz() - p.tz;
        double const qx = (c * rx + s * ry) / p.scale, qy = (-s * rx + c * ry) / p.scale, qz = rz / p.scale;
        double const fx = qx / g.dx() + double(g.nx / 2), fy = qy / g.dy() + double(g.ny / 2),
                     fz = qz / g.dz() + double(g.nz / 2);
        Index const x0 = Index(std::floor(fx)), y0 = Index(std::floor(fy)), z0 = Index(std::floor(fz));
        double const ax = fx - double(x0), ay = fy - double(y0), az = fz - double(z0);
        Cx v = 0;
        for (int dz = 0; dz < 2; dz++) {
          for (int dy = 0; dy < 2; dy++) {
            for (int dx = 0; dx < 2; dx++) {
              double const w = (dx ? ax : 1 - ax) * (dy ? ay : 1 - ay) * (dz ? az : 1 - az);
              if (w != 0) {
                v += w * at(x0 + dx, y0 + dy, z0 + dz);
              }
            }
          }
        }
        out(x, y, z) = ph * v;
      }
    }
  }
  return out;
}

inline TrainingSample augment(TrainingSample const &s, std::uint64_t seed, AugmentConfig const &c = {})
{
  auto const p = draw_augment(seed, c);
  return {apply_augment(s.source, p), apply_augment(s.target, p)};
}

struct TrainConfig
{
  double lr = 1e-5;
  Index epochs = 500;
  double af_min = 1.0, af_max = 6.0;
  std::uint64_t seed = 1;
  AugmentConfig augmentation;
  bool augment = true;
  bool fixed_mask = false;  // reuse one undersampling draw for every step
  double noise_rel = 0.0;   // complex noise sigma relative to the RMS of the encoded data
  Index steps_per_epoch = 0; // 0: one step per training sample
  Index mask_pool = 0;       // > 0: draw masks from this many cached undersampling patterns

  void validate() const
  {
    if (!(lr >= 0) || !std::isfinite(lr)) {
      fail(Errc::invalid_argument, "learning rate must be >= 0, got {}", lr);
    }
    if (epochs < 1) {
      fail(Errc::invalid_argument, "epochs must be >= 1, got {}", epochs);
    }
    if (!(af_min >= 1.0 && af_max >= af_min)) {
      fail(Errc::invalid_argument, "acceleration range [{}, {}] invalid", af_min, af_max);
    }
    if (!(noise_rel >= 0) || steps_per_epoch < 0 || mask_pool < 0) {
      fail(Errc::invalid_argument, "noise level, steps per epoch and mask pool must be non-negative");
    }
  }
};

struct Adam
{
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  long t = 0;

  void step(std::vector<double> &params, std::vector<double> const &grad, double lr)
  {
    if (m.size() != params.size()) {
      m.assign(params.size(), 0.0);
      v.assign(params.size(), 0.0);
    }
    t++;
    double const c1 = 1.0 - std::pow(beta1, double(t)), c2 = 1.0 - std::pow(beta2, double(t));
    for (std::size_t i = 0; i < params.size(); i++) {
      m[i] = beta1 * m[i] + (1 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1 - beta2) * grad[i] * grad[i];
      params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

/// Sampling pattern with its NUFT plan and density compensation.
struct SamplingPlan
{
  Trajectory traj;
  std::shared_ptr<Nufft const> nufft;
  SampleWeights dcf;

  explicit SamplingPlan(Trajectory t)
    : traj(std::move(t))
    , nufft(std::make_shared<Nufft const>(traj))
    , dcf(inversion_dcf(voronoi_dcf(traj), traj.grid))
  {
  }
};

/// Undersampled, gridded and normalized network input with its matching target.
struct PreparedStep
{
  GriddedInput input;
  ComplexVolume target;
  double scale = 1;
};

inline PreparedStep prepare_step(TrainingSample const &s, SamplingPlan const &plan, SensitivityMaps const &maps,
                                 double noise_sigma_rel, std::uint64_t noise_seed)
{
  Nufft const &nufft = *plan.nufft;
  Index const m = nufft.samples(), nc = maps.n_coils, nv = plan.traj.grid.voxels();
  std::vector<Cx> samples(nc * m), img(nv);
  for (Index c = 0; c < nc; c++) {
    auto const map = maps.coil(c);
    for (Index v = 0; v < nv; v++) {
      img[v] = map[v] * s.source.data[v];
    }
    nufft.forward(img, std::span<Cx>(samples).subspan(c * m, m));
  }
  if (noise_sigma_rel > 0) {
    double const sigma = noise_sigma_rel * std::sqrt(norm2(samples) / double(samples.size()));
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> g(0.0, sigma);
    for (auto &v : samples) {
      double const re = g(rng), im = g(rng);
      v += Cx(re, im);
    }
  }
  PreparedStep out{gridding_input(samples, nufft, plan.dcf, maps), s.target, 1.0};
  out.scale = normalize_unit(out.input.x1.data, {out.input.k1.data, out.target.data});
  return out;
}

struct TrainResult
{
  std::vector<double> epoch_loss;
  Index steps = 0;
};

/// Gradient of the loss for one prepared step; returns the loss.
inline LossParts loss_and_gradient(InterlacerModel &model, PreparedStep const &step, SensitivityMaps const &maps,
                                   std::vector<double> &grad)
{
  NetTape tape;
  auto const pred = network_forward_gridded(model, step.input, maps, NetMode::train, &tape);
  std::vector<Cx> gp(pred.size());
  auto const parts = interlacer_loss(pred, step.target, gp);
  grad.assign(model.params().size(), 0.0);
  network_backward(model, tape, maps, gp, grad);
  return parts;
}

/// Adam on single-sample steps: draw sample -> augment -> draw AF -> undersample -> normalize
/// -> forward -> loss -> update. `traj` is the fully sampled circle trajectory.
inline TrainResult train(InterlacerModel &model, std::vector<TrainingSample> const &data, Trajectory const &traj,
                         SensitivityMaps const &maps, TrainConfig const &cfg)
{
  cfg.validate();
  if (data.empty()) {
    fail(Errc::invalid_argument, "training set is empty");
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::uniform_real_distribution<double> af_draw(cfg.af_min, cfg.af_max);
  Index const steps = cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch : Index(data.size());
  std::optional<SamplingPlan> plan;
  std::vector<std::optional<SamplingPlan>> pool(cfg.mask_pool);
  Adam opt;
  TrainResult res;
  std::vector<double> grad;
  for (Index e = 0; e < cfg.epochs; e++) {
    double sum = 0;
    for (Index k = 0; k < steps; k++) {
      std::size_t const i = pick(rng);
      std::uint64_t const aug_seed = rng(), mask_seed = rng(), noise_seed = rng();
      double const af = af_draw(rng);
      TrainingSample const s = cfg.augment ? augment(data[i], aug_seed, cfg.augmentation) : data[i];
      auto draw = [&] { return traj.circles.empty() || af <= 1.0 ? traj : undersample(traj, af, mask_seed); };
      SamplingPlan const *use = nullptr;
      if (cfg.mask_pool > 0 && !cfg.fixed_mask) {
        auto &slot = pool[mask_seed % std::uint64_t(cfg.mask_pool)];
        if (!slot) {
          slot.emplace(draw());
        }
        use = &*slot;
      } else {
        if (!plan || !cfg.fixed_mask) {
          plan.emplace(draw());
        }
        use = &*plan;
      }
      auto const step = prepare_step(s, *use, maps, cfg.noise_rel, noise_seed);
      auto const parts = loss_and_gradient(model, step, maps, grad);
      double const loss = parts.total();
      if (!std::isfinite(loss) || !nn::finite(grad)) {
        fail(Errc::non_finite, "training step {} of epoch {}: non-finite loss or gradient (loss {}, af {:.3f})", k, e,
             loss, af);
      }
      opt.step(model.params(), grad, cfg.lr);
      sum += loss;
      res.steps++;
    }
    res.epoch_loss.push_back(sum / double(steps));
    log::debug("epoch {} loss {:.6g}", e, res.epoch_loss.back());
  }
  return res;
}

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline void write_f32(std::ofstream &f, std::vector<double> const &v)
{
  std::vector<float> buf(v.begin(), v.end());
  f.write(reinterpret_cast<char const *>(buf.data()), std::streamsize(buf.size() * sizeof(float)));
}

inline void read_f32(std::ifstream &f, std::vector<double> &v, std::filesystem::path const &p)
{
  std::vector<float> buf(v.size());
  f.read(reinterpret_cast<char *>(buf.data()), std::streamsize(buf.size() * sizeof(float)));
  if (f.gcount() != std::streamsize(buf.size() * sizeof(float))) {
    fail(Errc::truncated, "{}: weights file is truncated", p.string());
  }
  std::copy(buf.begin(), buf.end(), v.begin());
}

} // namespace detail

inline constexpr int kCheckpointVersion = 1;

/// model.json (architecture, layout) + weights.bin: little-endian binary32, the flat
/// parameter vector in segment order followed by the BatchNorm running statistics.
inline void save_checkpoint(std::filesystem::path const &dir, InterlacerModel const &model,
                            nlohmann::json const &extra = nlohmann::json::object())
{
  std::filesystem::create_directories(dir);
  auto const &a = model.arch();
  nlohmann::json j;
  j["format"] = "interlacer-checkpoint";
  j["version"] = kCheckpointVersion;
  j["shape"] = {a.shape.nx, a.shape.ny, a.shape.nz};
  j["coils"] = a.coils;
  j["layers"] = a.layers;
  j["features"] = a.features;
  j["param_count"] = model.params().size();
  j["stats_count"] = model.running_stats().size();
  j["weights"] = "weights.bin";
  auto &segs = j["segments"] = nlohmann::json::array();
  for (auto const &s : model.segments()) {
    segs.push_back({{"name", s.name}, {"offset", s.offset}, {"size", s.size}});
  }
  j["extra"] = extra;
  std::ofstream(dir / "model.json") << j.dump(2) << "\n";
  std::ofstream f(dir / "weights.bin", std::ios::binary);
  detail::write_f32(f, model.params());
  detail::write_f32(f, model.running_stats());
  if (!f) {
    fail(Errc::io, "cannot write {}", (dir / "weights.bin").string());
  }
}

inline InterlacerModel load_checkpoint(std::filesystem::path const &dir)
{
  std::ifstream jf(dir / "model.json");
  if (!jf) {
    fail(Errc::missing_input, "checkpoint {} has no model.json", dir.string());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(jf);
    if (j.at("format") != "interlacer-checkpoint" || j.at("version").get<int>() != kCheckpointVersion) {
      fail(Errc::version_mismatch, "{}: unsupported checkpoint format", dir.string());
    }
    InterlacerArch a;
    auto const sh = j.at("shape");
    a.shape = {sh.at(0).get<Index>(), sh.at(1).get<Index>(), sh.at(2).get<Index>()};
    a.coils = j.at("coils").get<Index>();
    a.layers = j.at("layers").get<Index>();
    a.features = j.at("features").get<Index>();
    InterlacerModel m(a);
    if (j.at("param_count").get<std::size_t>() != m.params().size() ||
        j.at("stats_count").get<std::size_t>() != m.running_stats().size()) {
      fail(Errc::shape_mismatch, "{}: parameter count does not match the architecture", dir.string());
    }
    std::ifstream wf(dir / "weights.bin", std::ios::binary);
    if (!wf) {
      fail(Errc::missing_input, "checkpoint {} has no weights.bin", dir.string());
    }
    detail::read_f32(wf, m.params(), dir / "weights.bin");
    detail::read_f32(wf, m.running_stats(), dir / "weights.bin");
    return m;
  } catch (nlohmann::json::exception const &e) {
    fail(Errc::config, "{}: malformed model.json: {}", dir.string(), e.what());
  }
}

} // namespace mrsi
