#pragma once

#include "mrsi/interlacer/network.hpp"
#include "mrsi/interlacer/train.hpp"
#include "mrsi/nuisance/hsvd.hpp"
#include "mrsi/pipeline/config.hpp"
#include "mrsi/pipeline/io.hpp"
#include "mrsi/trajectory/voronoi.hpp"

#include <map>

namespace mrsi::pipeline {

namespace fs = std::filesystem;

// Artifact layout below the output directory.
inline fs::path traj_dir(fs::path const &o) { return o / "trajectory"; }
inline fs::path raw_dir(fs::path const &o) { return o / "raw"; }
inline fs::path pre_dir(fs::path const &o) { return o / "pre"; }
inline fs::path model_dir(fs::path const &o) { return o / "model"; }
inline std::string af_tag(double af) { return fmt::format("af{:g}", af); }
inline fs::path tgv_dir(fs::path const &o, double af) { return o / ("tgv_" + af_tag(af)); }
inline fs::path net_dir(fs::path const &o, double af) { return o / ("net_" + af_tag(af)); }

/// Wall-clock per step, written to <out>/timing/<command>.csv.
class StageTimer
{
public:
  explicit StageTimer(std::string command)
    : command_(std::move(command))
  {
  }

  void lap(std::string step)
  {
    auto const now = std::chrono::steady_clock::now();
    rows_.emplace_back(std::move(step), std::chrono::duration<double>(now - last_).count());
    last_ = now;
  }

  double total() const
  {
    double s = 0;
    for (auto const &r : rows_) {
      s += r.second;
    }
    return s;
  }

  double get(std::string const &step) const
  {
    for (auto const &r : rows_) {
      if (r.first == step) {
        return r.second;
      }
    }
    return 0;
  }

  void write(fs::path const &out) const
  {
    fs::create_directories(out / "timing");
    std::ofstream f(out / "timing" / (command_ + ".csv"), std::ios::trunc);
    f << "step,seconds\n";
    for (auto const &[s, t] : rows_) {
      f << fmt::format("{},{:.6f}\n", s, t);
    }
  }

private:
  std::string command_;
  std::vector<std::pair<std::string, double>> rows_;
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

inline Trajectory trajectory_at(Trajectory const &full, double af, std::uint64_t mask_seed)
{
  if (af <= 1.0 || full.circles.empty()) {
    if (af > 1.0) {
      fail(Errc::invalid_argument, "AF {} needs a circle trajectory", af);
    }
    return full;
  }
  return undersample(full, af, mask_seed);
}

/// Indices of the samples of `sub` (an undersampled copy) within `full`.
inline std::vector<Index> sample_subset(Trajectory const &full, Trajectory const &sub)
{
  std::vector<Index> idx;
  if (full.circles.empty() || sub.circles.size() == full.circles.size()) {
    if (sub.samples() != full.samples()) {
      fail(Errc::dimension_mismatch, "trajectory sample counts differ ({} vs {})", sub.samples(), full.samples());
    }
    idx.resize(full.samples());
    std::iota(idx.begin(), idx.end(), Index(0));
    return idx;
  }
  auto same = [](EccentricCircle const &a, EccentricCircle const &b) {
    return a.partition == b.partition && a.cx == b.cx && a.cy == b.cy && a.radius == b.radius &&
           a.n_points == b.n_points && a.phase0 == b.phase0;
  };
  Index off = 0;
  std::size_t j = 0;
  for (auto const &c : full.circles) {
    if (j < sub.circles.size() && same(c, sub.circles[j])) {
      for (Index m = 0; m < c.n_points; m++) {
        idx.push_back(off + m);
      }
      j++;
    }
    off += c.n_points;
  }
  if (j != sub.circles.size()) {
    fail(Errc::dimension_mismatch, "undersampled trajectory is not a subset of the stored one");
  }
  return idx;
}

inline CoilKSpaceSeries restrict_samples(CoilKSpaceSeries const &s, Trajectory const &sub, std::vector<Index> const &idx)
{
  CoilKSpaceSeries out(s.grid, sub.points);
  for (Index c = 0; c < s.grid.n_coils; c++) {
    for (Index t = 0; t < s.grid.n_time; t++) {
      auto src = s.readout(c, t);
      auto dst = out.readout(c, t);
      for (std::size_t i = 0; i < idx.size(); i++) {
        dst[i] = src[idx[i]];
      }
    }
  }
  return out;
}

inline SampleWeights dcf_for(Trajectory const &t) { return inversion_dcf(voronoi_dcf(t), t.grid); }

/// Everything the reconstruction commands read from the earlier stages.
struct Inputs
{
  Trajectory full;
  Bundle raw;
  ImageTimeSeries truth;
  CoilKSpaceSeries kspace;
  SensitivityMaps maps;
  B0Map b0;
  LipidMask lipid;
};

inline Inputs load_inputs(fs::path const &out)
{
  Inputs in;
  in.full = io::load_trajectory(traj_dir(out));
  in.raw = io::require(raw_dir(out), "simulate");
  in.truth = io::get_series(in.raw, "truth");
  in.kspace = io::get_kspace(in.raw, "kspace", in.full);
  auto const pre = io::require(pre_dir(out), "preprocess");
  in.maps = io::get_maps(pre, "maps");
  in.b0 = io::get_b0(pre, "b0");
  in.lipid = io::get_mask(pre, "lipid_mask");
  return in;
}

/// Acquisition at one acceleration: trajectory subset and its samples.
struct Acquisition
{
  Trajectory traj;
  CoilKSpaceSeries data;
};

inline Acquisition acquisition_at(Inputs const &in, double af, std::uint64_t mask_seed)
{
  Acquisition a{trajectory_at(in.full, af, mask_seed), {}};
  a.data = restrict_samples(in.kspace, a.traj, sample_subset(in.full, a.traj));
  return a;
}

// ---------------------------------------------------------------------------

inline void cmd_gen_traj(PipelineConfig const &cfg, fs::path const &out)
{
  StageTimer timer("gen-traj");
  auto const t = generate_eccentric(cfg.grid, cfg.trajectory.radius_fraction, cfg.seed);
  timer.lap("generate");
  io::save_trajectory(traj_dir(out), t);
  timer.lap("write");
  log::info("gen-traj: {} circles, {} samples", t.circles.size(), t.samples());
  timer.write(out);
}

/// Water-surrogate truth series: phantom tubes times the FID lines, plus an
/// optional lipid ring just inside the container wall.
inline ImageTimeSeries phantom_series(PipelineConfig const &cfg)
{
  auto const &g = cfg.grid;
  auto const &p = cfg.phantom;
  auto const vol = rasterize(p.spec, g, p.supersample);
  auto series = synthesize_series(vol, p.lines, g);
  if (p.lipid) {
    ComplexVolume ring(g);
    double const R = p.spec.container_diameter / 2, w = double(p.lipid->width) * std::min(g.dx(), g.dy());
    for (Index z = 0; z < g.nz; z++) {
      for (Index y = 0; y < g.ny; y++) {
        for (Index x = 0; x < g.nx; x++) {
          double const r = std::hypot(double(x - g.nx / 2) * g.dx(), double(y - g.ny / 2) * g.dy());
          if (r <= R && r > R - w) {
            ring(x, y, z) = 1.0;
          }
        }
      }
    }
    auto const lip = synthesize_series(ring, {p.lipid->fid}, g);
    for (std::size_t i = 0; i < series.data.size(); i++) {
      series.data[i] += lip.data[i];
    }
  }
  return series;
}

inline std::optional<B0Map> phantom_b0(PipelineConfig const &cfg)
{
  if (cfg.phantom.b0_max_hz == 0.0) {
    return std::nullopt;
  }
  auto const &g = cfg.grid;
  B0Map m(g);
  for (Index z = 0; z < g.nz; z++) {
    for (Index y = 0; y < g.ny; y++) {
      for (Index x = 0; x < g.nx; x++) {
        double const u = double(x - g.nx / 2) / double(g.nx / 2 > 0 ? g.nx / 2 : 1);
        m.df[voxel_index(g, x, y, z)] = cfg.phantom.b0_max_hz * u;
      }
    }
  }
  return m;
}

inline void cmd_simulate(PipelineConfig const &cfg, fs::path const &out)
{
  StageTimer timer("simulate");
  auto const traj = io::load_trajectory(traj_dir(out));
  if (!traj.grid.same_space(cfg.grid) || traj.grid.n_coils != cfg.grid.n_coils) {
    fail(Errc::dimension_mismatch, "stored trajectory grid differs from the config grid; rerun gen-traj");
  }
  auto const series = phantom_series(cfg);
  auto const maps = synthetic_coil_maps(cfg.grid, cfg.grid.n_coils);
  auto const b0 = phantom_b0(cfg);
  timer.lap("phantom");
  auto const clean = simulate_acquisition(series, traj, maps, b0, 0.0, cfg.seed);
  double const sigma = noise_sigma_for_snr(clean.data, cfg.phantom.snr_db);
  auto const noisy = simulate_acquisition(series, traj, maps, b0, sigma, cfg.seed);
  timer.lap("encode");
  Bundle b;
  b.grid = cfg.grid;
  b.extra = {{"kind", "raw"}, {"noise_sigma", sigma}, {"snr_db", cfg.phantom.snr_db}};
  io::put_series(b, "truth", series);
  io::put_kspace(b, "kspace", noisy);
  io::put_maps(b, "maps_true", maps);
  io::put_b0(b, "b0_true", b0.value_or(B0Map(cfg.grid)));
  dataset_save(raw_dir(out), b);
  timer.lap("write");
  log::info("simulate: sigma {:.4g} for {} dB", sigma, cfg.phantom.snr_db);
  timer.write(out);
}

/// Coil images of one timepoint by density-compensated adjoint NUFT.
inline std::vector<Cx> coil_gridding(CoilKSpaceSeries const &s, Trajectory const &traj, SampleWeights const &dcf,
                                     Index t)
{
  Nufft const nufft(traj);
  Index const m = s.samples(), nv = traj.grid.voxels(), nc = s.grid.n_coils;
  std::vector<Cx> out(nc * nv), w(m);
  for (Index c = 0; c < nc; c++) {
    auto src = s.readout(c, t);
    for (Index i = 0; i < m; i++) {
      w[i] = src[i] * dcf.values[i];
    }
    nufft.adjoint(w, std::span<Cx>(out).subspan(c * nv, nv));
  }
  return out;
}

inline GriddedKSpace calibration_region(std::vector<Cx> coil_images, GridSpec const &g, Index nc, Index size)
{
  GridSpec cg = g;
  cg.nx = std::min(size, g.nx);
  cg.ny = std::min(size, g.ny);
  GriddedKSpace calib(cg, nc);
  Index const ox = g.nx / 2 - cg.nx / 2, oy = g.ny / 2 - cg.ny / 2;
  for (Index c = 0; c < nc; c++) {
    std::span<Cx> ci(coil_images.data() + c * g.voxels(), std::size_t(g.voxels()));
    fft3c_inplace(ci, g.nx, g.ny, g.nz, -1);
    for (Index z = 0; z < cg.nz; z++) {
      for (Index y = 0; y < cg.ny; y++) {
        for (Index x = 0; x < cg.nx; x++) {
          calib.coil(c)[voxel_index(cg, x, y, z)] = ci[voxel_index(g, x + ox, y + oy, z)];
        }
      }
    }
  }
  return calib;
}

inline void cmd_preprocess(PipelineConfig const &cfg, fs::path const &out)
{
  StageTimer timer("preprocess");
  auto const &n = cfg.nuisance;
  auto const full = io::load_trajectory(traj_dir(out));
  auto const raw = io::require(raw_dir(out), "simulate");
  auto const ks = io::get_kspace(raw, "kspace", full);
  auto const &g = raw.grid;
  auto const dcf = dcf_for(full);
  timer.lap("dcf");

  auto const calib = calibration_region(coil_gridding(ks, full, dcf, 0), g, g.n_coils, n.calib);
  auto const maps = espirit_maps(calib, g, n.espirit);
  timer.lap("espirit");

  auto const series = EncodingOperator(full, maps).with_weights(dcf).adjoint(ks);
  auto const b0 = b0_estimate(series, std::min(n.b0_fit, g.n_time));
  timer.lap("b0");

  auto const lipid = lipid_mask_estimate(series.volume(0), n.lipid_threshold, n.lipid_erosion);
  ImageTimeSeries metab = series;
  if (2 * n.hsvd_order < g.n_time) {
    metab = water_remove(b0_apply(series, b0, -1), n.band_lo, n.band_hi, n.hsvd_order);
  } else {
    log::info("preprocess: {} timepoints too few for HSVD order {}, water removal skipped", g.n_time, n.hsvd_order);
  }
  if (!lipid.empty() && n.lipid_beta > 0) {
    double e = 0;
    for (Index t = 0; t < metab.frames(); t++) {
      auto f = metab.frame(t);
      for (Index v = 0; v < metab.voxels(); v++) {
        e += lipid.mask[v] ? std::norm(f[v]) : 0.0;
      }
    }
    if (e > 0) {
      metab = lipid_l2_suppress(metab, lipid, n.lipid_beta / e);
    }
  }
  timer.lap("nuisance");

  Bundle b;
  b.grid = g;
  b.extra = {{"kind", "preprocessed"}};
  io::put_maps(b, "maps", maps);
  io::put_b0(b, "b0", b0);
  io::put_mask(b, "lipid_mask", lipid);
  io::put_series(b, "inuft", series);
  io::put_series(b, "metab", metab);
  dataset_save(pre_dir(out), b);
  timer.lap("write");
  log::info("preprocess: {} lipid voxels", lipid.count());
  timer.write(out);
}

/// Per-timepoint TGV water reconstruction of every frame, with the gridding
/// baseline computed on the same samples.
struct TgvWaterResult
{
  ImageTimeSeries water, inuft;
};

inline TgvWaterResult recon_tgv_water(PipelineConfig const &cfg, Acquisition const &acq, SensitivityMaps const &maps,
                                      B0Map const &b0)
{
  auto const dcf = dcf_for(acq.traj);
  EncodingOperator const op(acq.traj, maps, b0, hamming_weights(acq.traj));
  TgvWaterResult r{ImageTimeSeries(acq.data.grid), gridding_recon(acq.data, op, dcf)};
  for (Index t = 0; t < acq.data.grid.n_time; t++) {
    auto const fr = detail::gather_frame(acq.data, t);
    r.water.set_volume(t, water_reconstruct_per_timepoint(fr, t, op, dcf, cfg.tgv));
  }
  return r;
}

inline void cmd_recon_tgv(PipelineConfig const &cfg, fs::path const &out, double af)
{
  StageTimer timer("recon-tgv_" + af_tag(af));
  auto const in = load_inputs(out);
  auto const acq = acquisition_at(in, af, cfg.trajectory.mask_seed);
  timer.lap("load");
  auto const r = recon_tgv_water(cfg, acq, in.maps, in.b0);
  timer.lap("water");
  Bundle b;
  b.grid = in.raw.grid;
  b.extra = {{"kind", "recon"}, {"method", "tgv"}, {"af", af}, {"samples", acq.traj.samples()}};
  io::put_series(b, "water", r.water);
  io::put_series(b, "inuft", r.inuft);
  if (cfg.tgv_lowrank) {
    EncodingOperator const op(acq.traj, in.maps, in.b0, hamming_weights(acq.traj));
    auto const res = tgv_er_reconstruct(acq.data, op, &in.lipid, dcf_for(acq.traj), cfg.tgv);
    io::put_factors(b, res.state);
    auto trace = nlohmann::json::array();
    for (auto const &row : res.trace) {
      trace.push_back({row.iter, row.objective, row.data, row.reg});
    }
    b.extra["trace"] = trace;
    timer.lap("tgv-er");
  }
  dataset_save(tgv_dir(out, af), b);
  timer.lap("write");
  timer.write(out);
}

inline std::vector<TrainingSample> training_set(PipelineConfig const &cfg, fs::path const &out,
                                                ImageTimeSeries const &truth)
{
  std::optional<ImageTimeSeries> target;
  if (cfg.interlacer.target == "tgv") {
    auto const b = io::require(tgv_dir(out, 1.0), "recon-tgv --af 1");
    target = io::get_series(b, "water");
  }
  std::vector<TrainingSample> data;
  for (Index t = 0; t < truth.frames(); t++) {
    data.push_back({truth.volume(t), target ? target->volume(t) : truth.volume(t)});
  }
  return data;
}

inline void cmd_train(PipelineConfig const &cfg, fs::path const &out)
{
  StageTimer timer("train");
  auto const in = load_inputs(out);
  auto const data = training_set(cfg, out, in.truth);
  auto const &g = in.raw.grid;
  InterlacerArch arch;
  arch.shape = {g.nx, g.ny, g.nz};
  arch.coils = g.n_coils;
  arch.layers = cfg.interlacer.layers;
  arch.features = cfg.interlacer.features;
  InterlacerModel model(arch, cfg.interlacer.init_seed);
  TrainConfig tc = cfg.interlacer.train;
  tc.seed ^= cfg.seed;
  timer.lap("setup");
  auto const res = train(model, data, in.full, in.maps, tc);
  timer.lap("train");
  save_checkpoint(model_dir(out), model, {{"lr", tc.lr}, {"epochs", tc.epochs}, {"target", cfg.interlacer.target}});
  std::ofstream f(model_dir(out) / "loss.csv", std::ios::trunc);
  f << "epoch,mean_loss\n";
  for (std::size_t e = 0; e < res.epoch_loss.size(); e++) {
    f << fmt::format("{},{:.9g}\n", e, res.epoch_loss[e]);
  }
  timer.lap("write");
  log::info("train: {} steps, loss {:.4g} -> {:.4g}", res.steps, res.epoch_loss.front(), res.epoch_loss.back());
  timer.write(out);
}

/// Gridding, normalization by the input maximum, network, and the scale restored.
inline ImageTimeSeries recon_net(InterlacerModel &model, Acquisition const &acq, SensitivityMaps const &maps)
{
  SamplingPlan const plan(acq.traj);
  ImageTimeSeries out(acq.data.grid);
  for (Index t = 0; t < acq.data.grid.n_time; t++) {
    auto in = gridding_input(detail::gather_frame(acq.data, t), *plan.nufft, plan.dcf, maps);
    double const scale = normalize_unit(in.x1.data, {in.k1.data});
    auto pred = network_forward_gridded(model, in, maps, NetMode::eval);
    for (auto &v : pred.data) {
      v *= scale;
    }
    out.set_volume(t, pred);
  }
  return out;
}

inline void cmd_recon_net(PipelineConfig const &cfg, fs::path const &out, double af)
{
  StageTimer timer("recon-net_" + af_tag(af));
  if (!fs::exists(model_dir(out) / "model.json")) {
    fail(Errc::missing_input, "no trained model in '{}'; run `mrsi train` first", model_dir(out).string());
  }
  auto model = load_checkpoint(model_dir(out));
  auto const in = load_inputs(out);
  auto const acq = acquisition_at(in, af, cfg.trajectory.mask_seed);
  timer.lap("load");
  auto const water = recon_net(model, acq, in.maps);
  timer.lap("inference");
  Bundle b;
  b.grid = in.raw.grid;
  b.extra = {{"kind", "recon"}, {"method", "net"}, {"af", af}, {"samples", acq.traj.samples()}};
  io::put_series(b, "water", water);
  dataset_save(net_dir(out, af), b);
  timer.lap("write");
  timer.write(out);
}

// ---------------------------------------------------------------------------

struct MetricsRow
{
  std::string method;
  double af = 1;
  double nrmse = 0, ssim = 0, cc = 0;
  BlandAltman ba;
};

/// NRMSE on complex values, SSIM averaged over frames, CC and Bland-Altman on magnitudes.
inline MetricsRow score(std::string method, double af, ImageTimeSeries const &pred, ImageTimeSeries const &ref,
                        SsimOptions const &o)
{
  if (pred.data.size() != ref.data.size()) {
    fail(Errc::shape_mismatch, "{}: prediction has {} values, reference {}", method, pred.data.size(),
         ref.data.size());
  }
  MetricsRow r{std::move(method), af};
  r.nrmse = nrmse(pred.data, ref.data);
  for (Index t = 0; t < ref.frames(); t++) {
    r.ssim += ssim_volumes(pred.volume(t), ref.volume(t), o);
  }
  r.ssim /= double(ref.frames());
  std::vector<double> a(pred.data.size()), b(ref.data.size());
  for (std::size_t i = 0; i < a.size(); i++) {
    a[i] = std::abs(pred.data[i]);
    b[i] = std::abs(ref.data[i]);
  }
  r.cc = pearson_cc(a, b);
  r.ba = bland_altman(a, b);
  return r;
}

inline std::string metrics_csv(std::vector<MetricsRow> const &rows)
{
  std::string s = "method,af,nrmse,ssim,cc,bias,loa_low,loa_high\n";
  for (auto const &r : rows) {
    s += fmt::format("{},{:g},{:.6f},{:.6f},{:.6f},{:.6g},{:.6g},{:.6g}\n", r.method, r.af, r.nrmse, r.ssim, r.cc,
                     r.ba.bias, r.ba.loa_low, r.ba.loa_high);
  }
  return s;
}

inline void write_text(fs::path const &p, std::string const &s)
{
  fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::trunc | std::ios::binary);
  f << s;
  if (!f) {
    fail(Errc::io, "cannot write '{}'", p.string());
  }
}

/// First complex array of a dataset, preferring `name`.
inline ImageTimeSeries series_or_first(Bundle const &b, std::string const &name)
{
  if (b.has(name)) {
    return io::get_series(b, name);
  }
  for (auto const &a : b.arrays) {
    if (a.dtype == DType::complex64 && a.elements() == b.grid.voxels() * b.grid.n_time) {
      return io::get_series(b, a.name);
    }
  }
  fail(Errc::missing_input, "dataset has no image series");
}

inline std::vector<MetricsRow> metrics_at(PipelineConfig const &cfg, fs::path const &out, double af,
                                          ImageTimeSeries const &truth)
{
  std::vector<MetricsRow> rows;
  auto const &o = cfg.metrics.ssim;
  if (fs::exists(tgv_dir(out, af) / "meta.json")) {
    auto const b = dataset_load(tgv_dir(out, af));
    rows.push_back(score("inuft", af, io::get_series(b, "inuft"), truth, o));
    rows.push_back(score("tgv", af, io::get_series(b, "water"), truth, o));
  }
  if (fs::exists(net_dir(out, af) / "meta.json")) {
    rows.push_back(score("net", af, io::get_series(dataset_load(net_dir(out, af)), "water"), truth, o));
  }
  return rows;
}

/// With explicit `pred`/`ref` dataset directories one row is scored; otherwise every
/// reconstruction present at the configured AF is scored against the simulated truth.
inline std::vector<MetricsRow> cmd_metrics(PipelineConfig const &cfg, fs::path const &out, double af,
                                           std::optional<fs::path> const &pred = std::nullopt,
                                           std::optional<fs::path> const &ref = std::nullopt)
{
  StageTimer timer("metrics");
  std::vector<MetricsRow> rows;
  if (pred || ref) {
    if (!pred || !ref) {
      fail(Errc::config, "--pred and --ref must be given together");
    }
    auto const p = io::require(*pred, "recon-tgv or recon-net"), r = io::require(*ref, "simulate");
    rows.push_back(score(p.extra.value("method", "pred"), p.extra.value("af", af), series_or_first(p, "water"),
                        series_or_first(r, "truth"), cfg.metrics.ssim));
  } else {
    auto const raw = io::require(raw_dir(out), "simulate");
    rows = metrics_at(cfg, out, af, io::get_series(raw, "truth"));
    if (rows.empty()) {
      fail(Errc::missing_input, "no reconstruction at AF {:g}; run recon-tgv or recon-net first", af);
    }
  }
  timer.lap("score");
  write_text(out / "metrics.csv", metrics_csv(rows));
  timer.write(out);
  return rows;
}

/// Binary 16-bit PGM of |v| on one slice, scaled so that `peak` maps to 65535.
inline std::string pgm16(ComplexVolume const &v, Index z, double peak)
{
  auto const &g = v.grid;
  std::string s = fmt::format("P5\n{} {}\n65535\n", g.nx, g.ny);
  for (Index y = 0; y < g.ny; y++) {
    for (Index x = 0; x < g.nx; x++) {
      double const m = peak > 0 ? std::clamp(std::abs(v(x, y, z)) / peak, 0.0, 1.0) : 0.0;
      auto const q = static_cast<std::uint16_t>(std::lround(m * 65535.0));
      s += char(q >> 8);
      s += char(q & 0xff);
    }
  }
  return s;
}

inline void cmd_report(PipelineConfig const &cfg, fs::path const &out)
{
  StageTimer timer("report");
  if (!fs::exists(model_dir(out) / "model.json")) {
    fail(Errc::missing_input, "no trained model in '{}'; run `mrsi train` first", model_dir(out).string());
  }
  auto const raw = io::require(raw_dir(out), "simulate");
  auto const truth = io::get_series(raw, "truth");
  auto const rep = out / "report";
  fs::create_directories(rep);
  double const peak = max_abs(truth.frame(0));
  auto const t0 = truth.volume(0);
  for (Index z = 0; z < t0.grid.nz; z++) {
    write_text(rep / fmt::format("truth_z{}.pgm", z), pgm16(t0, z, peak));
  }
  std::vector<MetricsRow> rows;
  for (double af : cfg.metrics.afs) {
    if (!fs::exists(tgv_dir(out, af) / "meta.json")) {
      cmd_recon_tgv(cfg, out, af);
    }
    if (!fs::exists(net_dir(out, af) / "meta.json")) {
      cmd_recon_net(cfg, out, af);
    }
    for (auto const &[method, dir] : {std::pair{"tgv", tgv_dir(out, af)}, std::pair{"net", net_dir(out, af)}}) {
      auto const v = io::get_series(dataset_load(dir), "water").volume(0);
      for (Index z = 0; z < v.grid.nz; z++) {
        write_text(rep / fmt::format("{}_{}_z{}.pgm", method, af_tag(af), z), pgm16(v, z, peak));
      }
    }
    auto r = metrics_at(cfg, out, af, truth);
    rows.insert(rows.end(), r.begin(), r.end());
    timer.lap("af" + fmt::format("{:g}", af));
  }
  write_text(rep / "metrics.csv", metrics_csv(rows));

  std::string md = "# Reconstruction summary\n\n";
  md += fmt::format("Grid {}x{}x{}, {} timepoints, {} coils, data SNR {} dB.\n\n", truth.grid.nx, truth.grid.ny,
                    truth.grid.nz, truth.grid.n_time, truth.grid.n_coils, cfg.phantom.snr_db);
  md += "| AF | method | NRMSE | SSIM | CC | bias | LoA |\n|---|---|---|---|---|---|---|\n";
  for (auto const &r : rows) {
    md += fmt::format("| {:g} | {} | {:.4f} | {:.4f} | {:.4f} | {:.3g} | [{:.3g}, {:.3g}] |\n", r.af, r.method, r.nrmse,
                      r.ssim, r.cc, r.ba.bias, r.ba.loa_low, r.ba.loa_high);
  }
  md += "\nMagnitude maps of the first timepoint: `truth_z*.pgm`, `<method>_af<AF>_z*.pgm` (16-bit, scaled to the "
        "truth maximum).\n";
  write_text(rep / "summary.md", md);
  timer.lap("write");
  timer.write(out);
}

} // namespace mrsi::pipeline
