#pragma once

#include "mrsi/encoding/espirit.hpp"
#include "mrsi/interlacer/train.hpp"
#include "mrsi/metrics/metrics.hpp"
#include "mrsi/phantom/phantom.hpp"
#include "mrsi/tgv/tgv_er.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>

namespace mrsi {

namespace detail {

/// Reads one JSON object, remembering which keys were consumed so that
/// leftovers can be reported as unknown.
class Section
{
public:
  Section(nlohmann::json const &j, std::string path)
    : j_(j)
    , path_(std::move(path))
  {
    if (!j_.is_object()) {
      fail(Errc::config, "'{}' must be an object", path_);
    }
  }

  bool has(std::string const &key) const { return j_.contains(key); }

  template <typename T>
  T get(std::string const &key, T def)
  {
    seen_.insert(key);
    if (!j_.contains(key)) {
      return def;
    }
    return read<T>(key);
  }

  template <typename T>
  T require(std::string const &key)
  {
    seen_.insert(key);
    if (!j_.contains(key)) {
      fail(Errc::config, "missing required key '{}.{}'", path_, key);
    }
    return read<T>(key);
  }

  Section sub(std::string const &key)
  {
    seen_.insert(key);
    static nlohmann::json const empty = nlohmann::json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, path_ + "." + key);
  }

  nlohmann::json const &raw(std::string const &key)
  {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const
  {
    for (auto const &[k, v] : j_.items()) {
      if (!seen_.count(k)) {
        fail(Errc::config, "unknown key '{}.{}'", path_, k);
      }
    }
  }

private:
  template <typename T>
  T read(std::string const &key)
  {
    try {
      return j_.at(key).get<T>();
    } catch (nlohmann::json::exception const &e) {
      fail(Errc::config, "'{}.{}' has the wrong type: {}", path_, key, e.what());
    }
  }

  nlohmann::json const &j_;
  std::string path_;
  std::set<std::string> seen_;
};

} // namespace detail

struct TrajectoryConfig
{
  double radius_fraction = 0.125;
  double af = 1.0;
  std::uint64_t mask_seed = 7;
};

struct LipidSim
{
  FidModel fid{0.5, -400.0, 0.02};
  Index width = 1; // ring width inside the container wall, voxels
};

struct PhantomConfig
{
  PhantomSpec spec = default_derenzo();
  Index supersample = 4;
  std::vector<FidModel> lines{{1.0, 0.0, 0.08}};
  std::optional<LipidSim> lipid;
  double snr_db = 30.0;
  double b0_max_hz = 0.0; // linear in-plane field offset, peak value at the FOV edge
};

struct NuisanceConfig
{
  double band_lo = -150, band_hi = 150;
  Index hsvd_order = 16;
  double lipid_threshold = 0.1;
  Index lipid_erosion = 2;
  double lipid_beta = 1.0; // relative to 1 / |L|^2
  Index b0_fit = 4;
  Index calib = 12; // in-plane size of the ESPIRiT calibration region
  EspiritOptions espirit;
};

struct InterlacerConfig
{
  Index layers = 10, features = 64;
  std::uint64_t init_seed = 1;
  TrainConfig train;
  std::string target = "tgv"; // "tgv": per-timepoint TGV water recon of the fully sampled data, or "truth"
};

struct MetricsConfig
{
  std::vector<double> afs{1, 2, 3, 4, 5};
  SsimOptions ssim;
};

struct PipelineConfig
{
  GridSpec grid;
  TrajectoryConfig trajectory;
  PhantomConfig phantom;
  NuisanceConfig nuisance;
  TgvConfig tgv;
  bool tgv_lowrank = false;
  InterlacerConfig interlacer;
  MetricsConfig metrics;
  std::uint64_t seed = 1;
  std::filesystem::path output = "out";
};

inline FidModel parse_fid(detail::Section s)
{
  FidModel f;
  f.amplitude = s.get("amplitude", f.amplitude);
  f.frequency = s.get("frequency_hz", f.frequency);
  f.t2 = s.get("t2_s", f.t2);
  s.finish();
  if (!(f.t2 > 0)) {
    fail(Errc::config, "FID t2_s must be positive, got {}", f.t2);
  }
  return f;
}

inline PhantomSpec parse_phantom_spec(detail::Section s)
{
  PhantomSpec p;
  p.container_diameter = s.get("container_diameter", p.container_diameter);
  p.apex_gap = s.get("apex_gap", p.apex_gap);
  if (s.has("tube_sets")) {
    p.tube_sets.clear();
    auto const &arr = s.raw("tube_sets");
    if (!arr.is_array()) {
      fail(Errc::config, "phantom.spec.tube_sets must be an array");
    }
    for (auto const &t : arr) {
      detail::Section ts(t, "phantom.spec.tube_sets[]");
      TubeSet set;
      set.diameter = ts.require<double>("diameter");
      set.count = ts.get("count", set.count);
      set.spacing_factor = ts.get("spacing_factor", set.spacing_factor);
      set.sector_angle = ts.get("sector_angle", set.sector_angle);
      ts.finish();
      if (!(set.diameter > 0) || set.count < 1) {
        fail(Errc::config, "tube sets need a positive diameter and count");
      }
      p.tube_sets.push_back(set);
    }
  }
  s.finish();
  return p;
}

inline PipelineConfig parse_config(nlohmann::json const &j)
{
  PipelineConfig c;
  detail::Section root(j, "config");
  c.seed = root.get<std::uint64_t>("seed", c.seed);
  c.output = root.get<std::string>("output", c.output.string());

  {
    auto s = root.sub("grid");
    auto const m = s.require<std::vector<Index>>("matrix");
    auto const fov = s.require<std::vector<double>>("fov_mm");
    if (m.size() != 3 || fov.size() != 3) {
      fail(Errc::config, "grid.matrix and grid.fov_mm need three entries");
    }
    c.grid.nx = m[0], c.grid.ny = m[1], c.grid.nz = m[2];
    c.grid.fov_x = fov[0], c.grid.fov_y = fov[1], c.grid.fov_z = fov[2];
    c.grid.dwell = s.get("dwell_s", 1.0 / 2326.0);
    c.grid.n_time = s.get<Index>("n_time", 8);
    c.grid.n_coils = s.get<Index>("n_coils", 2);
    s.finish();
    try {
      c.grid.validate();
    } catch (Error const &e) {
      fail(Errc::config, "grid: {}", e.what());
    }
  }
  {
    auto s = root.sub("trajectory");
    auto &t = c.trajectory;
    t.radius_fraction = s.get("radius_fraction", t.radius_fraction);
    t.af = s.get("af", t.af);
    t.mask_seed = s.get("mask_seed", t.mask_seed);
    s.finish();
    if (!(t.radius_fraction > 0 && t.radius_fraction <= 0.5) || !(t.af >= 1)) {
      fail(Errc::config, "trajectory.radius_fraction must be in (0, 0.5] and trajectory.af >= 1");
    }
  }
  {
    auto s = root.sub("phantom");
    auto &p = c.phantom;
    if (s.has("spec")) {
      p.spec = parse_phantom_spec(s.sub("spec"));
    }
    p.supersample = s.get("supersample", p.supersample);
    if (s.has("lines")) {
      p.lines.clear();
      auto const &arr = s.raw("lines");
      if (!arr.is_array() || arr.empty()) {
        fail(Errc::config, "phantom.lines must be a non-empty array");
      }
      for (auto const &l : arr) {
        p.lines.push_back(parse_fid(detail::Section(l, "phantom.lines[]")));
      }
    }
    if (s.has("lipid") && !s.raw("lipid").is_null()) {
      auto ls = s.sub("lipid");
      LipidSim lip;
      lip.width = ls.get("width_voxels", lip.width);
      detail::Section fs(ls.raw("fid"), "phantom.lipid.fid");
      lip.fid = parse_fid(fs);
      ls.finish();
      p.lipid = lip;
    } else {
      s.get<nlohmann::json>("lipid", nullptr);
    }
    p.snr_db = s.get("snr_db", p.snr_db);
    p.b0_max_hz = s.get("b0_max_hz", p.b0_max_hz);
    s.finish();
    if (p.supersample < 1) {
      fail(Errc::config, "phantom.supersample must be >= 1");
    }
  }
  {
    auto s = root.sub("nuisance");
    auto &n = c.nuisance;
    auto const band = s.get<std::vector<double>>("water_band_hz", {n.band_lo, n.band_hi});
    if (band.size() != 2 || !(band[0] <= band[1])) {
      fail(Errc::config, "nuisance.water_band_hz must be [low, high]");
    }
    n.band_lo = band[0], n.band_hi = band[1];
    n.hsvd_order = s.get("hsvd_order", n.hsvd_order);
    n.lipid_threshold = s.get("lipid_threshold", n.lipid_threshold);
    n.lipid_erosion = s.get("lipid_erosion", n.lipid_erosion);
    n.lipid_beta = s.get("lipid_beta", n.lipid_beta);
    n.b0_fit = s.get("b0_fit_points", n.b0_fit);
    n.calib = s.get("calibration_size", n.calib);
    auto e = s.sub("espirit");
    auto const kern = e.get<std::vector<Index>>("kernel", {n.espirit.kernel_x, n.espirit.kernel_y, n.espirit.kernel_z});
    if (kern.size() != 3) {
      fail(Errc::config, "nuisance.espirit.kernel needs three entries");
    }
    n.espirit.kernel_x = kern[0], n.espirit.kernel_y = kern[1], n.espirit.kernel_z = kern[2];
    n.espirit.sv_threshold = e.get("sv_threshold", n.espirit.sv_threshold);
    n.espirit.eig_threshold = e.get("eig_threshold", n.espirit.eig_threshold);
    e.finish();
    s.finish();
    if (n.hsvd_order < 1 || n.b0_fit < 2 || n.calib < 2 || !(n.lipid_beta >= 0)) {
      fail(Errc::config, "nuisance: hsvd_order >= 1, b0_fit_points >= 2, calibration_size >= 2, lipid_beta >= 0");
    }
  }
  {
    auto s = root.sub("tgv");
    auto &t = c.tgv;
    t.lambda = s.get("lambda", t.lambda);
    t.rank = s.get("rank", t.rank);
    t.outer_iters = s.get("outer_iters", t.outer_iters);
    t.pd_iters = s.get("pd_iters", t.pd_iters);
    t.weights.alpha0 = s.get("alpha0", t.weights.alpha0);
    t.weights.alpha1 = s.get("alpha1", t.weights.alpha1);
    t.step_safety = s.get("step_safety", t.step_safety);
    t.scale_lambda = s.get("scale_lambda", t.scale_lambda);
    c.tgv_lowrank = s.get("lowrank", c.tgv_lowrank);
    s.finish();
    try {
      t.validate();
    } catch (Error const &e) {
      fail(Errc::config, "{}", e.what());
    }
  }
  {
    auto s = root.sub("interlacer");
    auto &n = c.interlacer;
    auto &t = n.train;
    n.layers = s.get("layers", n.layers);
    n.features = s.get("features", n.features);
    n.init_seed = s.get("init_seed", n.init_seed);
    n.target = s.get("target", n.target);
    t.lr = s.get("lr", t.lr);
    t.epochs = s.get("epochs", t.epochs);
    t.steps_per_epoch = s.get("steps_per_epoch", t.steps_per_epoch);
    auto const range = s.get<std::vector<double>>("af_range", {t.af_min, t.af_max});
    if (range.size() != 2) {
      fail(Errc::config, "interlacer.af_range must be [min, max]");
    }
    t.af_min = range[0], t.af_max = range[1];
    t.mask_pool = s.get("mask_pool", t.mask_pool);
    t.fixed_mask = s.get("fixed_mask", t.fixed_mask);
    t.noise_rel = s.get("noise_rel", t.noise_rel);
    t.seed = s.get("train_seed", t.seed);
    auto a = s.sub("augment");
    auto &ac = t.augmentation;
    t.augment = a.get("enabled", t.augment);
    ac.phase = a.get("phase", ac.phase);
    ac.rotation = a.get("rotation", ac.rotation);
    ac.translation = a.get("translation", ac.translation);
    ac.scale = a.get("scale", ac.scale);
    ac.max_rotation = a.get("max_rotation_rad", ac.max_rotation);
    ac.max_shift = a.get("max_shift_mm", ac.max_shift);
    ac.max_scale = a.get("max_scale", ac.max_scale);
    a.finish();
    s.finish();
    if (n.target != "truth" && n.target != "tgv") {
      fail(Errc::config, "interlacer.target must be \"truth\" or \"tgv\", got \"{}\"", n.target);
    }
    if (n.layers < 1 || n.features < 1) {
      fail(Errc::config, "interlacer.layers and interlacer.features must be >= 1");
    }
    try {
      t.validate();
    } catch (Error const &e) {
      fail(Errc::config, "interlacer: {}", e.what());
    }
  }
  {
    auto s = root.sub("metrics");
    auto &m = c.metrics;
    m.afs = s.get("afs", m.afs);
    m.ssim.window = s.get("ssim_window", m.ssim.window);
    m.ssim.sigma = s.get("ssim_sigma", m.ssim.sigma);
    m.ssim.k1 = s.get("ssim_k1", m.ssim.k1);
    m.ssim.k2 = s.get("ssim_k2", m.ssim.k2);
    s.finish();
    if (m.afs.empty() || std::any_of(m.afs.begin(), m.afs.end(), [](double a) { return !(a >= 1); })) {
      fail(Errc::config, "metrics.afs must be a non-empty list of accelerations >= 1");
    }
  }
  root.finish();
  return c;
}

inline PipelineConfig load_config(std::filesystem::path const &path)
{
  std::ifstream f(path);
  if (!f) {
    fail(Errc::config, "cannot open config '{}'", path.string());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (nlohmann::json::exception const &e) {
    fail(Errc::config, "config '{}' is not valid JSON: {}", path.string(), e.what());
  }
  return parse_config(j);
}

} // namespace mrsi
