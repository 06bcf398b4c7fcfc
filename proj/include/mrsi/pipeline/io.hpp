#pragma once

#include "mrsi/core/dataset.hpp"
#include "mrsi/encoding/b0.hpp"
#include "mrsi/encoding/coils.hpp"
#include "mrsi/nuisance/lipid.hpp"
#include "mrsi/tgv/tgv_er.hpp"
#include "mrsi/trajectory/trajectory.hpp"

namespace mrsi::io {

namespace fs = std::filesystem;

inline std::vector<Index> vol_shape(GridSpec const &g) { return {g.nz, g.ny, g.nx}; }
inline std::vector<std::string> vol_axes() { return {"z", "y", "x"}; }

/// Loads a dataset that an earlier pipeline stage must have produced.
inline Bundle require(fs::path const &dir, std::string_view stage)
{
  if (!fs::exists(dir / "meta.json")) {
    fail(Errc::missing_input, "'{}' not found; run `mrsi {}` first", dir.string(), stage);
  }
  return dataset_load(dir);
}

inline nlohmann::json circle_json(EccentricCircle const &c)
{
  return {c.partition, c.cx, c.cy, c.radius, c.n_points, c.crosses_center, c.phase0};
}

inline EccentricCircle circle_from_json(nlohmann::json const &j)
{
  EccentricCircle c;
  c.partition = j.at(0);
  c.cx = j.at(1);
  c.cy = j.at(2);
  c.radius = j.at(3);
  c.n_points = j.at(4);
  c.crosses_center = j.at(5);
  c.phase0 = j.at(6);
  return c;
}

/// Circles (or explicit points) go to the metadata as exact JSON numbers; the
/// binary32 `kpoints` array is for external tools only.
inline void save_trajectory(fs::path const &dir, Trajectory const &t)
{
  Bundle b;
  b.grid = t.grid;
  auto &e = b.extra;
  e["kind"] = "trajectory";
  e["radius_fraction"] = t.radius_fraction;
  e["seed"] = t.seed;
  e["af_nominal"] = t.af_nominal;
  auto circles = nlohmann::json::array();
  for (auto const &c : t.circles) {
    circles.push_back(circle_json(c));
  }
  e["circles"] = circles;
  if (t.circles.empty()) {
    auto pts = nlohmann::json::array();
    for (auto const &k : t.points) {
      pts.push_back({k.kx, k.ky, k.kz});
    }
    e["points"] = pts;
  }
  std::vector<double> k;
  k.reserve(3 * t.points.size());
  for (auto const &p : t.points) {
    k.insert(k.end(), {p.kx, p.ky, p.kz});
  }
  b.put_real("kpoints", k, {t.samples(), 3}, {"sample", "k"});
  dataset_save(dir, b);
}

inline Trajectory load_trajectory(fs::path const &dir)
{
  auto const b = require(dir, "gen-traj");
  auto const &e = b.extra;
  if (e.value("kind", "") != "trajectory") {
    fail(Errc::dimension_mismatch, "'{}' is not a trajectory dataset", dir.string());
  }
  try {
    if (e.at("circles").empty()) {
      std::vector<KPoint> pts;
      for (auto const &p : e.at("points")) {
        pts.push_back({p.at(0), p.at(1), p.at(2)});
      }
      return trajectory_from_points(b.grid, std::move(pts));
    }
    Trajectory t;
    t.grid = b.grid;
    t.radius_fraction = e.at("radius_fraction");
    t.seed = e.at("seed");
    t.af_nominal = e.at("af_nominal");
    for (auto const &c : e.at("circles")) {
      t.circles.push_back(circle_from_json(c));
    }
    build_points(t);
    return t;
  } catch (nlohmann::json::exception const &ex) {
    fail(Errc::dimension_mismatch, "trajectory metadata in '{}' is malformed: {}", dir.string(), ex.what());
  }
}

inline void put_series(Bundle &b, std::string name, ImageTimeSeries const &s)
{
  auto const &g = s.grid;
  b.put_complex(std::move(name), s.data, {g.n_time, g.nz, g.ny, g.nx}, {"time", "z", "y", "x"});
}

inline ImageTimeSeries get_series(Bundle const &b, std::string const &name)
{
  ImageTimeSeries s(b.grid);
  auto v = b.complex(name);
  if (v.size() != s.data.size()) {
    fail(Errc::dimension_mismatch, "array '{}' holds {} values, grid needs {}", name, v.size(), s.data.size());
  }
  s.data = std::move(v);
  return s;
}

inline void put_kspace(Bundle &b, std::string name, CoilKSpaceSeries const &s)
{
  auto const &g = s.grid;
  b.put_complex(std::move(name), s.data, {g.n_coils, g.n_time, s.samples()}, {"coil", "time", "sample"});
}

inline CoilKSpaceSeries get_kspace(Bundle const &b, std::string const &name, Trajectory const &t)
{
  CoilKSpaceSeries s(b.grid, t.points);
  auto v = b.complex(name);
  if (v.size() != s.data.size()) {
    fail(Errc::dimension_mismatch, "k-space '{}' holds {} values, trajectory and grid need {}", name, v.size(),
         s.data.size());
  }
  s.data = std::move(v);
  return s;
}

inline void put_maps(Bundle &b, std::string name, SensitivityMaps const &m)
{
  auto const &g = m.grid;
  b.put_complex(std::move(name), m.data, {m.n_coils, g.nz, g.ny, g.nx}, {"coil", "z", "y", "x"});
}

inline SensitivityMaps get_maps(Bundle const &b, std::string const &name)
{
  SensitivityMaps m(b.grid, b.grid.n_coils);
  auto v = b.complex(name);
  if (v.size() != m.data.size()) {
    fail(Errc::dimension_mismatch, "maps '{}' hold {} values, expected {}", name, v.size(), m.data.size());
  }
  m.data = std::move(v);
  return m;
}

inline void put_b0(Bundle &b, std::string name, B0Map const &m)
{
  b.put_real(std::move(name), m.df, vol_shape(m.grid), vol_axes());
}

inline B0Map get_b0(Bundle const &b, std::string const &name)
{
  B0Map m(b.grid);
  auto v = b.real(name);
  if (v.size() != m.df.size()) {
    fail(Errc::dimension_mismatch, "B0 map '{}' holds {} values, expected {}", name, v.size(), m.df.size());
  }
  m.df = std::move(v);
  return m;
}

inline void put_mask(Bundle &b, std::string name, LipidMask const &m)
{
  b.put_bytes(std::move(name), m.mask, vol_shape(m.grid), vol_axes());
}

inline LipidMask get_mask(Bundle const &b, std::string const &name)
{
  LipidMask m(b.grid);
  auto v = b.bytes(name);
  if (v.size() != m.mask.size()) {
    fail(Errc::dimension_mismatch, "mask '{}' holds {} values, expected {}", name, v.size(), m.mask.size());
  }
  m.mask = std::move(v);
  return m;
}

/// U as [rank][z][y][x], V as [rank][time], L as an image time series.
inline void put_factors(Bundle &b, TgvErState const &st)
{
  auto const &g = st.f.grid;
  b.put_complex("U", st.f.U, {st.f.rank, g.nz, g.ny, g.nx}, {"rank", "z", "y", "x"});
  b.put_complex("V", st.f.V, {st.f.rank, g.n_time}, {"rank", "time"});
  put_series(b, "L", st.L);
}

} // namespace mrsi::io
