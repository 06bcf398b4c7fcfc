#pragma once

#include "mrsi/core/types.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

namespace mrsi {

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes a little-endian host");

inline constexpr int kDatasetFormatVersion = 1;

enum class DType
{
  complex64,
  float32,
  uint8,
};

inline char const *dtype_name(DType d)
{
  switch (d) {
  case DType::complex64: return "complex64";
  case DType::float32: return "float32";
  case DType::uint8: return "uint8";
  }
  return "?";
}

inline std::size_t dtype_bytes(DType d)
{
  switch (d) {
  case DType::complex64: return 8;
  case DType::float32: return 4;
  case DType::uint8: return 1;
  }
  return 0;
}

inline DType parse_dtype(std::string const &s)
{
  if (s == "complex64") {
    return DType::complex64;
  }
  if (s == "float32") {
    return DType::float32;
  }
  if (s == "uint8") {
    return DType::uint8;
  }
  fail(Errc::dimension_mismatch, "unknown dtype '{}'", s);
}

/// One binary payload. Shape is C-order, last dimension fastest. Axis labels
/// (x, y, z, time, coil, or free-form) let the loader check against the grid.
struct ArrayEntry
{
  std::string name;
  std::vector<Index> shape;
  DType dtype = DType::float32;
  std::vector<std::string> axes;
  std::vector<std::uint8_t> bytes;

  Index elements() const
  {
    Index n = 1;
    for (auto s : shape) {
      n *= s;
    }
    return n;
  }
};

/// A dataset directory: grid metadata, extra JSON metadata and named arrays.
struct Bundle
{
  GridSpec grid;
  nlohmann::json extra = nlohmann::json::object();
  std::vector<ArrayEntry> arrays;

  bool has(std::string const &name) const
  {
    return std::any_of(arrays.begin(), arrays.end(), [&](auto const &a) { return a.name == name; });
  }

  ArrayEntry const &get(std::string const &name) const
  {
    for (auto const &a : arrays) {
      if (a.name == name) {
        return a;
      }
    }
    fail(Errc::missing_input, "dataset has no array '{}'", name);
  }

  void put(ArrayEntry a)
  {
    for (auto &e : arrays) {
      if (e.name == a.name) {
        e = std::move(a);
        return;
      }
    }
    arrays.push_back(std::move(a));
  }

  void put_complex(std::string name, std::span<Cx const> v, std::vector<Index> shape, std::vector<std::string> axes)
  {
    ArrayEntry a{std::move(name), std::move(shape), DType::complex64, std::move(axes), {}};
    check_count(a, Index(v.size()));
    a.bytes.resize(v.size() * 8);
    for (std::size_t i = 0; i < v.size(); i++) {
      float const re = float(v[i].real()), im = float(v[i].imag());
      std::memcpy(a.bytes.data() + 8 * i, &re, 4);
      std::memcpy(a.bytes.data() + 8 * i + 4, &im, 4);
    }
    put(std::move(a));
  }

  void put_real(std::string name, std::span<double const> v, std::vector<Index> shape, std::vector<std::string> axes)
  {
    ArrayEntry a{std::move(name), std::move(shape), DType::float32, std::move(axes), {}};
    check_count(a, Index(v.size()));
    a.bytes.resize(v.size() * 4);
    for (std::size_t i = 0; i < v.size(); i++) {
      float const f = float(v[i]);
      std::memcpy(a.bytes.data() + 4 * i, &f, 4);
    }
    put(std::move(a));
  }

  void put_bytes(std::string name, std::span<std::uint8_t const> v, std::vector<Index> shape,
                 std::vector<std::string> axes)
  {
    ArrayEntry a{std::move(name), std::move(shape), DType::uint8, std::move(axes), {}};
    check_count(a, Index(v.size()));
    a.bytes.assign(v.begin(), v.end());
    put(std::move(a));
  }

  std::vector<Cx> complex(std::string const &name) const
  {
    auto const &a = get(name);
    if (a.dtype != DType::complex64) {
      fail(Errc::dimension_mismatch, "array '{}' is {}, expected complex64", name, dtype_name(a.dtype));
    }
    std::vector<Cx> out(a.elements());
    for (std::size_t i = 0; i < out.size(); i++) {
      float re, im;
      std::memcpy(&re, a.bytes.data() + 8 * i, 4);
      std::memcpy(&im, a.bytes.data() + 8 * i + 4, 4);
      out[i] = Cx(re, im);
    }
    return out;
  }

  std::vector<double> real(std::string const &name) const
  {
    auto const &a = get(name);
    if (a.dtype != DType::float32) {
      fail(Errc::dimension_mismatch, "array '{}' is {}, expected float32", name, dtype_name(a.dtype));
    }
    std::vector<double> out(a.elements());
    for (std::size_t i = 0; i < out.size(); i++) {
      float f;
      std::memcpy(&f, a.bytes.data() + 4 * i, 4);
      out[i] = f;
    }
    return out;
  }

  std::vector<std::uint8_t> bytes(std::string const &name) const
  {
    auto const &a = get(name);
    if (a.dtype != DType::uint8) {
      fail(Errc::dimension_mismatch, "array '{}' is {}, expected uint8", name, dtype_name(a.dtype));
    }
    return a.bytes;
  }

private:
  static void check_count(ArrayEntry const &a, Index n)
  {
    if (a.elements() != n) {
      fail(Errc::shape_mismatch, "array '{}' has {} values but shape holds {}", a.name, n, a.elements());
    }
    if (!a.axes.empty() && a.axes.size() != a.shape.size()) {
      fail(Errc::shape_mismatch, "array '{}' has {} axis labels for {} dims", a.name, a.axes.size(), a.shape.size());
    }
  }
};

namespace detail {

inline std::optional<Index> grid_axis(GridSpec const &g, std::string const &axis)
{
  if (axis == "x") {
    return g.nx;
  }
  if (axis == "y") {
    return g.ny;
  }
  if (axis == "z") {
    return g.nz;
  }
  if (axis == "time") {
    return g.n_time;
  }
  if (axis == "coil") {
    return g.n_coils;
  }
  return std::nullopt;
}

} // namespace detail

inline void dataset_save(std::filesystem::path const &dir, Bundle const &b)
{
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    fail(Errc::io, "cannot create '{}': {}", dir.string(), ec.message());
  }
  nlohmann::ordered_json meta;
  meta["format_version"] = kDatasetFormatVersion;
  meta["nx"] = b.grid.nx;
  meta["ny"] = b.grid.ny;
  meta["nz"] = b.grid.nz;
  meta["n_time"] = b.grid.n_time;
  meta["n_coils"] = b.grid.n_coils;
  meta["fov_mm"] = {b.grid.fov_x, b.grid.fov_y, b.grid.fov_z};
  meta["dwell_s"] = b.grid.dwell;
  auto arrays = nlohmann::ordered_json::array();
  for (auto const &a : b.arrays) {
    nlohmann::ordered_json e;
    e["name"] = a.name;
    e["shape"] = a.shape;
    e["dtype"] = dtype_name(a.dtype);
    if (!a.axes.empty()) {
      e["axes"] = a.axes;
    }
    arrays.push_back(e);
    std::ofstream f(dir / (a.name + ".bin"), std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<char const *>(a.bytes.data()), std::streamsize(a.bytes.size()));
    if (!f) {
      fail(Errc::io, "failed writing '{}'", (dir / (a.name + ".bin")).string());
    }
  }
  meta["arrays"] = arrays;
  if (!b.extra.empty()) {
    meta["extra"] = b.extra;
  }
  std::ofstream f(dir / "meta.json", std::ios::trunc);
  f << meta.dump(2) << '\n';
  if (!f) {
    fail(Errc::io, "failed writing '{}'", (dir / "meta.json").string());
  }
}

inline Bundle dataset_load(std::filesystem::path const &dir)
{
  namespace fs = std::filesystem;
  auto const meta_path = dir / "meta.json";
  if (!fs::exists(meta_path)) {
    fail(Errc::missing_input, "no dataset at '{}' (meta.json missing)", dir.string());
  }
  nlohmann::json meta;
  try {
    std::ifstream f(meta_path);
    meta = nlohmann::json::parse(f);
  } catch (nlohmann::json::exception const &e) {
    fail(Errc::dimension_mismatch, "unreadable meta.json in '{}': {}", dir.string(), e.what());
  }
  int const version = meta.value("format_version", -1);
  if (version != kDatasetFormatVersion) {
    fail(Errc::version_mismatch, "dataset '{}' has format_version {}, this build reads {}", dir.string(), version,
         kDatasetFormatVersion);
  }
  Bundle b;
  try {
    b.grid.nx = meta.at("nx");
    b.grid.ny = meta.at("ny");
    b.grid.nz = meta.at("nz");
    b.grid.n_time = meta.at("n_time");
    b.grid.n_coils = meta.at("n_coils");
    auto fov = meta.at("fov_mm");
    b.grid.fov_x = fov.at(0);
    b.grid.fov_y = fov.at(1);
    b.grid.fov_z = fov.at(2);
    b.grid.dwell = meta.at("dwell_s");
    if (meta.contains("extra")) {
      b.extra = meta["extra"];
    }
  } catch (nlohmann::json::exception const &e) {
    fail(Errc::dimension_mismatch, "incomplete metadata in '{}': {}", dir.string(), e.what());
  }
  try {
    b.grid.validate();
  } catch (Error const &e) {
    fail(Errc::dimension_mismatch, "invalid grid in '{}': {}", dir.string(), e.what());
  }
  for (auto const &e : meta.value("arrays", nlohmann::json::array())) {
    ArrayEntry a;
    a.name = e.at("name");
    a.shape = e.at("shape").get<std::vector<Index>>();
    a.dtype = parse_dtype(e.at("dtype"));
    if (e.contains("axes")) {
      a.axes = e["axes"].get<std::vector<std::string>>();
      if (a.axes.size() != a.shape.size()) {
        fail(Errc::dimension_mismatch, "array '{}' axis labels do not match its shape", a.name);
      }
      for (std::size_t i = 0; i < a.axes.size(); i++) {
        auto expect = detail::grid_axis(b.grid, a.axes[i]);
        if (expect && *expect != a.shape[i]) {
          fail(Errc::dimension_mismatch, "array '{}' axis '{}' has length {} but metadata says {}", a.name, a.axes[i],
               a.shape[i], *expect);
        }
      }
    }
    auto const path = dir / (a.name + ".bin");
    std::size_t const expected = std::size_t(a.elements()) * dtype_bytes(a.dtype);
    std::error_code ec;
    auto const actual = fs::file_size(path, ec);
    if (ec) {
      fail(Errc::missing_input, "array file '{}' missing", path.string());
    }
    if (actual < expected) {
      fail(Errc::truncated, "'{}' holds {} bytes, shape needs {}", path.string(), actual, expected);
    }
    if (actual > expected) {
      fail(Errc::dimension_mismatch, "'{}' holds {} bytes, shape needs only {}", path.string(), actual, expected);
    }
    a.bytes.resize(expected);
    std::ifstream f(path, std::ios::binary);
    f.read(reinterpret_cast<char *>(a.bytes.data()), std::streamsize(expected));
    if (!f) {
      fail(Errc::truncated, "short read on '{}'", path.string());
    }
    b.arrays.push_back(std::move(a));
  }
  return b;
}

} // namespace mrsi
