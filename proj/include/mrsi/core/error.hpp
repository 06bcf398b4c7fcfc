#pragma once

#include <fmt/format.h>

#include <stdexcept>
#include <string>

namespace mrsi {

enum class Errc
{
  invalid_argument,
  shape_mismatch,
  non_finite,
  version_mismatch,
  truncated,
  dimension_mismatch,
  degenerate,
  diverged,
  config,
  missing_input,
  io,
};

inline char const *to_string(Errc e)
{
  switch (e) {
  case Errc::invalid_argument: return "invalid argument";
  case Errc::shape_mismatch: return "shape mismatch";
  case Errc::non_finite: return "non-finite value";
  case Errc::version_mismatch: return "version mismatch";
  case Errc::truncated: return "truncated file";
  case Errc::dimension_mismatch: return "dimension mismatch";
  case Errc::degenerate: return "degenerate input";
  case Errc::diverged: return "numerical failure";
  case Errc::config: return "config error";
  case Errc::missing_input: return "missing input";
  case Errc::io: return "i/o error";
  }
  return "error";
}

class Error : public std::runtime_error
{
public:
  Error(Errc code, std::string const &msg)
    : std::runtime_error(fmt::format("{}: {}", to_string(code), msg))
    , code_(code)
  {
  }

  Errc code() const noexcept { return code_; }

private:
  Errc code_;
};

template <typename... Args>
[[noreturn]] void fail(Errc code, fmt::format_string<Args...> f, Args &&...args)
{
  throw Error(code, fmt::format(f, std::forward<Args>(args)...));
}

/// Process exit code for the CLI: 2 config, 3 data, 4 numerical.
inline int exit_code(Errc e)
{
  switch (e) {
  case Errc::config:
  case Errc::invalid_argument: return 2;
  case Errc::non_finite:
  case Errc::diverged:
  case Errc::degenerate: return 4;
  default: return 3;
  }
}

} // namespace mrsi
