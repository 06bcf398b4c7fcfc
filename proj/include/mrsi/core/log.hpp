#pragma once

#include <fmt/format.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <string_view>

namespace mrsi::log {

enum class Level
{
  error = 0,
  info = 1,
  debug = 2,
};

inline Level &level()
{
  static Level l = [] {
    char const *env = std::getenv("MRSI_LOG");
    if (!env) {
      return Level::error;
    }
    std::string_view v(env);
    if (v == "debug") {
      return Level::debug;
    }
    if (v == "info") {
      return Level::info;
    }
    return Level::error;
  }();
  return l;
}

template <typename... Args>
void error(fmt::format_string<Args...> f, Args &&...args)
{
  fmt::print(stderr, "[error] {}\n", fmt::format(f, std::forward<Args>(args)...));
}

template <typename... Args>
void info(fmt::format_string<Args...> f, Args &&...args)
{
  if (level() >= Level::info) {
    fmt::print(stderr, "[info] {}\n", fmt::format(f, std::forward<Args>(args)...));
  }
}

template <typename... Args>
void debug(fmt::format_string<Args...> f, Args &&...args)
{
  if (level() >= Level::debug) {
    fmt::print(stderr, "[debug] {}\n", fmt::format(f, std::forward<Args>(args)...));
  }
}

class Timer
{
public:
  Timer()
    : start_(std::chrono::steady_clock::now())
  {
  }

  double seconds() const
  {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_;
};

} // namespace mrsi::log
