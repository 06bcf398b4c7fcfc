#pragma once

#include "mrsi/core/types.hpp"

namespace mrsi {

/// Scale an input and its companions by the same factor 1 / max|input|.
/// Returns the factor so results can be mapped back with `x * scale`.
inline double normalize_unit(std::span<Cx> input, std::initializer_list<std::span<Cx>> companions = {})
{
  double const scale = max_abs(input);
  if (!(scale > 0) || !std::isfinite(scale)) {
    fail(Errc::degenerate, "normalize_unit: input maximum modulus is {}, scale undefined", scale);
  }
  double const inv = 1.0 / scale;
  for (auto &v : input) {
    v *= inv;
  }
  for (auto c : companions) {
    for (auto &v : c) {
      v *= inv;
    }
  }
  return scale;
}

} // namespace mrsi
