#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace ctgest {

// 17 significant digits: enough to round-trip any double.
inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace ctgest
