#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace lmscore {

// Fixed-point rendering with `digits` decimals. Values that round to zero
// print without a sign so output never contains "-0.000000".
inline std::string format_fixed(double value, int digits = 6) {
  if (std::isnan(value)) return "NaN";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, value);
  std::string s(buf);
  if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

}  // namespace lmscore
