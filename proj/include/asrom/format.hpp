#pragma once

#include <string>

namespace asrom {

/// Shortest-round-trip-safe decimal with 17 significant digits.
std::string fmt17(double v);

}  // namespace asrom
