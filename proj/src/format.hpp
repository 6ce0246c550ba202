// SPDX-License-Identifier: Apache-2.0
//
// Private text helpers shared by the file writers.

#pragma once

#include <cstdio>
#include <string>

namespace gdistil::detail {

/// 17 significant digits: enough for an exact binary64 round trip.
inline std::string format_double(double value) {
    char buf[40];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", value);
    return std::string(buf, static_cast<std::size_t>(n));
}

}  // namespace gdistil::detail
