#pragma once

#include <cmath>
#include <cstdint>

// Unit conventions: all library-internal rates are s^-1 and all times are
// seconds, except detection timestamps which are integer picoseconds (the
// on-disk representation; integers avoid float accumulation drift over long
// acquisitions). Files and CLI flags use MHz / ns / ps.

namespace photonstat {

inline constexpr double mhz_to_hz = 1e6;
inline constexpr double ns_to_s = 1e-9;
inline constexpr double ps_to_s = 1e-12;
inline constexpr double s_to_ps = 1e12;
inline constexpr double ps_to_ns = 1e-3;

// 1e9 and 1e12 are exactly representable, so dividing lands on the
// canonically rounded value (50 ns -> the double nearest 5e-8 s).
inline double ns_to_seconds(double t_ns) { return t_ns / 1e9; }

inline std::int64_t seconds_to_ps(double t_s) {
    return static_cast<std::int64_t>(std::llround(t_s * s_to_ps));
}

inline double ps_to_seconds(std::int64_t t_ps) {
    return static_cast<double>(t_ps) * ps_to_s;
}

}  // namespace photonstat
