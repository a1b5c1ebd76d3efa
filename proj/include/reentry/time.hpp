// SPDX-License-Identifier: Apache-2.0
#pragma once

// Day-valued epochs. All times in the library are fractional days since
// 2000-01-01T00:00:00 UTC (leap seconds ignored).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <string_view>

#include "reentry/error.hpp"

namespace reentry {

inline constexpr std::chrono::sys_days kReferenceEpoch =
    std::chrono::year{2000} / std::chrono::January / 1;

namespace detail {

inline bool parse_fixed_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  return true;
}

}  // namespace detail

/// Parses "YYYY-MM-DD", "YYYY-MM-DDTHH:MM:SS[.ffffff][Z]" (also accepts a
/// space separator). Returns days since the reference epoch.
inline double parse_iso8601(std::string_view text) {
  using namespace std::chrono;
  auto fail = [&]() { return input_error("MalformedEpoch", std::string(text)); };
  while (!text.empty() && (text.back() == 'Z' || text.back() == ' ')) text.remove_suffix(1);

  int y = 0, mo = 0, d = 0;
  if (!detail::parse_fixed_int(text, 0, 4, y) || text.size() < 10 || text[4] != '-' ||
      !detail::parse_fixed_int(text, 5, 2, mo) || text[7] != '-' ||
      !detail::parse_fixed_int(text, 8, 2, d))
    throw fail();
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) throw fail();

  double seconds = 0.0;
  if (text.size() > 10) {
    if (text[10] != 'T' && text[10] != ' ') throw fail();
    int hh = 0, mm = 0, ss = 0;
    if (!detail::parse_fixed_int(text, 11, 2, hh) || text.size() < 19 || text[13] != ':' ||
        !detail::parse_fixed_int(text, 14, 2, mm) || text[16] != ':' ||
        !detail::parse_fixed_int(text, 17, 2, ss))
      throw fail();
    if (hh > 23 || mm > 59 || ss > 60) throw fail();
    double frac = 0.0;
    if (text.size() > 19) {
      if (text[19] != '.' || text.size() == 20) throw fail();
      double scale = 0.1;
      for (std::size_t i = 20; i < text.size(); ++i) {
        if (text[i] < '0' || text[i] > '9') throw fail();
        frac += (text[i] - '0') * scale;
        scale *= 0.1;
      }
    }
    seconds = hh * 3600.0 + mm * 60.0 + ss + frac;
  }
  const auto days_since = (sys_days{ymd} - kReferenceEpoch).count();
  return static_cast<double>(days_since) + seconds / 86400.0;
}

/// Formats a day-valued epoch as "YYYY-MM-DDTHH:MM:SS.fffZ" with
/// `frac_digits` (0-6) fractional-second digits.
inline std::string format_iso8601(double epoch_days, int frac_digits = 3) {
  using namespace std::chrono;
  frac_digits = std::clamp(frac_digits, 0, 6);
  long long ticks_per_sec = 1;
  for (int i = 0; i < frac_digits; ++i) ticks_per_sec *= 10;
  const long long ticks_per_day = 86400LL * ticks_per_sec;
  const auto total = static_cast<long long>(std::llround(epoch_days * static_cast<double>(ticks_per_day)));
  long long day_count = total / ticks_per_day;
  long long rem = total % ticks_per_day;
  if (rem < 0) {
    rem += ticks_per_day;
    --day_count;
  }
  const long long secs = rem / ticks_per_sec;
  const year_month_day ymd{kReferenceEpoch + days{day_count}};
  char buf[48];
  int len = std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lld",
                          static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                          static_cast<unsigned>(ymd.day()), secs / 3600, (secs / 60) % 60, secs % 60);
  if (frac_digits > 0)
    len += std::snprintf(buf + len, sizeof buf - static_cast<std::size_t>(len), ".%0*lld", frac_digits,
                         rem % ticks_per_sec);
  std::snprintf(buf + len, sizeof buf - static_cast<std::size_t>(len), "Z");
  return buf;
}

}  // namespace reentry
