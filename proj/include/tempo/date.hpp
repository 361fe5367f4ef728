#pragma once

#include <compare>
#include <cstdio>
#include <string>

#include "tempo/errors.hpp"

namespace tempo {

// Calendar date, day granularity. Manifest timestamps and API
// introduction dates are all dates, never times of day.
struct Date {
  int year = 0;
  int month = 1;
  int day = 1;

  auto operator<=>(const Date&) const = default;

  static bool is_valid(int y, int m, int d) {
    if (y < 1 || m < 1 || m > 12 || d < 1) return false;
    static const int dim[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    int max_d = dim[m - 1];
    bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    if (m == 2 && leap) max_d = 29;
    return d <= max_d;
  }

  // Accepts YYYY-MM-DD. Throws on anything else.
  static Date parse(const std::string& s) {
    int y = 0, m = 0, d = 0;
    char extra = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%d%c", &y, &m, &d, &extra) != 3 ||
        !is_valid(y, m, d))
      throw Error("invalid date: '" + s + "' (expected YYYY-MM-DD)");
    return Date{y, m, d};
  }

  std::string str() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
    return buf;
  }
};

}  // namespace tempo
