#pragma once

#include <chrono>
#include <cstdio>
#include <string>

#include "severe/error.hpp"

namespace severe {

// Calendar day stored as days since 1970-01-01.
struct Date {
  int serial = 0;

  static Date from_ymd(int y, unsigned m, unsigned d) {
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    require(ymd.ok(), Errc::format_error, "invalid calendar date");
    return Date{static_cast<int>(std::chrono::sys_days{ymd}.time_since_epoch().count())};
  }

  std::chrono::year_month_day ymd() const { return std::chrono::sys_days{std::chrono::days{serial}}; }

  // 1-based day of the year (366 on 31 December of leap years).
  int day_of_year() const {
    const auto d = ymd();
    const std::chrono::sys_days jan1{d.year() / std::chrono::January / 1};
    return static_cast<int>((std::chrono::sys_days{d} - jan1).count()) + 1;
  }

  std::string iso() const {
    const auto d = ymd();
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                  static_cast<unsigned>(d.day()));
    return buf;
  }

  static Date parse(const std::string& s) {
    int y = 0;
    unsigned m = 0, d = 0;
    require(std::sscanf(s.c_str(), "%d-%u-%u", &y, &m, &d) == 3, Errc::format_error, "bad date '" + s + "'");
    return from_ymd(y, m, d);
  }

  Date operator+(int days) const { return Date{serial + days}; }
  auto operator<=>(const Date&) const = default;
};

}  // namespace severe
