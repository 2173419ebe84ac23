#include "driftbench/date.hpp"

#include <charconv>
#include <cstdio>
#include <stdexcept>

namespace driftbench {

using namespace std::chrono;

Date::Date(int y, unsigned m, unsigned d) {
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) {
    throw std::invalid_argument("invalid calendar date " + std::to_string(y) + "-" +
                                std::to_string(m) + "-" + std::to_string(d));
  }
  days_ = std::chrono::sys_days{ymd};
}

std::optional<Date> Date::try_parse(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  int y = 0;
  unsigned m = 0, d = 0;
  auto num = [&](std::string_view part, auto& out) {
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    return ec == std::errc() && p == part.data() + part.size();
  };
  if (!num(s.substr(0, 4), y) || !num(s.substr(5, 2), m) || !num(s.substr(8, 2), d)) {
    return std::nullopt;
  }
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  return Date(std::chrono::sys_days{ymd});
}

Date Date::parse(std::string_view s) {
  auto d = try_parse(s);
  if (!d) throw std::invalid_argument("expected YYYY-MM-DD, got '" + std::string(s) + "'");
  return *d;
}

int Date::year() const { return int(year_month_day{days_}.year()); }
unsigned Date::month() const { return unsigned(year_month_day{days_}.month()); }
unsigned Date::day() const { return unsigned(year_month_day{days_}.day()); }

std::string Date::iso() const {
  year_month_day ymd{days_};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(ymd.year()), unsigned(ymd.month()),
                unsigned(ymd.day()));
  return buf;
}

}  // namespace driftbench
