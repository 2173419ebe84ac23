#pragma once

#include <chrono>
#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace driftbench {

// Calendar date at day precision (proleptic Gregorian, UTC).
class Date {
 public:
  constexpr Date() = default;
  Date(int year, unsigned month, unsigned day);
  explicit Date(std::chrono::sys_days days) : days_(days) {}

  // Parses "YYYY-MM-DD". Throws std::invalid_argument on anything else.
  static Date parse(std::string_view iso);
  static std::optional<Date> try_parse(std::string_view iso);

  int year() const;
  unsigned month() const;
  unsigned day() const;
  std::chrono::sys_days sys_days() const { return days_; }

  Date plus_days(int n) const { return Date(days_ + std::chrono::days{n}); }

  std::string iso() const;

  friend auto operator<=>(const Date&, const Date&) = default;
  friend bool operator==(const Date&, const Date&) = default;

 private:
  std::chrono::sys_days days_{};
};

// Validity interval. A missing start is the unbounded past, a missing end the
// unbounded future.
struct TimeInterval {
  std::optional<Date> start;
  std::optional<Date> end;

  bool valid() const { return (start || end) && (!start || !end || *start <= *end); }

  // Inclusive overlap with [from, to].
  bool overlaps(const Date& from, const Date& to) const {
    if (start && *start > to) return false;
    if (end && *end < from) return false;
    return true;
  }

  friend bool operator==(const TimeInterval&, const TimeInterval&) = default;
};

inline std::string to_field(const std::optional<Date>& d) { return d ? d->iso() : std::string(); }

}  // namespace driftbench
