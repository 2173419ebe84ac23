#include <doctest.h>

#include <stdexcept>

#include "driftbench/date.hpp"

using namespace driftbench;

TEST_CASE("iso round trip") {
  for (const char* s : {"2019-01-01", "2020-02-29", "2021-12-31", "1999-07-04"}) {
    CHECK(Date::parse(s).iso() == s);
  }
  Date d(2021, 8, 27);
  CHECK(d.year() == 2021);
  CHECK(d.month() == 8u);
  CHECK(d.day() == 27u);
}

TEST_CASE("invalid dates are rejected") {
  CHECK_THROWS_AS(Date(2021, 2, 29), std::invalid_argument);
  CHECK_THROWS_AS(Date::parse("2021-13-01"), std::invalid_argument);
  CHECK_FALSE(Date::try_parse("2021-1-01"));
  CHECK_FALSE(Date::try_parse("2021/01/01"));
  CHECK_FALSE(Date::try_parse("20x1-01-01"));
  CHECK_FALSE(Date::try_parse(""));
}

TEST_CASE("day arithmetic crosses leap days") {
  CHECK(Date(2020, 2, 28).plus_days(1).iso() == "2020-02-29");
  CHECK(Date(2020, 2, 28).plus_days(2).iso() == "2020-03-01");
  CHECK(Date(2021, 2, 28).plus_days(1).iso() == "2021-03-01");
  CHECK(Date(2021, 1, 1).plus_days(-1).iso() == "2020-12-31");
  CHECK(Date(2021, 1, 1) < Date(2021, 1, 2));
}

TEST_CASE("intervals") {
  TimeInterval closed{Date(2021, 2, 13), Date(2021, 6, 30)};
  CHECK(closed.valid());
  CHECK(closed.overlaps(Date(2021, 6, 30), Date(2021, 9, 30)));  // shared endpoint counts
  CHECK(closed.overlaps(Date(2021, 1, 1), Date(2021, 2, 13)));
  CHECK_FALSE(closed.overlaps(Date(2021, 7, 1), Date(2021, 9, 30)));

  TimeInterval open_end{Date(2010, 3, 31), std::nullopt};
  CHECK(open_end.valid());
  CHECK(open_end.overlaps(Date(2030, 1, 1), Date(2030, 3, 31)));
  CHECK_FALSE(open_end.overlaps(Date(2009, 1, 1), Date(2010, 3, 30)));

  CHECK_FALSE(TimeInterval{}.valid());
  CHECK_FALSE((TimeInterval{Date(2021, 6, 1), Date(2020, 6, 1)}.valid()));
  CHECK(to_field(std::nullopt).empty());
  CHECK(to_field(Date(2021, 2, 13)) == "2021-02-13");
}
