#pragma once

#include <cstdint>
#include <string>

namespace cloudmae {

struct CivilDateTime {
  int year = 1970;
  int month = 1;  // 1..12
  int day = 1;    // 1..31
  int hour = 0;
  int minute = 0;
  int second = 0;
};

bool is_leap_year(int year);
int days_in_month(int year, int month);
int days_in_year(int year);

// proleptic Gregorian calendar, UTC only
int64_t to_unix_seconds(const CivilDateTime& c);
CivilDateTime from_unix_seconds(int64_t t);

int day_of_month_utc(int64_t t);
int month_utc(int64_t t);
int day_of_year_utc(int64_t t);  // 1-based
int seconds_of_day_utc(int64_t t);

std::string to_iso8601(int64_t t);
int64_t parse_iso8601(const std::string& s);  // throws std::invalid_argument

}  // namespace cloudmae
