#include "cloudmae/timeutil.hpp"

#include <cstdio>
#include <stdexcept>

namespace cloudmae {

bool is_leap_year(int year) {
  return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
}

int days_in_month(int year, int month) {
  static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (month == 2 && is_leap_year(year)) return 29;
  return kDays[month - 1];
}

int days_in_year(int year) { return is_leap_year(year) ? 366 : 365; }

namespace {

// civil <-> day-count conversions on the proleptic Gregorian calendar
int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

void civil_from_days(int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int64_t yy = static_cast<int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

int64_t floor_div(int64_t a, int64_t b) {
  int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

int64_t positive_mod(int64_t a, int64_t b) {
  int64_t r = a % b;
  return r < 0 ? r + b : r;
}

}  // namespace

int64_t to_unix_seconds(const CivilDateTime& c) {
  return days_from_civil(c.year, c.month, c.day) * 86400 + c.hour * 3600 +
         c.minute * 60 + c.second;
}

CivilDateTime from_unix_seconds(int64_t t) {
  CivilDateTime c;
  int64_t days = floor_div(t, 86400);
  int64_t sod = positive_mod(t, 86400);
  civil_from_days(days, c.year, c.month, c.day);
  c.hour = static_cast<int>(sod / 3600);
  c.minute = static_cast<int>((sod % 3600) / 60);
  c.second = static_cast<int>(sod % 60);
  return c;
}

int day_of_month_utc(int64_t t) { return from_unix_seconds(t).day; }

int month_utc(int64_t t) { return from_unix_seconds(t).month; }

int day_of_year_utc(int64_t t) {
  CivilDateTime c = from_unix_seconds(t);
  int doy = c.day;
  for (int m = 1; m < c.month; ++m) doy += days_in_month(c.year, m);
  return doy;
}

int seconds_of_day_utc(int64_t t) {
  return static_cast<int>(positive_mod(t, 86400));
}

std::string to_iso8601(int64_t t) {
  CivilDateTime c = from_unix_seconds(t);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", c.year, c.month,
                c.day, c.hour, c.minute, c.second);
  return buf;
}

int64_t parse_iso8601(const std::string& s) {
  CivilDateTime c;
  char tz = '\0';
  int n = std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d%c", &c.year, &c.month, &c.day,
                      &c.hour, &c.minute, &c.second, &tz);
  if (n < 6 || (n == 7 && tz != 'Z'))
    throw std::invalid_argument("malformed ISO-8601 timestamp: " + s);
  if (c.month < 1 || c.month > 12 || c.day < 1 || c.day > days_in_month(c.year, c.month) ||
      c.hour < 0 || c.hour > 23 || c.minute < 0 || c.minute > 59 || c.second < 0 ||
      c.second > 60)
    throw std::invalid_argument("out-of-range ISO-8601 timestamp: " + s);
  return to_unix_seconds(c);
}

}  // namespace cloudmae
