#include "homsync/timebase.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <utility>

#include "homsync/error.hpp"

namespace homsync {

std::string to_string(Ticks value) {
  if (value == 0) return "0";
  const bool negative = value < 0;
  // Work in the negative range so the most negative value does not overflow.
  Ticks v = negative ? value : -value;
  std::string digits;
  while (v != 0) {
    const int digit = static_cast<int>(-(v % 10));
    digits.push_back(static_cast<char>('0' + digit));
    v /= 10;
  }
  if (negative) digits.push_back('-');
  std::reverse(digits.begin(), digits.end());
  return digits;
}

namespace {

Ticks pow10(int n) {
  Ticks r = 1;
  for (int i = 0; i < n; ++i) r *= 10;
  return r;
}

// Divides num by den (den > 0) rounding to nearest, ties toward zero.
Ticks divide_nearest_ties_to_zero(Ticks num, Ticks den) {
  Ticks q = num / den;
  const Ticks rem = num % den;
  const Ticks twice = (rem < 0 ? -rem : rem) * 2;
  if (twice > den) q += (num < 0 ? -1 : 1);
  return q;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

Duration Duration::from_fs(double fs) {
  // Doubles below 2^62 convert through int64 without the long double path.
  if (std::abs(fs) < 4.6e18) {
    double n = std::trunc(fs);
    const double frac = fs - n;
    if (frac > 0.5) {
      n += 1.0;
    } else if (frac < -0.5) {
      n -= 1.0;
    }
    return Duration::fs(static_cast<std::int64_t>(n));
  }
  return quantize_fs(static_cast<long double>(fs), Duration::fs(1));
}

Duration Duration::parse(std::string_view text) {
  std::string_view s = trim(text);
  if (s.empty()) throw UsageError("empty duration");

  std::size_t pos = 0;
  bool negative = false;
  if (s[pos] == '+' || s[pos] == '-') {
    negative = s[pos] == '-';
    ++pos;
  }
  Ticks mantissa = 0;
  int exponent = 0;
  int significant = 0;
  bool any_digit = false;
  bool after_point = false;
  for (; pos < s.size(); ++pos) {
    const char c = s[pos];
    if (c == '.') {
      if (after_point) break;
      after_point = true;
      continue;
    }
    if (!std::isdigit(static_cast<unsigned char>(c))) break;
    any_digit = true;
    if (significant < 36) {
      mantissa = mantissa * 10 + (c - '0');
      if (mantissa != 0) ++significant;
      if (after_point) --exponent;
    } else if (!after_point) {
      ++exponent;
    }
  }
  if (!any_digit) throw UsageError("malformed duration '" + std::string(text) + "'");
  if (pos < s.size() && (s[pos] == 'e' || s[pos] == 'E')) {
    std::size_t epos = pos + 1;
    bool eneg = false;
    if (epos < s.size() && (s[epos] == '+' || s[epos] == '-')) {
      eneg = s[epos] == '-';
      ++epos;
    }
    int e = 0;
    bool edigit = false;
    while (epos < s.size() && std::isdigit(static_cast<unsigned char>(s[epos]))) {
      e = e * 10 + (s[epos] - '0');
      edigit = true;
      ++epos;
      if (e > 60) throw UsageError("duration exponent out of range in '" + std::string(text) + "'");
    }
    if (!edigit) throw UsageError("malformed duration exponent in '" + std::string(text) + "'");
    exponent += eneg ? -e : e;
    pos = epos;
  }
  const std::string_view unit = trim(s.substr(pos));
  int unit_exp = 0;
  if (unit.empty() || unit == "fs") {
    unit_exp = 0;
  } else if (unit == "ps") {
    unit_exp = 3;
  } else if (unit == "ns") {
    unit_exp = 6;
  } else if (unit == "us") {
    unit_exp = 9;
  } else if (unit == "ms") {
    unit_exp = 12;
  } else if (unit == "s") {
    unit_exp = 15;
  } else {
    throw UsageError("unknown time unit '" + std::string(unit) + "'");
  }
  const int total = exponent + unit_exp;
  Ticks value = 0;
  if (total >= 0) {
    if (total > 36) throw UsageError("duration out of range: '" + std::string(text) + "'");
    value = mantissa * pow10(total);
  } else if (total < -36) {
    value = 0;
  } else {
    value = divide_nearest_ties_to_zero(mantissa, pow10(-total));
  }
  return Duration::fs(negative ? -value : value);
}

std::string format_duration(Duration d) {
  static constexpr std::pair<Ticks, const char*> kUnits[] = {
      {kFsPerSecond, "s"}, {kFsPerMs, "ms"}, {kFsPerUs, "us"}, {kFsPerNs, "ns"}, {kFsPerPs, "ps"}, {1, "fs"}};
  const Ticks v = d.ticks();
  const Ticks mag = v < 0 ? -v : v;
  for (const auto& [scale, name] : kUnits) {
    if (mag < scale && scale != 1) continue;
    std::string out = to_string(mag / scale);
    Ticks frac = mag % scale;
    if (frac != 0) {
      std::string digits = to_string(frac + scale).substr(1);
      while (!digits.empty() && digits.back() == '0') digits.pop_back();
      out += "." + digits;
    }
    return (v < 0 ? "-" : "") + out + " " + name;
  }
  return "0 fs";
}

std::ostream& operator<<(std::ostream& os, Duration d) { return os << to_string(d.ticks()) << " fs"; }

std::ostream& operator<<(std::ostream& os, TimeTag t) { return os << "t=" << to_string(t.ticks()) << " fs"; }

Duration quantize(Duration t, Duration resolution) {
  if (resolution.ticks() <= 0) throw UsageError("quantize: resolution must be positive");
  return Duration::fs(divide_nearest_ties_to_zero(t.ticks(), resolution.ticks()) * resolution.ticks());
}

Duration quantize_fs(long double t_fs, Duration resolution) {
  if (resolution.ticks() <= 0) throw UsageError("quantize: resolution must be positive");
  const long double r = static_cast<long double>(resolution.ticks());
  const long double q = t_fs / r;
  long double n = std::trunc(q);
  const long double frac = q - n;
  if (frac > 0.5L) {
    n += 1.0L;
  } else if (frac < -0.5L) {
    n -= 1.0L;
  }
  return Duration::fs(static_cast<Ticks>(n) * resolution.ticks());
}

char to_char(ClockId id) { return id == ClockId::A ? 'A' : 'B'; }

bool TimestampSeries::is_sorted() const { return std::is_sorted(tags.begin(), tags.end()); }

TimestampSeries window(const TimestampSeries& series, TimeTag start, Duration length) {
  TimestampSeries out;
  out.clock = series.clock;
  if (length.ticks() <= 0) return out;
  const TimeTag end = start + length;
  const auto first = std::lower_bound(series.tags.begin(), series.tags.end(), start);
  const auto last = std::lower_bound(first, series.tags.end(), end);
  out.tags.assign(first, last);
  return out;
}

void write_timestamp_csv(std::ostream& os, std::span<const TimestampSeries> series) {
  os << "clock_id,ticks_fs\n";
  for (const auto& s : series) {
    const char id = to_char(s.clock);
    for (const TimeTag t : s.tags) os << id << ',' << to_string(t.ticks()) << '\n';
  }
}

namespace {

Ticks parse_ticks(std::string_view s, std::size_t line) {
  s = trim(s);
  bool negative = false;
  std::size_t i = 0;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    negative = s[0] == '-';
    i = 1;
  }
  if (i >= s.size()) throw IoError("timestamp csv line " + std::to_string(line) + ": empty tick value");
  Ticks v = 0;
  for (; i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i])))
      throw IoError("timestamp csv line " + std::to_string(line) + ": bad tick value");
    v = v * 10 + (s[i] - '0');
  }
  return negative ? -v : v;
}

}  // namespace

std::vector<TimestampSeries> read_timestamp_csv(std::istream& is) {
  std::vector<TimestampSeries> out(2);
  out[0].clock = ClockId::A;
  out[1].clock = ClockId::B;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (n == 1) {
      if (trim(line) != "clock_id,ticks_fs") throw IoError("timestamp csv: unexpected header");
      continue;
    }
    if (trim(line).empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError("timestamp csv line " + std::to_string(n) + ": missing comma");
    const std::string_view id = trim(std::string_view(line).substr(0, comma));
    const Ticks ticks = parse_ticks(std::string_view(line).substr(comma + 1), n);
    if (id == "A") {
      out[0].tags.push_back(TimeTag::from_ticks(ticks));
    } else if (id == "B") {
      out[1].tags.push_back(TimeTag::from_ticks(ticks));
    } else {
      throw IoError("timestamp csv line " + std::to_string(n) + ": unknown clock id");
    }
  }
  return out;
}

}  // namespace homsync
