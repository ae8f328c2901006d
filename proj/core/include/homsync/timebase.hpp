#pragma once

// Exact femtosecond time arithmetic shared by every module.
//
// Ticks are signed 128-bit femtosecond counts. 64-bit femtoseconds would wrap
// after roughly 2.6 simulated hours; 128 bits cover any run we care about.

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace homsync {

using Ticks = __int128;

inline constexpr Ticks kFsPerPs = 1'000;
inline constexpr Ticks kFsPerNs = 1'000'000;
inline constexpr Ticks kFsPerUs = 1'000'000'000;
inline constexpr Ticks kFsPerMs = 1'000'000'000'000;
inline constexpr Ticks kFsPerSecond = 1'000'000'000'000'000;

std::string to_string(Ticks value);

class Duration {
 public:
  constexpr Duration() = default;

  static constexpr Duration fs(Ticks ticks) { return Duration(ticks); }
  static constexpr Duration ps(Ticks n) { return Duration(n * kFsPerPs); }
  static constexpr Duration ns(Ticks n) { return Duration(n * kFsPerNs); }
  static constexpr Duration us(Ticks n) { return Duration(n * kFsPerUs); }
  static constexpr Duration ms(Ticks n) { return Duration(n * kFsPerMs); }
  static constexpr Duration seconds(Ticks n) { return Duration(n * kFsPerSecond); }

  // Rounded to the nearest femtosecond, ties toward zero.
  static Duration from_fs(double fs);
  static Duration from_ps(double ps) { return from_fs(ps * 1e3); }
  static Duration from_seconds(double s) { return from_fs(s * 1e15); }

  /// Parses "<decimal> <unit>" exactly (units fs, ps, ns, us, ms, s). A bare
  /// number is read as femtoseconds. Rounds to 1 fs with ties toward zero.
  static Duration parse(std::string_view text);

  constexpr Ticks ticks() const { return ticks_; }
  double to_fs() const { return static_cast<double>(ticks_); }
  double to_ps() const { return static_cast<double>(ticks_) * 1e-3; }
  double to_seconds() const { return static_cast<double>(ticks_) / 1e15; }

  constexpr Duration operator-() const { return Duration(-ticks_); }
  constexpr Duration& operator+=(Duration other) {
    ticks_ += other.ticks_;
    return *this;
  }
  constexpr Duration& operator-=(Duration other) {
    ticks_ -= other.ticks_;
    return *this;
  }
  friend constexpr Duration operator+(Duration a, Duration b) { return Duration(a.ticks_ + b.ticks_); }
  friend constexpr Duration operator-(Duration a, Duration b) { return Duration(a.ticks_ - b.ticks_); }
  friend constexpr Duration operator*(Duration a, Ticks k) { return Duration(a.ticks_ * k); }
  friend constexpr Duration operator*(Ticks k, Duration a) { return Duration(a.ticks_ * k); }
  // Truncating integer division.
  friend constexpr Duration operator/(Duration a, Ticks k) { return Duration(a.ticks_ / k); }
  friend constexpr auto operator<=>(Duration, Duration) = default;

 private:
  constexpr explicit Duration(Ticks ticks) : ticks_(ticks) {}
  Ticks ticks_ = 0;
};

class TimeTag {
 public:
  constexpr TimeTag() = default;
  static constexpr TimeTag from_ticks(Ticks ticks) { return TimeTag(ticks); }
  static constexpr TimeTag epoch() { return TimeTag(0); }

  constexpr Ticks ticks() const { return ticks_; }
  constexpr Duration since_epoch() const { return Duration::fs(ticks_); }
  double to_seconds() const { return static_cast<double>(ticks_) / 1e15; }

  constexpr TimeTag& operator+=(Duration d) {
    ticks_ += d.ticks();
    return *this;
  }
  friend constexpr TimeTag operator+(TimeTag t, Duration d) { return TimeTag(t.ticks_ + d.ticks()); }
  friend constexpr TimeTag operator-(TimeTag t, Duration d) { return TimeTag(t.ticks_ - d.ticks()); }
  friend constexpr Duration operator-(TimeTag a, TimeTag b) { return Duration::fs(a.ticks_ - b.ticks_); }
  friend constexpr auto operator<=>(TimeTag, TimeTag) = default;

 private:
  constexpr explicit TimeTag(Ticks ticks) : ticks_(ticks) {}
  Ticks ticks_ = 0;
};

/// Exact decimal in the largest unit not exceeding |d|, e.g. "868.1 ps".
/// Round-trips through Duration::parse.
std::string format_duration(Duration d);

std::ostream& operator<<(std::ostream& os, Duration d);
std::ostream& operator<<(std::ostream& os, TimeTag t);

/// Nearest integer multiple of `resolution`; exact ties round toward zero.
/// Throws UsageError when resolution <= 0.
Duration quantize(Duration t, Duration resolution);

/// Same rule for a real-valued femtosecond request (sub-femtosecond input).
Duration quantize_fs(long double t_fs, Duration resolution);

enum class ClockId : std::uint8_t { A, B };

char to_char(ClockId id);

struct TimestampSeries {
  ClockId clock = ClockId::A;
  std::vector<TimeTag> tags;

  std::size_t size() const { return tags.size(); }
  bool empty() const { return tags.empty(); }
  bool is_sorted() const;
};

/// Tags t with start <= t < start + length, order preserved.
TimestampSeries window(const TimestampSeries& series, TimeTag start, Duration length);

// CSV with header `clock_id,ticks_fs`.
void write_timestamp_csv(std::ostream& os, std::span<const TimestampSeries> series);
std::vector<TimestampSeries> read_timestamp_csv(std::istream& is);

namespace literals {

constexpr Duration operator""_fs(unsigned long long v) { return Duration::fs(static_cast<Ticks>(v)); }
constexpr Duration operator""_ps(unsigned long long v) { return Duration::ps(static_cast<Ticks>(v)); }
constexpr Duration operator""_ns(unsigned long long v) { return Duration::ns(static_cast<Ticks>(v)); }
constexpr Duration operator""_us(unsigned long long v) { return Duration::us(static_cast<Ticks>(v)); }
constexpr Duration operator""_ms(unsigned long long v) { return Duration::ms(static_cast<Ticks>(v)); }
constexpr Duration operator""_s(unsigned long long v) { return Duration::seconds(static_cast<Ticks>(v)); }
inline Duration operator""_ps(long double v) { return Duration::from_fs(static_cast<double>(v * 1000.0L)); }

}  // namespace literals

}  // namespace homsync
