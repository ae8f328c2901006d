#pragma once

// Stability statistics over time-error series: RMS, the overlapping time
// deviation, and seeded noise fixtures for checking them.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "homsync/timebase.hpp"

namespace homsync::metrology {

struct StabilitySeries {
  Duration tau0 = Duration::seconds(1);
  std::vector<Duration> values;
};

struct TdevPoint {
  std::size_t m = 0;
  Duration averaging_time;
  double tdev_fs = 0.0;
  std::size_t n_terms = 0;
};

struct TdevCurve {
  std::vector<TdevPoint> points;
  std::vector<std::size_t> skipped_m;  // requested but N < 3m + 1

  const TdevPoint* at(Duration averaging_time) const;
};

/// TDEV^2(m tau0) = sum_j S_j^2 / (6 m^2 (N - 3m + 1)), where S_j is the sum
/// of m consecutive second differences at lag m. Second differences are
/// formed exactly in integer femtoseconds, so affine trends cancel exactly.
TdevCurve tdev(const StabilitySeries& series, std::span<const std::size_t> m_values);

/// Powers of two up to N / 4.
std::vector<std::size_t> default_m_values(std::size_t n);

/// Root mean square deviation about the mean. Throws InsufficientDataError on
/// an empty series.
double rms_fs(const StabilitySeries& series);
Duration rms(const StabilitySeries& series);
double mean_fs(const StabilitySeries& series);

enum class NoiseKind { white_pm, random_walk, ramp, diurnal };

struct NoiseParams {
  Duration tau0 = Duration::seconds(1);
  double sigma_fs = 1000.0;       // white_pm
  double step_fs = 100.0;         // random_walk, per sample
  double slope_fs = 1.0;          // ramp, per sample
  double offset_fs = 0.0;         // ramp intercept
  double amplitude_fs = 1000.0;   // diurnal
  double period_samples = 86400;  // diurnal
};

/// Values are rounded to whole femtoseconds. Throws UsageError for n < 4.
StabilitySeries synthesize(NoiseKind kind, const NoiseParams& params, std::size_t n, std::uint64_t seed);

/// Gap policy: split at missing samples and keep the longest run (the first
/// one on ties). Interpolating across gaps would bias TDEV low.
StabilitySeries longest_segment(std::span<const std::optional<Duration>> samples, Duration tau0);

// CSV `averaging_time_s,tdev_fs,n_terms`.
void write_tdev_csv(std::ostream& os, const TdevCurve& curve);

}  // namespace homsync::metrology
