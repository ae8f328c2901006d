#include "homsync/metrology.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>

#include "homsync/error.hpp"
#include "homsync/rng.hpp"

namespace homsync::metrology {

const TdevPoint* TdevCurve::at(Duration averaging_time) const {
  for (const TdevPoint& p : points)
    if (p.averaging_time == averaging_time) return &p;
  return nullptr;
}

TdevCurve tdev(const StabilitySeries& series, std::span<const std::size_t> m_values) {
  if (series.tau0.ticks() <= 0) throw UsageError("tdev: tau0 must be positive");
  const std::size_t n = series.values.size();
  std::vector<Ticks> prefix(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + series.values[i].ticks();

  TdevCurve curve;
  for (const std::size_t m : m_values) {
    if (m == 0 || n < 3 * m + 1) {
      curve.skipped_m.push_back(m);
      continue;
    }
    const std::size_t terms = n - 3 * m + 1;
    long double acc = 0.0L;
    for (std::size_t j = 0; j < terms; ++j) {
      const Ticks s = prefix[j + 3 * m] - 3 * prefix[j + 2 * m] + 3 * prefix[j + m] - prefix[j];
      const auto sd = static_cast<long double>(s);
      acc += sd * sd;
    }
    const long double md = static_cast<long double>(m);
    const long double var = acc / (6.0L * md * md * static_cast<long double>(terms));
    curve.points.push_back(
        {m, series.tau0 * static_cast<Ticks>(m), static_cast<double>(std::sqrt(var)), terms});
  }
  return curve;
}

std::vector<std::size_t> default_m_values(std::size_t n) {
  std::vector<std::size_t> out;
  for (std::size_t m = 1; m <= n / 4; m *= 2) out.push_back(m);
  return out;
}

double mean_fs(const StabilitySeries& series) {
  if (series.values.empty()) throw InsufficientDataError("mean of an empty series");
  Ticks sum = 0;
  for (const Duration v : series.values) sum += v.ticks();
  return static_cast<double>(static_cast<long double>(sum) / static_cast<long double>(series.values.size()));
}

double rms_fs(const StabilitySeries& series) {
  if (series.values.empty()) throw InsufficientDataError("rms of an empty series");
  const long double n = static_cast<long double>(series.values.size());
  Ticks sum = 0;
  for (const Duration v : series.values) sum += v.ticks();
  const long double mean = static_cast<long double>(sum) / n;
  long double acc = 0.0L;
  for (const Duration v : series.values) {
    const long double d = static_cast<long double>(v.ticks()) - mean;
    acc += d * d;
  }
  return static_cast<double>(std::sqrt(acc / n));
}

Duration rms(const StabilitySeries& series) { return Duration::from_fs(rms_fs(series)); }

StabilitySeries synthesize(NoiseKind kind, const NoiseParams& params, std::size_t n, std::uint64_t seed) {
  if (n < 4) throw UsageError("synthesize: need at least 4 samples");
  if (params.tau0.ticks() <= 0) throw UsageError("synthesize: tau0 must be positive");
  StabilitySeries out;
  out.tau0 = params.tau0;
  out.values.reserve(n);
  Rng rng(seed);
  switch (kind) {
    case NoiseKind::white_pm:
      for (std::size_t i = 0; i < n; ++i) out.values.push_back(Duration::from_fs(params.sigma_fs * rng.normal()));
      break;
    case NoiseKind::random_walk: {
      double x = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        x += params.step_fs * rng.normal();
        out.values.push_back(Duration::from_fs(x));
      }
      break;
    }
    case NoiseKind::ramp:
      for (std::size_t i = 0; i < n; ++i)
        out.values.push_back(Duration::from_fs(params.offset_fs + params.slope_fs * static_cast<double>(i)));
      break;
    case NoiseKind::diurnal:
      if (!(params.period_samples > 0.0)) throw UsageError("synthesize: period must be positive");
      for (std::size_t i = 0; i < n; ++i) {
        const double phase = 2.0 * std::numbers::pi * static_cast<double>(i) / params.period_samples;
        out.values.push_back(Duration::from_fs(params.amplitude_fs * std::sin(phase)));
      }
      break;
  }
  return out;
}

StabilitySeries longest_segment(std::span<const std::optional<Duration>> samples, Duration tau0) {
  std::size_t best_begin = 0;
  std::size_t best_len = 0;
  std::size_t begin = 0;
  for (std::size_t i = 0; i <= samples.size(); ++i) {
    if (i == samples.size() || !samples[i]) {
      if (i - begin > best_len) {
        best_begin = begin;
        best_len = i - begin;
      }
      begin = i + 1;
    }
  }
  StabilitySeries out;
  out.tau0 = tau0;
  out.values.reserve(best_len);
  for (std::size_t i = best_begin; i < best_begin + best_len; ++i) out.values.push_back(*samples[i]);
  return out;
}

void write_tdev_csv(std::ostream& os, const TdevCurve& curve) {
  os << "averaging_time_s,tdev_fs,n_terms\n" << std::setprecision(12);
  for (const TdevPoint& p : curve.points)
    os << p.averaging_time.to_seconds() << ',' << p.tdev_fs << ',' << p.n_terms << '\n';
}

}  // namespace homsync::metrology
