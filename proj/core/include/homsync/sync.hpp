#pragma once

// Offset extraction: the discrete cross-correlation of the two tap streams,
// a Gaussian fit of its peak, and the windowed offset series built on both.

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "homsync/control.hpp"
#include "homsync/plant.hpp"
#include "homsync/timebase.hpp"

namespace homsync::sync {

struct CorrelationConfig {
  Duration bin_width = Duration::ps(4);
  Duration span_lo = -Duration::ns(2);  // search window for a - b
  Duration span_hi = Duration::ns(2);
  Duration window = Duration::seconds(1000);  // data per estimate

  void validate() const;
  std::size_t bins() const;
};

struct CorrelationHistogram {
  Duration span_lo;
  Duration span_hi;
  Duration bin_width;
  std::vector<std::uint64_t> counts;
  std::uint64_t n_a = 0;
  std::uint64_t n_b = 0;
  /// Lattice spacing of the tag differences (the tag quantum).
  Duration tag_resolution = Duration::fs(1);

  Duration bin_lo(std::size_t k) const { return span_lo + bin_width * static_cast<Ticks>(k); }
  /// Centre of bin k, truncated to whole femtoseconds.
  Duration bin_center(std::size_t k) const { return bin_lo(k) + bin_width / 2; }
  /// Mean of the lattice points bin k can hold, relative to its lower edge, in
  /// ps. Below the geometric centre by half a quantum; the fit uses this.
  double sample_offset_ps() const { return 0.5 * (bin_width - tag_resolution).to_ps(); }
  std::vector<Duration> bin_edges() const;
  std::uint64_t total() const;
};

/// Streaming two-pointer correlator. Feed both streams in non-decreasing
/// order, in any interleaving of chunks; `finish` drains what is pending.
/// Pairs are counted when span_lo <= a - b < span_hi.
class Correlator {
 public:
  explicit Correlator(const CorrelationConfig& cfg);

  void add_a(std::span<const TimeTag> tags);
  void add_b(std::span<const TimeTag> tags);
  CorrelationHistogram finish();

 private:
  void drain(bool final);

  CorrelationConfig cfg_;
  CorrelationHistogram hist_;
  std::deque<TimeTag> pending_a_;
  std::deque<TimeTag> b_;
  std::optional<TimeTag> last_a_;
  std::optional<TimeTag> last_b_;
};

CorrelationHistogram cross_correlate(const TimestampSeries& a, const TimestampSeries& b, const CorrelationConfig& cfg);

struct OffsetEstimate {
  Duration tau_hat;
  Duration sigma;
  double amplitude = 0.0;   // counts in the peak bin above background
  double background = 0.0;  // counts / bin
  double fit_rms = 0.0;     // rms residual / amplitude
  int iterations = 0;
};

/// amplitude * exp(-(t - tau)^2 / 2 sigma^2) + background, least squares.
/// Throws NoPeakError when the maximum bin does not clear the background by
/// 5 sqrt(background), NonConvergenceError after 100 iterations.
OffsetEstimate fit_gaussian(const CorrelationHistogram& hist);

struct OffsetPoint {
  TimeTag time;  // end of the window
  std::optional<OffsetEstimate> estimate;
  std::string failure;  // set when the window produced no estimate
};

/// Consumes plant batches and emits one estimate per window of `cfg.window`
/// of data. Clock-A tags carry the TCSPC systematic, and both streams are
/// quantized to the TCSPC bin. The instrument walk advances once per sample
/// interval of data.
class OffsetTracker {
 public:
  OffsetTracker(const CorrelationConfig& cfg, plant::Tcspc& tcspc, TimeTag start);

  void consume(const plant::EventBatch& batch);
  /// Closes every window that has ended by `now`.
  void close_until(TimeTag now);

  const std::vector<OffsetPoint>& points() const { return points_; }
  const std::optional<CorrelationHistogram>& first_histogram() const { return first_histogram_; }

 private:
  void close_window();

  CorrelationConfig cfg_;
  plant::Tcspc& tcspc_;
  TimeTag window_start_;
  TimeTag next_step_;
  Correlator correlator_;
  std::vector<TimeTag> scratch_;
  std::vector<OffsetPoint> points_;
  std::optional<CorrelationHistogram> first_histogram_;
};

struct OffsetRun {
  std::vector<OffsetPoint> points;
  std::optional<CorrelationHistogram> first_histogram;
  std::optional<control::LockRecord> lock;  // present when locked
};

/// `n_estimates` windows of data. With a controller, scans first and starts
/// the first window once the dip is acquired; without one the plant runs
/// free at its configured MDL setting in dwell-sized batches.
OffsetRun offset_series(plant::Plant& plant, const control::ControllerConfig* controller,
                        const CorrelationConfig& cfg, std::size_t n_estimates, Duration free_run_batch = Duration::seconds(1),
                        const control::BatchSink& extra_sink = {});

// CSV `bin_center_fs,counts`.
void write_histogram_csv(std::ostream& os, const CorrelationHistogram& hist);
// CSV `time_fs,tau_hat_fs,sigma_fs,fit_rms`; missing windows keep the time
// and leave the other fields empty.
void write_offsets_csv(std::ostream& os, std::span<const OffsetPoint> points);

}  // namespace homsync::sync
