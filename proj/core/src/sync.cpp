#include "homsync/sync.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "homsync/error.hpp"

namespace homsync::sync {

void CorrelationConfig::validate() const {
  if (bin_width.ticks() <= 0) throw UsageError("correlation: bin_width must be positive");
  if (span_hi <= span_lo) throw UsageError("correlation: span is empty");
  if (window.ticks() <= 0) throw UsageError("correlation: window must be positive");
}

std::size_t CorrelationConfig::bins() const {
  const Ticks width = (span_hi - span_lo).ticks();
  return static_cast<std::size_t>((width + bin_width.ticks() - 1) / bin_width.ticks());
}

std::vector<Duration> CorrelationHistogram::bin_edges() const {
  std::vector<Duration> edges;
  edges.reserve(counts.size() + 1);
  for (std::size_t k = 0; k < counts.size(); ++k) edges.push_back(bin_lo(k));
  edges.push_back(span_hi);
  return edges;
}

std::uint64_t CorrelationHistogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

Correlator::Correlator(const CorrelationConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  hist_.span_lo = cfg_.span_lo;
  hist_.span_hi = cfg_.span_hi;
  hist_.bin_width = cfg_.bin_width;
  hist_.counts.assign(cfg_.bins(), 0);
}

namespace {

void check_order(std::span<const TimeTag> tags, const std::optional<TimeTag>& last, const char* which) {
  std::optional<TimeTag> prev = last;
  for (const TimeTag t : tags) {
    if (prev && t < *prev) throw UsageError(std::string("correlator: stream ") + which + " is not sorted");
    prev = t;
  }
}

}  // namespace

void Correlator::add_a(std::span<const TimeTag> tags) {
  if (tags.empty()) return;
  check_order(tags, last_a_, "a");
  pending_a_.insert(pending_a_.end(), tags.begin(), tags.end());
  last_a_ = tags.back();
  hist_.n_a += tags.size();
  drain(false);
}

void Correlator::add_b(std::span<const TimeTag> tags) {
  if (tags.empty()) return;
  check_order(tags, last_b_, "b");
  b_.insert(b_.end(), tags.begin(), tags.end());
  last_b_ = tags.back();
  hist_.n_b += tags.size();
  drain(false);
}

void Correlator::drain(bool final) {
  const Ticks w = cfg_.bin_width.ticks();
  while (!pending_a_.empty()) {
    const TimeTag a = pending_a_.front();
    // Partners satisfy a - span_hi < b <= a - span_lo. Later b tags can still
    // land in that range until the b stream has moved past it.
    if (!final && !(last_b_ && *last_b_ > a - cfg_.span_lo)) break;
    while (!b_.empty() && b_.front() <= a - cfg_.span_hi) b_.pop_front();
    for (const TimeTag b : b_) {
      const Duration d = a - b;
      if (d < cfg_.span_lo) break;
      ++hist_.counts[static_cast<std::size_t>((d - cfg_.span_lo).ticks() / w)];
    }
    pending_a_.pop_front();
  }
  if (pending_a_.empty() && last_a_) {
    while (!b_.empty() && b_.front() <= *last_a_ - cfg_.span_hi) b_.pop_front();
  }
}

CorrelationHistogram Correlator::finish() {
  drain(true);
  CorrelationHistogram out = std::move(hist_);
  hist_ = CorrelationHistogram{};
  hist_.span_lo = cfg_.span_lo;
  hist_.span_hi = cfg_.span_hi;
  hist_.bin_width = cfg_.bin_width;
  hist_.counts.assign(cfg_.bins(), 0);
  pending_a_.clear();
  b_.clear();
  last_a_.reset();
  last_b_.reset();
  return out;
}

CorrelationHistogram cross_correlate(const TimestampSeries& a, const TimestampSeries& b, const CorrelationConfig& cfg) {
  Correlator c(cfg);
  c.add_b(b.tags);
  c.add_a(a.tags);
  return c.finish();
}

namespace {

using Vec4 = Eigen::Vector4d;

struct LmResult {
  Vec4 p;
  int iterations = 0;
  bool converged = false;
};

// p = (amplitude, centre, sigma, background); x in ps relative to the peak bin.
LmResult levenberg_marquardt(const std::vector<double>& x, const std::vector<double>& y,
                             const std::vector<double>& weight, Vec4 p, int max_iter) {
  auto cost_of = [&](const Vec4& q) {
    double c = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double u = (x[k] - q(1)) / q(2);
      const double r = q(0) * std::exp(-0.5 * u * u) + q(3) - y[k];
      c += weight[k] * r * r;
    }
    return c;
  };

  LmResult out;
  double cost = cost_of(p);
  double lambda = 1e-3;
  for (int iter = 1; iter <= max_iter; ++iter) {
    out.iterations = iter;
    Eigen::Matrix4d jtj = Eigen::Matrix4d::Zero();
    Vec4 jtr = Vec4::Zero();
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double dx = x[k] - p(1);
      const double u = dx / p(2);
      const double e = std::exp(-0.5 * u * u);
      const double r = p(0) * e + p(3) - y[k];
      const Vec4 j(e, p(0) * e * dx / (p(2) * p(2)), p(0) * e * dx * dx / (p(2) * p(2) * p(2)), 1.0);
      jtj.noalias() += weight[k] * j * j.transpose();
      jtr.noalias() += weight[k] * r * j;
    }

    bool accepted = false;
    while (!accepted) {
      Eigen::Matrix4d damped = jtj;
      for (int i = 0; i < 4; ++i) damped(i, i) += lambda * std::max(jtj(i, i), 1e-300);
      const Vec4 step = damped.ldlt().solve(-jtr);
      const Vec4 trial = p + step;
      const double trial_cost = trial(2) > 0.0 && trial.allFinite() ? cost_of(trial) : INFINITY;
      if (trial_cost <= cost) {
        const double amp_scale = std::abs(p(0)) + std::abs(p(3));
        const double width_scale = std::abs(p(2));
        const bool small = std::abs(step(0)) <= 1e-6 * amp_scale && std::abs(step(1)) <= 1e-6 * width_scale &&
                           std::abs(step(2)) <= 1e-6 * width_scale && std::abs(step(3)) <= 1e-6 * amp_scale;
        p = trial;
        cost = trial_cost;
        lambda = std::max(lambda * 0.1, 1e-15);
        accepted = true;
        if (small) {
          out.p = p;
          out.converged = true;
          return out;
        }
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          // No downhill step left at machine precision: stationary point.
          out.p = p;
          out.converged = true;
          return out;
        }
      }
    }
  }
  out.p = p;
  return out;
}

}  // namespace

OffsetEstimate fit_gaussian(const CorrelationHistogram& hist) {
  const std::size_t n = hist.counts.size();
  if (n < 4) throw NoPeakError("histogram has fewer than four bins");

  std::vector<double> y(hist.counts.begin(), hist.counts.end());
  std::vector<double> sorted = y;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 2), sorted.end());
  const double bg = sorted[n / 2];
  const auto kmax = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
  const double ymax = y[kmax];
  if (ymax < bg + 5.0 * std::sqrt(std::max(bg, 1.0))) {
    std::ostringstream msg;
    msg << "no correlation peak: max bin " << ymax << " against background " << bg;
    throw NoPeakError(msg.str());
  }

  const double bin_ps = hist.bin_width.to_ps();
  const Duration origin = hist.bin_lo(kmax);
  std::vector<double> x(n);
  for (std::size_t k = 0; k < n; ++k) x[k] = (hist.bin_lo(k) - origin).to_ps() + hist.sample_offset_ps();

  // Half-maximum walk for a width, then moments within 3 FWHM of the peak.
  const double half = bg + 0.5 * (ymax - bg);
  std::size_t left = kmax;
  std::size_t right = kmax;
  while (left > 0 && y[left - 1] > half) --left;
  while (right + 1 < n && y[right + 1] > half) ++right;
  const double fwhm_bins = static_cast<double>(right - left + 1);
  const auto reach = static_cast<std::size_t>(std::ceil(3.0 * fwhm_bins));
  const std::size_t lo = kmax > reach ? kmax - reach : 0;
  const std::size_t hi = std::min(n - 1, kmax + reach);
  double s0 = 0.0;
  double s1 = 0.0;
  for (std::size_t k = lo; k <= hi; ++k) {
    const double wk = std::max(y[k] - bg, 0.0);
    s0 += wk;
    s1 += wk * x[k];
  }
  const double mu0 = s1 / s0;
  double s2 = 0.0;
  for (std::size_t k = lo; k <= hi; ++k) s2 += std::max(y[k] - bg, 0.0) * (x[k] - mu0) * (x[k] - mu0);
  const double sigma0 = std::max(std::sqrt(s2 / s0), 0.5 * bin_ps);

  Vec4 p(ymax - bg, mu0, sigma0, bg);
  std::vector<double> weight(n, 1.0);
  LmResult fit = levenberg_marquardt(x, y, weight, p, 100);
  if (!fit.converged) throw NonConvergenceError("gaussian fit did not converge in 100 iterations");

  // Poisson-weighted refinement with weights frozen at the first solution.
  for (std::size_t k = 0; k < n; ++k) {
    const double u = (x[k] - fit.p(1)) / fit.p(2);
    weight[k] = 1.0 / std::max(fit.p(0) * std::exp(-0.5 * u * u) + fit.p(3), 1.0);
  }
  const int first_iterations = fit.iterations;
  fit = levenberg_marquardt(x, y, weight, fit.p, 100);
  if (!fit.converged) throw NonConvergenceError("weighted gaussian fit did not converge in 100 iterations");

  OffsetEstimate est;
  est.amplitude = fit.p(0);
  est.background = fit.p(3);
  est.sigma = Duration::from_ps(std::abs(fit.p(2)));
  est.tau_hat = origin + Duration::from_ps(fit.p(1));
  est.iterations = first_iterations + fit.iterations;
  if (est.tau_hat < hist.span_lo || est.tau_hat >= hist.span_hi)
    throw NonConvergenceError("fitted centre left the correlation span");
  if (!(est.amplitude > 0.0) || est.sigma.ticks() <= 0) throw NonConvergenceError("gaussian fit collapsed");

  double ss = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double u = (x[k] - fit.p(1)) / fit.p(2);
    const double r = fit.p(0) * std::exp(-0.5 * u * u) + fit.p(3) - y[k];
    ss += r * r;
  }
  est.fit_rms = std::sqrt(ss / static_cast<double>(n)) / est.amplitude;
  return est;
}

OffsetTracker::OffsetTracker(const CorrelationConfig& cfg, plant::Tcspc& tcspc, TimeTag start)
    : cfg_(cfg), tcspc_(tcspc), window_start_(start), next_step_(start), correlator_(cfg) {}

void OffsetTracker::close_until(TimeTag now) {
  while (now >= window_start_ + cfg_.window) close_window();
}

void OffsetTracker::close_window() {
  CorrelationHistogram hist = correlator_.finish();
  hist.tag_resolution = tcspc_.model().bin_width;
  OffsetPoint point;
  point.time = window_start_ + cfg_.window;
  try {
    point.estimate = fit_gaussian(hist);
  } catch (const Error& e) {
    point.failure = e.what();
  }
  if (!first_histogram_) first_histogram_ = std::move(hist);
  points_.push_back(std::move(point));
  window_start_ += cfg_.window;
}

void OffsetTracker::consume(const plant::EventBatch& batch) {
  close_until(batch.start);
  if (batch.start < window_start_) return;
  const Duration interval = tcspc_.model().sample_interval;
  while (batch.start >= next_step_) {
    tcspc_.step();
    next_step_ += interval;
  }
  const Duration bin = tcspc_.model().bin_width;
  const Duration systematic = Duration::from_fs(tcspc_.systematic_fs());

  auto stamp = [&](const TimestampSeries& in, Duration shift, void (Correlator::*add)(std::span<const TimeTag>)) {
    scratch_.clear();
    scratch_.reserve(in.tags.size());
    for (const TimeTag t : in.tags) {
      TimeTag s = TimeTag::epoch() + quantize(t.since_epoch() + shift, bin);
      // A walk step between batches can pull a tag behind its predecessor
      // when dead time is configured below the step size.
      if (!scratch_.empty() && s < scratch_.back()) s = scratch_.back();
      scratch_.push_back(s);
    }
    (correlator_.*add)(scratch_);
  };
  stamp(batch.tags_a, systematic, &Correlator::add_a);
  stamp(batch.tags_b, Duration{}, &Correlator::add_b);
}

OffsetRun offset_series(plant::Plant& plant, const control::ControllerConfig* controller, const CorrelationConfig& cfg,
                        std::size_t n_estimates, Duration free_run_batch, const control::BatchSink& extra_sink) {
  cfg.validate();
  if (n_estimates == 0) throw UsageError("offset_series: n_estimates must be positive");
  const Duration total = cfg.window * static_cast<Ticks>(n_estimates);

  OffsetRun run;
  if (controller) {
    control::DipScan scan = control::scan_dip(plant, *controller, extra_sink);
    OffsetTracker tracker(cfg, plant.tcspc(), plant.now());
    const control::BatchSink sink = [&](const plant::EventBatch& b) {
      tracker.consume(b);
      if (extra_sink) extra_sink(b);
    };
    run.lock = control::lock_from(plant, *controller, std::move(scan), total, sink);
    tracker.close_until(plant.now());
    run.points = tracker.points();
    run.first_histogram = tracker.first_histogram();
  } else {
    if (free_run_batch.ticks() <= 0) throw UsageError("offset_series: batch length must be positive");
    OffsetTracker tracker(cfg, plant.tcspc(), plant.now());
    const TimeTag stop = plant.now() + total;
    while (plant.now() < stop) {
      const plant::EventBatch b = plant.advance(std::min(free_run_batch, stop - plant.now()));
      tracker.consume(b);
      if (extra_sink) extra_sink(b);
    }
    tracker.close_until(plant.now());
    run.points = tracker.points();
    run.first_histogram = tracker.first_histogram();
  }
  return run;
}

void write_histogram_csv(std::ostream& os, const CorrelationHistogram& hist) {
  os << "bin_center_fs,counts\n";
  for (std::size_t k = 0; k < hist.counts.size(); ++k)
    os << homsync::to_string(hist.bin_center(k).ticks()) << ',' << hist.counts[k] << '\n';
}

void write_offsets_csv(std::ostream& os, std::span<const OffsetPoint> points) {
  os << "time_fs,tau_hat_fs,sigma_fs,fit_rms\n" << std::setprecision(12);
  for (const OffsetPoint& p : points) {
    os << homsync::to_string(p.time.ticks()) << ',';
    if (p.estimate) {
      os << homsync::to_string(p.estimate->tau_hat.ticks()) << ',' << homsync::to_string(p.estimate->sigma.ticks())
         << ',' << p.estimate->fit_rms;
    } else {
      os << ",,";
    }
    os << '\n';
  }
}

}  // namespace homsync::sync
