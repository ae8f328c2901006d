#include "homsync/plant.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "homsync/error.hpp"

namespace homsync::plant {

namespace {

Ticks floor_div(Ticks a, Ticks b) {
  Ticks q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

Ticks to_hz(double rate, const char* what) {
  const auto hz = static_cast<Ticks>(std::llround(rate));
  if (hz <= 0) throw UsageError(std::string(what) + " must be a positive rate");
  return hz;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw UsageError(message);
}

}  // namespace

namespace detail {

SlotGrid::SlotGrid(Ticks hz) : hz_(hz) {
  Ticks a = hz;
  Ticks b = kFsPerSecond;
  while (b != 0) {
    const Ticks r = a % b;
    a = b;
    b = r;
  }
  num_ = static_cast<std::uint64_t>(hz / a);
  den_ = static_cast<std::uint64_t>(kFsPerSecond / a);
  // 2 * r * num and 2 * k * den must stay below 2^64 for r < 1e15, k <= hz.
  fast_ = num_ < 4000;
}

Ticks SlotGrid::nearest(Ticks t) {
  if (!have_base_ || t < base_ || t - base_ >= kFsPerSecond) {
    base_ = floor_div(t, kFsPerSecond) * kFsPerSecond;
    have_base_ = true;
  }
  const Ticks r = t - base_;
  if (fast_) {
    const std::uint64_t ru = static_cast<std::uint64_t>(r);
    const std::uint64_t k = (2 * ru * num_ + den_) / (2 * den_);
    return base_ + static_cast<Ticks>((2 * k * den_ + num_) / (2 * num_));
  }
  const Ticks k = (2 * r * hz_ + kFsPerSecond) / (2 * kFsPerSecond);
  return base_ + (2 * k * kFsPerSecond + hz_) / (2 * hz_);
}

}  // namespace detail

void SourceConfig::validate() const {
  require(rep_rate > 0.0, "source.rep_rate must be positive");
  require(pair_rate >= 0.0 && singles_rate_a >= 0.0 && singles_rate_b >= 0.0, "source rates must be non-negative");
  require(pair_rate <= std::min(singles_rate_a, singles_rate_b), "source.pair_rate must not exceed the singles rates");
  require(hom_fraction > 0.0 && hom_fraction <= 1.0, "source.hom_fraction must be in (0, 1]");
  require(pair_rate / hom_fraction < 0.01 * rep_rate, "source.pair_rate must be far below the repetition rate");
}

DelayLine DelayLine::fixed(Duration setting) {
  DelayLine d;
  d.kind_ = DelayLineKind::fixed;
  d.lo_ = setting;
  d.hi_ = setting;
  d.setting_ = setting;
  return d;
}

DelayLine DelayLine::motorized(Duration lo, Duration hi, Duration resolution, Duration setting) {
  require(resolution.ticks() > 0, "delay line resolution must be positive");
  require(lo <= hi, "delay line range is empty");
  DelayLine d;
  d.kind_ = DelayLineKind::motorized;
  d.lo_ = lo;
  d.hi_ = hi;
  d.resolution_ = resolution;
  d.set(setting);
  return d;
}

Duration DelayLine::set(Duration requested) {
  if (kind_ == DelayLineKind::fixed) throw UsageError("cannot set a fixed delay line");
  setting_ = std::clamp(quantize(requested, resolution_), lo_, hi_);
  return setting_;
}

Duration DelayLine::set_fs(long double requested_fs) {
  if (kind_ == DelayLineKind::fixed) throw UsageError("cannot set a fixed delay line");
  setting_ = std::clamp(quantize_fs(requested_fs, resolution_), lo_, hi_);
  return setting_;
}

void TemperatureConfig::validate() const {
  require(ou_tau > 0.0, "temperature.ou_tau must be positive");
  require(ou_sigma >= 0.0, "temperature.ou_sigma must be non-negative");
  require(diurnal_period > 0.0, "temperature.diurnal_period must be positive");
}

TemperatureProcess::TemperatureProcess(TemperatureConfig config, std::uint64_t seed)
    : config_(config), seed_(seed) {
  config_.validate();
  step_ = Duration::from_seconds(std::min(1.0, config_.ou_tau / 20.0));
  if (step_.ticks() <= 0) step_ = Duration::fs(1);
  inv_step_ = 1.0 / step_.to_seconds();
  decay_ = std::exp(-step_.to_seconds() / config_.ou_tau);
  innovation_ = config_.ou_sigma * std::sqrt(1.0 - decay_ * decay_);
  // The OU part starts at zero so the initial balance point is the nominal one.
  checkpoints_.push_back(0.0);
}

double TemperatureProcess::diurnal(std::size_t node) const {
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(node) * step_.to_seconds() / config_.diurnal_period;
  return config_.mean + config_.diurnal_amplitude * std::sin(phase);
}

const std::vector<double>& TemperatureProcess::chunk(std::size_t k) {
  for (const Chunk& c : cache_)
    if (c.index == k) return c.nodes;

  const auto walk = [&](std::size_t index, double state, std::vector<double>* nodes) {
    Rng rng(Rng::derive_seed(seed_, "ou.chunk." + std::to_string(index)));
    for (std::size_t j = 0; j < kChunk; ++j) {
      if (nodes) (*nodes)[j] = diurnal(index * kChunk + j) + state;
      state = decay_ * state + innovation_ * rng.normal();
    }
    if (nodes) (*nodes)[kChunk] = diurnal((index + 1) * kChunk) + state;
    return state;
  };
  while (checkpoints_.size() <= k) checkpoints_.push_back(walk(checkpoints_.size() - 1, checkpoints_.back(), nullptr));

  Chunk& c = cache_[victim_];
  victim_ ^= 1;
  c.index = k;
  c.nodes.resize(kChunk + 1);
  const double next = walk(k, checkpoints_[k], &c.nodes);
  if (checkpoints_.size() == k + 1) checkpoints_.push_back(next);
  return c.nodes;
}

double TemperatureProcess::at(TimeTag t) {
  const double seconds = t.to_seconds();
  if (config_.ou_sigma == 0.0) {
    const double phase = 2.0 * std::numbers::pi * seconds / config_.diurnal_period;
    return config_.mean + config_.diurnal_amplitude * std::sin(phase);
  }
  const double u = std::max(seconds, 0.0) * inv_step_;
  const double node = std::floor(u);
  const auto i = static_cast<std::size_t>(node);
  const std::vector<double>& nodes = chunk(i / kChunk);
  const std::size_t j = i % kChunk;
  return nodes[j] + (u - node) * (nodes[j + 1] - nodes[j]);
}

double temperature_at(TemperatureProcess& process, TimeTag t) { return process.at(t); }

FiberChannel::FiberChannel(FiberChannelConfig config, TemperatureConfig temperature, std::uint64_t seed)
    : config_(config), temperature_(temperature, seed) {
  require(config_.nominal_delay.ticks() >= 0, "channel nominal delay must be non-negative");
}

Duration FiberChannel::delay_at(TimeTag t) {
  double excess_fs = 0.0;
  if (config_.drift_ramp != 0.0 && t.since_epoch() > config_.ramp_start)
    excess_fs = config_.drift_ramp * (t.since_epoch() - config_.ramp_start).to_seconds();
  if (config_.thermal_coefficient != 0.0)
    excess_fs += config_.thermal_coefficient * (temperature_.at(t) - temperature_.config().mean);
  return config_.nominal_delay + Duration::from_fs(excess_fs);
}

Duration channel_delay(FiberChannel& channel, TimeTag t) { return channel.delay_at(t); }

void DetectorConfig::validate() const {
  require(efficiency >= 0.0 && efficiency <= 1.0, "detector.efficiency must be in [0, 1]");
  require(jitter_sigma.ticks() >= 0, "detector.jitter_sigma must be non-negative");
  require(dead_time.ticks() >= 0, "detector.dead_time must be non-negative");
  require(dark_rate >= 0.0, "detector.dark_rate must be non-negative");
  require(gate_rate > 0.0, "detector.gate_rate must be positive");
  require(gate_width.ticks() > 0, "detector.gate_width must be positive");
}

void TcspcModel::validate() const {
  require(bin_width.ticks() > 0, "tcspc.bin_width must be positive");
  require(drift_step >= 0.0, "tcspc.drift_step must be non-negative");
  require(reversion_samples >= 0.0, "tcspc.reversion_samples must be non-negative");
  require(sample_interval.ticks() > 0, "tcspc.sample_interval must be positive");
}

Tcspc::Tcspc(TcspcModel model, std::uint64_t seed) : model_(model), rng_(seed) {
  model_.validate();
  decay_ = model_.reversion_samples > 0.0 ? std::exp(-1.0 / model_.reversion_samples) : 1.0;
}

void Tcspc::step() {
  if (model_.drift_step == 0.0) return;
  state_ = decay_ * state_ + model_.drift_step * rng_.normal();
}

Duration Tcspc::apply(Duration delta) const {
  return quantize_fs(static_cast<long double>(delta.ticks()) + static_cast<long double>(state_), model_.bin_width);
}

Duration tcspc_measure(Tcspc& tcspc, Duration delta) { return tcspc.measure(delta); }

void PlantConfig::validate() const {
  source.validate();
  temperature_a.validate();
  temperature_b.validate();
  detector_a.validate();
  detector_b.validate();
  dip.validate();
  tcspc.validate();
  require(mdl_resolution.ticks() > 0, "mdl.resolution must be positive");
  require(mdl_lo <= mdl_hi, "mdl.range is empty");
  require(mdl_lo.ticks() >= 0, "mdl.range must start at or above zero");
  require(channel_a.nominal_delay.ticks() >= 0 && channel_b.nominal_delay.ticks() >= 0,
          "channel nominal delays must be non-negative");
}

Plant::Plant(PlantConfig config, std::uint64_t seed)
    : config_(std::move(config)),
      channel_a_(config_.channel_a, config_.temperature_a, Rng::derive_seed(seed, "temperature.a")),
      channel_b_(config_.channel_b, config_.temperature_b, Rng::derive_seed(seed, "temperature.b")),
      odl_(DelayLine::fixed(config_.odl)),
      mdl_(DelayLine::motorized(config_.mdl_lo, config_.mdl_hi, config_.mdl_resolution, config_.mdl_setting)),
      tcspc_(config_.tcspc, Rng::derive_seed(seed, "tcspc")),
      pair_time_(Rng::derive_seed(seed, "pairs.time")),
      pair_route_(Rng::derive_seed(seed, "pairs.route")),
      hom_survive_(Rng::derive_seed(seed, "hom.survive")) {
  config_.validate();
  pulses_ = detail::SlotGrid(to_hz(config_.source.rep_rate, "source.rep_rate"));

  auto make_tap = [&](const DetectorConfig& dc, const char* tag, double singles_rate, Duration nominal_path) {
    TapDetector d{dc,
                  nominal_path,
                  detail::SlotGrid(to_hz(dc.gate_rate, "detector.gate_rate")),
                  Rng(Rng::derive_seed(seed, std::string("tap.") + tag + ".detect")),
                  Rng(Rng::derive_seed(seed, std::string("tap.") + tag + ".jitter")),
                  Rng(Rng::derive_seed(seed, std::string("tap.") + tag + ".singles")),
                  Rng(Rng::derive_seed(seed, std::string("tap.") + tag + ".dark")),
                  Rng(Rng::derive_seed(seed, std::string("tap.") + tag + ".dark_phase")),
                  0.0,
                  0,
                  0,
                  std::nullopt};
    const double unpaired = std::max(singles_rate - config_.source.pair_rate, 0.0);
    d.singles_rate = unpaired * (1.0 - config_.source.hom_fraction) * dc.efficiency;
    if (d.singles_rate > 0.0) d.next_single = Duration::from_seconds(d.singles.exponential(d.singles_rate)).ticks();
    if (dc.dark_rate > 0.0) d.next_dark = Duration::from_seconds(d.dark.exponential(dc.dark_rate)).ticks();
    return d;
  };
  const Duration nominal_a =
      config_.channel_a.nominal_delay + config_.odl + config_.channel_a.tap_leg + config_.clock_offset;
  const Duration nominal_b = config_.channel_b.nominal_delay + config_.mdl_setting + config_.channel_b.tap_leg;
  tap_a_ = make_tap(config_.detector_a, "a", config_.source.singles_rate_a, nominal_a);
  tap_b_ = make_tap(config_.detector_b, "b", config_.source.singles_rate_b, nominal_b);

  const double total = config_.source.pair_rate / config_.source.hom_fraction;
  if (total > 0.0) next_pair_ = Duration::from_seconds(pair_time_.exponential(total)).ticks();
}

TimeTag Plant::gate_slot(TapDetector& d, Ticks t) {
  return TimeTag::from_ticks(d.gates.nearest(t - d.gate_delay.ticks()) + d.gate_delay.ticks());
}

bool Plant::in_gate(TapDetector& d, TimeTag t) {
  const Duration off = t - gate_slot(d, t.ticks());
  const Ticks half = d.config.gate_width.ticks() / 2;
  return off.ticks() >= -half && off.ticks() <= half;
}

Duration Plant::path_a(Duration channel) const {
  return channel + odl_.setting() + config_.channel_a.tap_leg + config_.clock_offset;
}

Duration Plant::path_b(Duration channel) const { return channel + mdl_.setting() + config_.channel_b.tap_leg; }

Duration Plant::imbalance_at(TimeTag t) { return imbalance_at(t, mdl_.setting()); }

Duration Plant::imbalance_at(TimeTag t, Duration mdl_setting) {
  return (channel_a_.delay_at(t) + odl_.setting()) - (channel_b_.delay_at(t) + mdl_setting);
}

Duration Plant::balance_setting_at(TimeTag t) { return channel_a_.delay_at(t) + odl_.setting() - channel_b_.delay_at(t); }

std::size_t Plant::generate_background(TapDetector& d, Duration path, TimeTag end, std::vector<TimeTag>& events) {
  if (d.singles_rate > 0.0) {
    while (d.next_single < end.ticks()) {
      const TimeTag emission = pulse_slot(d.next_single);
      TimeTag arrival = emission + path;
      arrival += Duration::from_fs(d.jitter.normal() * d.config.jitter_sigma.to_fs());
      if (in_gate(d, arrival)) events.push_back(arrival);
      d.next_single += Duration::from_seconds(d.singles.exponential(d.singles_rate)).ticks();
    }
  }
  const std::size_t dark_begin = events.size();
  if (d.config.dark_rate > 0.0) {
    const double width = d.config.gate_width.to_fs();
    while (d.next_dark < end.ticks()) {
      const TimeTag gate = gate_slot(d, d.next_dark);
      events.push_back(gate + Duration::from_fs((d.dark_phase.uniform() - 0.5) * width));
      d.next_dark += Duration::from_seconds(d.dark.exponential(d.config.dark_rate)).ticks();
    }
  }
  return dark_begin;
}

void Plant::finish_detector(TapDetector& d, std::vector<TimeTag>& events, std::size_t singles_begin,
                            std::size_t dark_begin, TimestampSeries& out) {
  // Each source is in emission order up to jitter, so insertion sort per run
  // is close to linear; then merge the three runs.
  const auto sort_run = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo + 1; i < hi; ++i) {
      const TimeTag v = events[i];
      std::size_t j = i;
      while (j > lo && v < events[j - 1]) {
        events[j] = events[j - 1];
        --j;
      }
      events[j] = v;
    }
  };
  sort_run(0, singles_begin);
  sort_run(singles_begin, dark_begin);
  sort_run(dark_begin, events.size());
  const auto first = events.begin();
  std::inplace_merge(first, first + static_cast<std::ptrdiff_t>(singles_begin),
                     first + static_cast<std::ptrdiff_t>(dark_begin));
  std::inplace_merge(first, first + static_cast<std::ptrdiff_t>(dark_begin), events.end());
  out.tags.reserve(events.size());
  for (const TimeTag t : events) {
    if (d.last_tag && t - *d.last_tag < d.config.dead_time) continue;
    out.tags.push_back(t);
    d.last_tag = t;
  }
}

EventBatch Plant::advance(Duration dt) {
  if (dt.ticks() <= 0) throw UsageError("advance: dt must be positive");
  EventBatch batch;
  batch.start = now_;
  batch.end = now_ + dt;
  const Ticks end = batch.end.ticks();

  const auto& src = config_.source;
  const photonics::HomDipModel& dip = config_.dip;
  const double total_rate = src.pair_rate / src.hom_fraction;

  // Ensemble expectation of HOM coincidences over the batch (midpoint rule).
  {
    constexpr int kSub = 64;
    const Duration h = dt / kSub;
    double sum = 0.0;
    for (int i = 0; i < kSub; ++i) {
      const TimeTag t = now_ + h * i + h / 2;
      sum += photonics::dip_envelope(dip, imbalance_at(t));
    }
    batch.hom_expected = src.pair_rate * dt.to_seconds() * sum / kSub;
  }

  std::vector<TimeTag> events_a;
  std::vector<TimeTag> events_b;
  std::uint64_t hom = 0;
  if (total_rate > 0.0) {
    const double jitter_a = tap_a_.config.jitter_sigma.to_fs();
    const double jitter_b = tap_b_.config.jitter_sigma.to_fs();
    while (next_pair_ < end) {
      const TimeTag emission = pulse_slot(next_pair_);
      const Duration delay_a = channel_a_.delay_at(emission);
      const Duration delay_b = channel_b_.delay_at(emission);
      if (pair_route_.uniform() < src.hom_fraction) {
        const Duration imbalance = (delay_a + odl_.setting()) - (delay_b + mdl_.setting());
        const double p = photonics::dip_envelope(dip, imbalance);
        if (hom_survive_.uniform() < p) ++hom;
      } else {
        const bool det_a = tap_a_.detect.uniform() < tap_a_.config.efficiency;
        const bool det_b = tap_b_.detect.uniform() < tap_b_.config.efficiency;
        if (tap_output_ && det_a) {
          const TimeTag arrival =
              emission + path_a(delay_a) + Duration::from_fs(tap_a_.jitter.normal() * jitter_a);
          if (in_gate(tap_a_, arrival)) events_a.push_back(arrival);
        }
        if (tap_output_ && det_b) {
          const TimeTag arrival =
              emission + path_b(delay_b) + Duration::from_fs(tap_b_.jitter.normal() * jitter_b);
          if (in_gate(tap_b_, arrival)) events_b.push_back(arrival);
        }
      }
      next_pair_ += Duration::from_seconds(pair_time_.exponential(total_rate)).ticks();
    }
  }
  batch.hom_counts = config_.counting_noise ? static_cast<double>(hom) : batch.hom_expected;

  if (tap_output_) {
    // Unpaired photons only build the flat accidental floor; the path delay
    // at the batch start is accurate enough for them.
    const std::size_t singles_a = events_a.size();
    const std::size_t singles_b = events_b.size();
    const std::size_t dark_a = generate_background(tap_a_, path_a(channel_a_.delay_at(batch.start)), batch.end, events_a);
    const std::size_t dark_b = generate_background(tap_b_, path_b(channel_b_.delay_at(batch.start)), batch.end, events_b);
    finish_detector(tap_a_, events_a, singles_a, dark_a, batch.tags_a);
    finish_detector(tap_b_, events_b, singles_b, dark_b, batch.tags_b);
  } else {
    // Memoryless streams: restart the background clocks at the batch end.
    for (TapDetector* d : {&tap_a_, &tap_b_}) {
      if (d->singles_rate > 0.0 && d->next_single < end)
        d->next_single = end + Duration::from_seconds(d->singles.exponential(d->singles_rate)).ticks();
      if (d->config.dark_rate > 0.0 && d->next_dark < end)
        d->next_dark = end + Duration::from_seconds(d->dark.exponential(d->config.dark_rate)).ticks();
    }
  }
  now_ = batch.end;
  return batch;
}

}  // namespace homsync::plant
