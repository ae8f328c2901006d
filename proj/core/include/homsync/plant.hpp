#pragma once

// Event-level model of the two-path fiber setup: pulsed pair source, two
// drifting fiber channels, fixed and motorized delay lines, gated tap
// detectors (D3, D4) and the TCSPC instrument.
//
// Only detected events are simulated. The pulse grid enters through snapping
// every emission to the nearest pump pulse.

#include <cstdint>
#include <optional>
#include <vector>

#include "homsync/photonics.hpp"
#include "homsync/rng.hpp"
#include "homsync/timebase.hpp"

namespace homsync::plant {

struct SourceConfig {
  double rep_rate = 75e6;           // Hz
  double pair_rate = 3000.0;        // HOM coincidences / s far from the dip
  double singles_rate_a = 104000.0; // counts / s
  double singles_rate_b = 140000.0;
  double hom_fraction = 0.9;        // share of pairs returned to the HOM arm

  void validate() const;
};

enum class DelayLineKind { fixed, motorized };

class DelayLine {
 public:
  static DelayLine fixed(Duration setting);
  static DelayLine motorized(Duration lo, Duration hi, Duration resolution, Duration setting);

  DelayLineKind kind() const { return kind_; }
  Duration lo() const { return lo_; }
  Duration hi() const { return hi_; }
  Duration resolution() const { return resolution_; }
  Duration setting() const { return setting_; }

  /// Quantizes to the resolution and clamps into range; returns the actual
  /// setting. Throws UsageError on a fixed line.
  Duration set(Duration requested);
  Duration set_fs(long double requested_fs);

 private:
  DelayLine() = default;
  DelayLineKind kind_ = DelayLineKind::fixed;
  Duration lo_;
  Duration hi_;
  Duration resolution_ = Duration::fs(1);
  Duration setting_;
};

struct TemperatureConfig {
  double mean = 296.15;                // K
  double diurnal_amplitude = 1.0;      // K
  double diurnal_period = 10800.0;     // s (already time-compressed)
  double ou_sigma = 2.0;               // K, stationary standard deviation
  double ou_tau = 200000.0;            // s

  void validate() const;
};

/// mean + diurnal sinusoid + Ornstein-Uhlenbeck wander. With OU noise on, the
/// sum is tabulated on a grid (step min(1 s, tau / 20)) and linearly
/// interpolated between nodes. The grid is generated in chunks, each from its
/// own substream starting at a stored OU checkpoint, so any query order gives
/// the same answer for the same seed and memory stays small. Without OU noise
/// the sinusoid is evaluated exactly.
class TemperatureProcess {
 public:
  TemperatureProcess(TemperatureConfig config, std::uint64_t seed);

  double at(TimeTag t);
  const TemperatureConfig& config() const { return config_; }

 private:
  static constexpr std::size_t kChunk = 4096;

  struct Chunk {
    std::size_t index = static_cast<std::size_t>(-1);
    std::vector<double> nodes;  // kChunk + 1, the last shared with the next chunk
  };

  const std::vector<double>& chunk(std::size_t k);
  double diurnal(std::size_t node) const;

  TemperatureConfig config_;
  std::uint64_t seed_;
  Duration step_;
  double inv_step_ = 1.0;
  double decay_ = 0.0;
  double innovation_ = 0.0;
  std::vector<double> checkpoints_;  // OU state at the first node of each chunk
  Chunk cache_[2];
  std::size_t victim_ = 0;
};

double temperature_at(TemperatureProcess& process, TimeTag t);

struct FiberChannelConfig {
  Duration nominal_delay;
  double thermal_coefficient = 0.0;  // fs / K
  double drift_ramp = 0.0;           // fs / s, deterministic ramp for tests
  Duration tap_leg;                  // coupler 10 % port to tap detector
  Duration ramp_start;               // the ramp is zero before this time
};

class FiberChannel {
 public:
  FiberChannel(FiberChannelConfig config, TemperatureConfig temperature, std::uint64_t seed);

  Duration delay_at(TimeTag t);
  const FiberChannelConfig& config() const { return config_; }
  TemperatureProcess& temperature() { return temperature_; }

 private:
  FiberChannelConfig config_;
  TemperatureProcess temperature_;
};

/// nominal + coefficient * (T(t) - mean) + ramp * max(t - ramp_start, 0),
/// rounded to 1 fs.
Duration channel_delay(FiberChannel& channel, TimeTag t);

struct DetectorConfig {
  double efficiency = 0.20;
  Duration jitter_sigma = Duration::ps(120);
  Duration dead_time = Duration::us(10);
  double dark_rate = 1000.0;  // counts / s inside gates
  double gate_rate = 75e6;    // Hz
  Duration gate_width = Duration::from_ps(2500.0);

  void validate() const;
};

struct TcspcModel {
  Duration bin_width = Duration::ps(1);
  double drift_step = 170.0;       // fs per sample
  double reversion_samples = 200;  // mean-reversion time of the walk; 0 = free walk
  Duration sample_interval = Duration::seconds(1);

  void validate() const;
};

/// Instrument systematic: a mean-reverting random walk in femtoseconds,
/// advanced one step per sample.
class Tcspc {
 public:
  Tcspc(TcspcModel model, std::uint64_t seed);

  void step();
  double systematic_fs() const { return state_; }
  /// delta + current systematic, quantized to the bin width. Does not step.
  Duration apply(Duration delta) const;
  Duration measure(Duration delta) {
    step();
    return apply(delta);
  }
  const TcspcModel& model() const { return model_; }

 private:
  TcspcModel model_;
  Rng rng_;
  double decay_ = 1.0;
  double state_ = 0.0;
};

Duration tcspc_measure(Tcspc& tcspc, Duration delta);

/// One-way group delay of a 2 km spool of standard single-mode fiber.
inline constexpr Duration kSpoolDelay = Duration::fs(9'787'000'000);
/// Delay temperature coefficient of one spool.
inline constexpr double kSpoolThermalCoefficient = 10'000.0;  // fs / K

/// Defaults describe the 4 km configuration: one spool per path.
struct PlantConfig {
  SourceConfig source;
  FiberChannelConfig channel_a{kSpoolDelay + Duration::ps(150), kSpoolThermalCoefficient, 0.0, Duration{}, Duration{}};
  FiberChannelConfig channel_b{kSpoolDelay, kSpoolThermalCoefficient, 0.0, Duration{}, Duration{}};
  TemperatureConfig temperature_a;
  TemperatureConfig temperature_b{296.15, 0.5, 10800.0, 2.0, 200000.0};
  Duration odl = Duration::ps(100);
  Duration mdl_lo = Duration{};
  Duration mdl_hi = Duration::ps(560);
  Duration mdl_resolution = Duration::fs(1);
  Duration mdl_setting = Duration::ps(250);
  DetectorConfig detector_a;  // D3, clock A
  DetectorConfig detector_b;  // D4, clock B
  photonics::HomDipModel dip;
  TcspcModel tcspc;
  Duration clock_offset = Duration::from_ps(868.1);  // clock A reads ahead of B
  bool counting_noise = true;

  void validate() const;
};

struct EventBatch {
  TimeTag start;
  TimeTag end;
  double hom_counts = 0.0;    // measured (Poisson) or expected, per counting_noise
  double hom_expected = 0.0;  // ensemble expectation over the batch
  TimestampSeries tags_a{ClockId::A, {}};
  TimestampSeries tags_b{ClockId::B, {}};
};

namespace detail {

/// Grid of `hz` slots per second from the epoch; slot k sits at
/// k * 1e15 / hz fs rounded half up. Caches the current second so that
/// time-ordered queries avoid 128-bit division.
class SlotGrid {
 public:
  explicit SlotGrid(Ticks hz = 1);
  Ticks nearest(Ticks t);
  Ticks hz() const { return hz_; }

 private:
  Ticks hz_;
  std::uint64_t num_ = 0;  // hz / gcd(hz, 1e15)
  std::uint64_t den_ = 0;  // 1e15 / gcd(hz, 1e15)
  bool fast_ = false;
  Ticks base_ = 0;
  bool have_base_ = false;
};

}  // namespace detail

class Plant {
 public:
  Plant(PlantConfig config, std::uint64_t seed);

  EventBatch advance(Duration dt);

  Duration set_mdl(Duration requested) { return mdl_.set(requested); }
  Duration set_mdl_fs(long double requested_fs) { return mdl_.set_fs(requested_fs); }
  void set_odl(Duration requested) { odl_.set(requested); }

  const DelayLine& mdl() const { return mdl_; }
  const DelayLine& odl() const { return odl_; }
  TimeTag now() const { return now_; }
  const PlantConfig& config() const { return config_; }

  /// Simulation truth: (signal path incl. ODL) - (idler path incl. MDL) at t,
  /// for the current MDL setting or an explicit one.
  Duration imbalance_at(TimeTag t);
  Duration imbalance_at(TimeTag t, Duration mdl_setting);
  /// MDL setting that zeroes the imbalance at t.
  Duration balance_setting_at(TimeTag t);

  FiberChannel& channel_a() { return channel_a_; }
  FiberChannel& channel_b() { return channel_b_; }
  Tcspc& tcspc() { return tcspc_; }

  /// Tap detector output can be switched off when only HOM counts matter.
  void set_tap_output(bool enabled) { tap_output_ = enabled; }

 private:
  struct TapDetector {
    DetectorConfig config;
    Duration gate_delay;
    detail::SlotGrid gates;
    Rng detect;
    Rng jitter;
    Rng singles;
    Rng dark;
    Rng dark_phase;
    double singles_rate = 0.0;  // detected unpaired photons / s
    Ticks next_single = 0;
    Ticks next_dark = 0;
    std::optional<TimeTag> last_tag;
  };

  TimeTag pulse_slot(Ticks t) { return TimeTag::from_ticks(pulses_.nearest(t)); }
  TimeTag gate_slot(TapDetector& d, Ticks t);
  bool in_gate(TapDetector& d, TimeTag t);
  Duration path_a(Duration channel) const;
  Duration path_b(Duration channel) const;
  void finish_detector(TapDetector& d, std::vector<TimeTag>& events, std::size_t singles_begin, std::size_t dark_begin,
                       TimestampSeries& out);
  /// Appends unpaired singles, then dark counts; returns where the darks start.
  std::size_t generate_background(TapDetector& d, Duration path, TimeTag end, std::vector<TimeTag>& events);

  PlantConfig config_;
  FiberChannel channel_a_;
  FiberChannel channel_b_;
  DelayLine odl_;
  DelayLine mdl_;
  Tcspc tcspc_;
  TapDetector tap_a_;
  TapDetector tap_b_;
  Rng pair_time_;
  Rng pair_route_;
  Rng hom_survive_;
  detail::SlotGrid pulses_;
  Ticks next_pair_ = 0;
  TimeTag now_;
  bool tap_output_ = true;
};

}  // namespace homsync::plant
