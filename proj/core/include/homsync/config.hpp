#pragma once

// Run configuration: a line-oriented `key = value` file with `[section]`
// headers, parsed against a fixed schema. Every parameter has a default and
// every unknown key is an error.
//
//   scenario = locked_4km
//   seed = 7
//   duration = 4000 s
//
//   [mdl]
//   range = [0, 560 ps]      # list elements without a unit take the last one
//
// Durations carry a unit (fs, ps, ns, us, ms, s); the top-level `duration`
// also accepts a bare number of seconds.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "homsync/control.hpp"
#include "homsync/error.hpp"
#include "homsync/photonics.hpp"
#include "homsync/plant.hpp"
#include "homsync/sync.hpp"
#include "homsync/timebase.hpp"

namespace homsync::config {

enum class Scenario { locked_4km, locked_0km, free_running, tcspc_selftest, dip_scan };

std::string_view to_string(Scenario scenario);

struct LinkConfig {
  bool installed = true;  // a 2 km spool in each path
  Duration spool_delay = plant::kSpoolDelay;
  double spool_thermal_coefficient = plant::kSpoolThermalCoefficient;  // fs / K
  Duration tap_mismatch;  // extra clock-B tap leg, present only with the spools
};

/// Everything in a channel except the spool.
struct ChannelParams {
  Duration nominal_delay;
  double thermal_coefficient = 500.0;  // fs / K, pigtails and couplers
  double drift_ramp = 0.0;             // fs / s
  Duration tap_leg;
  Duration ramp_start;
};

/// Periods are wall-clock seconds; the plant sees them divided by the time
/// compression factor.
struct TemperatureParams {
  double mean = 296.15;
  double diurnal_amplitude = 1.0;
  double diurnal_period = 86400.0;
  double ou_sigma = 2.0;
  double ou_tau = 1.6e6;
};

struct RunConfig {
  Scenario scenario = Scenario::locked_4km;
  std::uint64_t seed = 1;
  Duration duration = Duration::seconds(4000);
  std::string output_dir = "runs/run";
  double time_compression = 8.0;

  plant::SourceConfig source;
  LinkConfig link;
  ChannelParams channel_a{Duration::ps(150), 500.0, 0.0, Duration{}, Duration{}};
  ChannelParams channel_b{Duration{}, 500.0, 0.0, Duration{}, Duration{}};
  TemperatureParams temperature_a;
  TemperatureParams temperature_b{296.15, 0.5, 86400.0, 2.0, 1.6e6};
  Duration odl = Duration::ps(100);
  Duration mdl_lo;
  Duration mdl_hi = Duration::ps(560);
  Duration mdl_resolution = Duration::fs(1);
  Duration mdl_setting = Duration::ps(250);
  plant::DetectorConfig detector;
  double dip_visibility = 0.68;
  Duration dip_coherence_time = Duration::ps(3);
  plant::TcspcModel tcspc;
  Duration clock_offset = Duration::from_ps(868.1);
  bool counting_noise = true;

  control::ControllerConfig controller;
  sync::CorrelationConfig correlation;

  std::vector<std::size_t> m_values;  // empty: powers of two up to N / 4
  std::vector<Duration> headline_times{Duration::seconds(1000), Duration::seconds(4000), Duration::seconds(16000)};
  Duration tag_dump;  // raw tap tags from the first stretch of the run; 0 = off

  /// The plant as simulated: spools, time compression and tap mismatch applied.
  plant::PlantConfig plant_config() const;
  /// Scenario defaults for a fresh config (link, duration).
  static RunConfig defaults(Scenario scenario);
};

struct Diagnostic {
  std::size_t line = 0;  // 0 when not tied to a line
  std::string key;
  std::string message;
};

std::string format(const Diagnostic& d, std::string_view source);

/// Carries every problem found in one pass.
class ConfigParseError : public ConfigError {
 public:
  ConfigParseError(std::string source, std::vector<Diagnostic> diagnostics);
  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<Diagnostic> diagnostics_;
};

/// Parses and validates. `source` names the input in diagnostics; the default
/// output directory is `runs/<stem>`. Throws ConfigParseError.
RunConfig parse(std::string_view text, std::string_view source = "config");
RunConfig load(const std::filesystem::path& path);

/// Cross-field checks that guarantee the run cannot fail on configuration
/// grounds. Empty when valid.
std::vector<Diagnostic> check(const RunConfig& cfg);

/// Every resolved parameter as `key = value`, in schema order, re-parseable.
std::vector<std::pair<std::string, std::string>> resolved(const RunConfig& cfg);
std::string echo(const RunConfig& cfg);

/// Names of all recognised keys, in schema order.
std::vector<std::string> keys();

}  // namespace homsync::config
