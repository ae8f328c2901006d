#pragma once

// Dip-lock feedback: a full HOM scan to find the balance point, then a square
// dither of the MDL around it that nudges the set point by a fixed step.

#include <functional>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "homsync/plant.hpp"
#include "homsync/timebase.hpp"

namespace homsync::control {

struct ControllerConfig {
  Duration dither_depth = Duration::from_ps(0.4);
  Duration step = Duration::from_ps(0.2);
  double hold_threshold = 15.0;  // counts / s
  Duration dwell = Duration::seconds(1);
  Duration scan_lo = Duration::ps(200);
  Duration scan_hi = Duration::ps(300);
  Duration scan_step = Duration::from_ps(0.5);

  void validate() const;
};

struct ScanPoint {
  Duration mdl_setting;
  double rate = 0.0;  // coincidences / s
};

struct DipScan {
  std::vector<ScanPoint> points;
  Duration minimum_setting;
};

enum class Action { increase, decrease, hold };

std::string_view to_string(Action action);

/// The comparison rule. `rc_minus` is the rate on the short-relative-delay
/// side, i.e. with the MDL displaced by +depth/2; `rc_plus` the other side.
Action decide(double rc_minus, double rc_plus, double hold_threshold);

struct LockEntry {
  TimeTag time;          // end of the cycle
  Duration mdl_setting;  // set point after the update
  double rc_minus = 0.0;
  double rc_plus = 0.0;
  Action action = Action::hold;
  Duration residual;     // true imbalance at the set point, end of cycle
};

struct LockRecord {
  std::vector<LockEntry> entries;
  std::vector<DipScan> scans;
  std::size_t rescans = 0;
};

/// Receives every plant batch the controller produces, so tag streams can be
/// consumed while the loop runs.
using BatchSink = std::function<void(const plant::EventBatch&)>;

/// Steps the MDL over the scan range, one dwell per point. Leaves the MDL at
/// the minimum. Throws NoDipError when (max - min) / max < 0.1.
DipScan scan_dip(plant::Plant& plant, const ControllerConfig& cfg, const BatchSink& sink = {});

struct LockState {
  Duration center;  // tau_MDL,0
};

/// One dither cycle: two dwells at center +/- depth/2, then the set point
/// update. Throws RelockRequired when the dither would leave the MDL range.
LockEntry dither_cycle(plant::Plant& plant, const ControllerConfig& cfg, LockState& state, const BatchSink& sink = {});

/// Scan once, then dither until `duration` of simulated time has elapsed
/// since the call. A range exhaustion triggers a rescan centred on the last
/// set point.
LockRecord run_lock(plant::Plant& plant, const ControllerConfig& cfg, Duration duration, const BatchSink& sink = {});

/// Same loop starting from an existing scan (the plant MDL must already sit at
/// its minimum). The scan is stored as the first entry of `scans`.
LockRecord lock_from(plant::Plant& plant, const ControllerConfig& cfg, DipScan scan, Duration duration,
                     const BatchSink& sink = {});

// CSV `time_fs,mdl_fs,rc_minus,rc_plus,action,residual_fs`.
void write_lock_csv(std::ostream& os, const LockRecord& record);
// CSV `mdl_fs,rate_per_s`.
void write_scan_csv(std::ostream& os, const DipScan& scan);

}  // namespace homsync::control
