#include "homsync/control.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <utility>

#include "homsync/error.hpp"

namespace homsync::control {

void ControllerConfig::validate() const {
  if (dither_depth.ticks() <= 0 || step.ticks() <= 0 || dwell.ticks() <= 0)
    throw UsageError("controller: dither_depth, step and dwell must be positive");
  if (!(hold_threshold >= 0.0)) throw UsageError("controller: hold_threshold must be non-negative");
  if (scan_step.ticks() <= 0) throw UsageError("controller: scan_step must be positive");
  if (scan_lo > scan_hi) throw UsageError("controller: scan range is empty");
}

std::string_view to_string(Action action) {
  switch (action) {
    case Action::increase:
      return "increase";
    case Action::decrease:
      return "decrease";
    case Action::hold:
      return "hold";
  }
  return "hold";
}

Action decide(double rc_minus, double rc_plus, double hold_threshold) {
  if (std::abs(rc_minus - rc_plus) <= hold_threshold) return Action::hold;
  return rc_minus > rc_plus ? Action::decrease : Action::increase;
}

namespace {

double measure_rate(plant::Plant& plant, Duration dwell, const BatchSink& sink) {
  const plant::EventBatch batch = plant.advance(dwell);
  if (sink) sink(batch);
  return batch.hom_counts / dwell.to_seconds();
}

}  // namespace

DipScan scan_dip(plant::Plant& plant, const ControllerConfig& cfg, const BatchSink& sink) {
  cfg.validate();
  const plant::DelayLine& mdl = plant.mdl();
  if (cfg.scan_lo < mdl.lo() || cfg.scan_hi > mdl.hi())
    throw UsageError("scan range lies outside the MDL range");
  if (cfg.scan_step < mdl.resolution()) throw UsageError("scan step is finer than the MDL resolution");

  DipScan scan;
  for (Duration s = cfg.scan_lo; s <= cfg.scan_hi; s += cfg.scan_step) {
    const Duration actual = plant.set_mdl(s);
    scan.points.push_back({actual, measure_rate(plant, cfg.dwell, sink)});
  }
  const auto min_it = std::min_element(scan.points.begin(), scan.points.end(),
                                       [](const ScanPoint& a, const ScanPoint& b) { return a.rate < b.rate; });
  const auto max_it = std::max_element(scan.points.begin(), scan.points.end(),
                                       [](const ScanPoint& a, const ScanPoint& b) { return a.rate < b.rate; });
  if (max_it->rate <= 0.0 || (max_it->rate - min_it->rate) / max_it->rate < 0.1) {
    std::ostringstream msg;
    msg << "no HOM dip found between " << cfg.scan_lo.to_ps() << " ps and " << cfg.scan_hi.to_ps() << " ps";
    throw NoDipError(msg.str());
  }
  scan.minimum_setting = min_it->mdl_setting;
  plant.set_mdl(scan.minimum_setting);
  return scan;
}

LockEntry dither_cycle(plant::Plant& plant, const ControllerConfig& cfg, LockState& state, const BatchSink& sink) {
  const Duration half = cfg.dither_depth / 2;
  const plant::DelayLine& mdl = plant.mdl();
  if (state.center + half > mdl.hi() || state.center - half < mdl.lo())
    throw RelockRequired("dither would leave the MDL range");

  LockEntry entry;
  // Relative delay = signal - idler, so the "minus" side is the longer MDL.
  plant.set_mdl(state.center + half);
  entry.rc_minus = measure_rate(plant, cfg.dwell, sink);
  plant.set_mdl(state.center - half);
  entry.rc_plus = measure_rate(plant, cfg.dwell, sink);

  entry.action = decide(entry.rc_minus, entry.rc_plus, cfg.hold_threshold);
  Duration next = state.center;
  if (entry.action == Action::decrease) next -= cfg.step;
  if (entry.action == Action::increase) next += cfg.step;
  if (next + half > mdl.hi() || next - half < mdl.lo()) throw RelockRequired("MDL range exhausted");
  state.center = next;

  entry.time = plant.now();
  entry.mdl_setting = state.center;
  entry.residual = plant.imbalance_at(entry.time, state.center);
  return entry;
}

namespace {

ControllerConfig recentred(const ControllerConfig& cfg, Duration center, const plant::DelayLine& mdl) {
  ControllerConfig out = cfg;
  const Duration half_width = (cfg.scan_hi - cfg.scan_lo) / 2;
  Duration lo = center - half_width;
  Duration hi = center + half_width;
  if (lo < mdl.lo()) {
    hi += mdl.lo() - lo;
    lo = mdl.lo();
  }
  if (hi > mdl.hi()) {
    lo -= hi - mdl.hi();
    hi = mdl.hi();
  }
  out.scan_lo = std::max(lo, mdl.lo());
  out.scan_hi = hi;
  return out;
}

}  // namespace

LockRecord run_lock(plant::Plant& plant, const ControllerConfig& cfg, Duration duration, const BatchSink& sink) {
  cfg.validate();
  if (duration < cfg.dwell) throw UsageError("run_lock: duration shorter than one dwell");
  const TimeTag stop = plant.now() + duration;
  DipScan scan = scan_dip(plant, cfg, sink);
  if (plant.now() >= stop) {
    LockRecord record;
    record.scans.push_back(std::move(scan));
    return record;
  }
  return lock_from(plant, cfg, std::move(scan), stop - plant.now(), sink);
}

LockRecord lock_from(plant::Plant& plant, const ControllerConfig& cfg, DipScan scan, Duration duration,
                     const BatchSink& sink) {
  cfg.validate();
  const TimeTag stop = plant.now() + duration;
  LockRecord record;
  LockState state{scan.minimum_setting};
  record.scans.push_back(std::move(scan));

  const Duration cycle = cfg.dwell * 2;
  while (plant.now() + cycle <= stop) {
    try {
      record.entries.push_back(dither_cycle(plant, cfg, state, sink));
    } catch (const RelockRequired&) {
      ++record.rescans;
      record.scans.push_back(scan_dip(plant, recentred(cfg, state.center, plant.mdl()), sink));
      state.center = record.scans.back().minimum_setting;
    }
  }
  return record;
}

void write_lock_csv(std::ostream& os, const LockRecord& record) {
  os << "time_fs,mdl_fs,rc_minus,rc_plus,action,residual_fs\n" << std::setprecision(12);
  for (const LockEntry& e : record.entries) {
    os << homsync::to_string(e.time.ticks()) << ',' << homsync::to_string(e.mdl_setting.ticks()) << ','
       << e.rc_minus << ',' << e.rc_plus << ',' << to_string(e.action) << ','
       << homsync::to_string(e.residual.ticks()) << '\n';
  }
}

void write_scan_csv(std::ostream& os, const DipScan& scan) {
  os << "mdl_fs,rate_per_s\n" << std::setprecision(12);
  for (const ScanPoint& p : scan.points) os << homsync::to_string(p.mdl_setting.ticks()) << ',' << p.rate << '\n';
}

}  // namespace homsync::control
