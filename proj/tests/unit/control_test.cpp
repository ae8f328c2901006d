#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "homsync/control.hpp"
#include "homsync/error.hpp"

using namespace homsync;
using namespace homsync::literals;
using namespace homsync::control;

namespace {

plant::PlantConfig noiseless() {
  plant::PlantConfig c;
  c.temperature_a = {296.15, 0.0, 10800.0, 0.0, 200000.0};
  c.temperature_b = c.temperature_a;
  c.counting_noise = false;
  return c;
}

ControllerConfig narrow_scan() {
  ControllerConfig cfg;
  cfg.scan_lo = 240_ps;
  cfg.scan_hi = 260_ps;
  return cfg;
}

}  // namespace

TEST(Decide, Examples) {
  EXPECT_EQ(decide(500, 480, 15), Action::decrease);
  EXPECT_EQ(decide(480, 500, 15), Action::increase);
  EXPECT_EQ(decide(300, 310, 15), Action::hold);
  EXPECT_EQ(decide(300, 315, 15), Action::hold);
  EXPECT_EQ(decide(300, 300, 0), Action::hold);
  EXPECT_EQ(to_string(Action::decrease), "decrease");
}

TEST(Scan, NoiselessFindsBalance) {
  plant::Plant p(noiseless(), 1);
  const DipScan s = scan_dip(p, narrow_scan());
  EXPECT_EQ(s.points.size(), 41u);
  EXPECT_EQ(s.minimum_setting, 250_ps);
  EXPECT_EQ(p.mdl().setting(), 250_ps);
  EXPECT_EQ(p.now(), TimeTag::epoch() + 41_s);
  EXPECT_NEAR(s.points[20].rate, 960.0, 1e-6);
}

TEST(Scan, ZeroVisibilityIsNoDip) {
  plant::PlantConfig c = noiseless();
  c.dip.visibility = 0.0;
  plant::Plant p(c, 1);
  EXPECT_THROW(scan_dip(p, narrow_scan()), NoDipError);
}

TEST(Scan, RangeOutsideMdlIsUsageError) {
  plant::Plant p(noiseless(), 1);
  ControllerConfig cfg;
  cfg.scan_hi = 600_ps;
  EXPECT_THROW(scan_dip(p, cfg), UsageError);
}

TEST(Dither, HoldsWithoutDrift) {
  plant::Plant p(noiseless(), 2);
  const LockRecord r = run_lock(p, narrow_scan(), 141_s);
  ASSERT_EQ(r.entries.size(), 50u);
  for (const LockEntry& e : r.entries) {
    EXPECT_EQ(e.action, Action::hold);
    EXPECT_EQ(e.mdl_setting, 250_ps);
    EXPECT_EQ(e.residual, 0_fs);
    EXPECT_DOUBLE_EQ(e.rc_minus, e.rc_plus);
  }
}

TEST(Dither, StepsTowardBalance) {
  plant::Plant p(noiseless(), 3);
  ControllerConfig cfg = narrow_scan();
  LockState state{252_ps};
  const LockEntry e = dither_cycle(p, cfg, state);
  EXPECT_GT(e.rc_minus, e.rc_plus);
  EXPECT_EQ(e.action, Action::decrease);
  EXPECT_EQ(state.center, Duration::from_ps(251.8));
  EXPECT_EQ(e.residual, Duration::from_ps(-1.8));

  state.center = 248_ps;
  EXPECT_EQ(dither_cycle(p, cfg, state).action, Action::increase);
}

TEST(Dither, TracksSlowRamp) {
  plant::PlantConfig c = noiseless();
  c.channel_a.drift_ramp = 20.0;  // fs / s, a fifth of the maximum slew
  plant::Plant p(c, 4);
  const LockRecord r = run_lock(p, narrow_scan(), 441_s);
  ASSERT_EQ(r.entries.size(), 200u);
  EXPECT_EQ(r.rescans, 0u);
  for (std::size_t i = 10; i < r.entries.size(); ++i) EXPECT_LE(std::abs(r.entries[i].residual.to_ps()), 0.3) << i;
  EXPECT_GT(r.entries.back().mdl_setting, 255_ps);
}

TEST(Dither, EdgeOfRangeRequiresRelock) {
  plant::Plant p(noiseless(), 5);
  LockState state{p.mdl().hi()};
  EXPECT_THROW(dither_cycle(p, ControllerConfig{}, state), RelockRequired);
}

TEST(Lock, RescansWhenRangeIsExhausted) {
  plant::PlantConfig c = noiseless();
  c.mdl_hi = 260_ps;
  c.channel_a.drift_ramp = 50.0;  // balance walks past the top of the range
  plant::Plant p(c, 6);
  const LockRecord r = run_lock(p, narrow_scan(), 230_s);
  EXPECT_GE(r.rescans, 1u);
  EXPECT_EQ(r.scans.size(), r.rescans + 1);
}

TEST(Lock, CsvLayout) {
  plant::Plant p(noiseless(), 7);
  const LockRecord r = run_lock(p, narrow_scan(), 45_s);
  std::ostringstream lock;
  write_lock_csv(lock, r);
  EXPECT_EQ(lock.str().rfind("time_fs,mdl_fs,rc_minus,rc_plus,action,residual_fs\n", 0), 0u);
  EXPECT_NE(lock.str().find(",hold,0\n"), std::string::npos);
  std::ostringstream scan;
  write_scan_csv(scan, r.scans.front());
  EXPECT_NE(scan.str().find("250000,960\n"), std::string::npos);
}
