#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "homsync/config.hpp"

using namespace homsync;
using namespace homsync::literals;
using namespace homsync::config;

namespace {

std::vector<Diagnostic> diagnostics_of(std::string_view text) {
  try {
    parse(text, "t.cfg");
  } catch (const ConfigParseError& e) {
    return e.diagnostics();
  }
  return {};
}

}  // namespace

TEST(Config, EmptyInputReportsMissingScenario) {
  const auto d = diagnostics_of("");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].key, "scenario");
  EXPECT_NE(d[0].message.find("missing"), std::string::npos);
}

TEST(Config, MinimalLockedConfig) {
  const RunConfig c = parse("scenario = locked_4km\n", "demo.cfg");
  EXPECT_EQ(c.scenario, Scenario::locked_4km);
  EXPECT_EQ(c.output_dir, "runs/demo");
  EXPECT_EQ(c.duration, 4000_s);
  EXPECT_TRUE(c.link.installed);
}

TEST(Config, ScenarioDefaults) {
  EXPECT_FALSE(parse("scenario = locked_0km").link.installed);
  EXPECT_EQ(parse("scenario = tcspc_selftest").duration, 200000_s);
  // 41 points at 0.5 ps over [240, 260] ps, one second each.
  EXPECT_EQ(parse("scenario = dip_scan\ncontroller.scan_range = [240, 260 ps]").duration, 41_s);
}

TEST(Config, SectionsListsAndUnits) {
  const RunConfig c = parse(
      "scenario = locked_4km   # trailing comment\n"
      "duration = 8000\n"
      "[mdl]\n"
      "range = [0, 560 ps]\n"
      "setting = 250.5 ps\n"
      "[metrology]\n"
      "m_values = [1, 2, 8]\n"
      "headline_times = [1000, 4000 s]\n");
  EXPECT_EQ(c.duration, 8000_s);  // bare top-level duration is seconds
  EXPECT_EQ(c.mdl_lo, 0_fs);
  EXPECT_EQ(c.mdl_hi, 560_ps);
  EXPECT_EQ(c.mdl_setting, Duration::fs(250500));
  EXPECT_EQ(c.m_values, (std::vector<std::size_t>{1, 2, 8}));
  EXPECT_EQ(c.headline_times, (std::vector<Duration>{1000_s, 4000_s}));
  EXPECT_NE(echo(c).find("mdl.range = [0 fs, 560 ps]"), std::string::npos) << echo(c);
}

TEST(Config, OutOfRangeValueIsReportedWithLine) {
  const auto d = diagnostics_of("scenario = locked_4km\n[detector]\nefficiency = 1.5\n");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].line, 3u);
  EXPECT_EQ(d[0].key, "detector.efficiency");
  EXPECT_EQ(format(d[0], "t.cfg"), "t.cfg:3: detector.efficiency: must be in [0, 1]");
}

TEST(Config, CollectsEveryProblemInLineOrder) {
  const auto d = diagnostics_of(
      "scenario = locked_4km\n"
      "bogus = 1\n"
      "seed = 1\n"
      "seed = 2\n"
      "[controller]\n"
      "dwell = 3\n"
      "this line is junk\n");
  ASSERT_EQ(d.size(), 4u);
  EXPECT_EQ(d[0].line, 2u);
  EXPECT_EQ(d[0].message, "unknown key");
  EXPECT_EQ(d[1].line, 4u);
  EXPECT_NE(d[1].message.find("duplicate"), std::string::npos);
  EXPECT_EQ(d[2].line, 6u);
  EXPECT_NE(d[2].message.find("needs a unit"), std::string::npos);
  EXPECT_EQ(d[3].line, 7u);
}

TEST(Config, CrossFieldChecks) {
  auto d = diagnostics_of("scenario = locked_4km\nmdl.setting = 600 ps\n");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].key, "mdl.setting");
  EXPECT_EQ(d[0].line, 2u);

  d = diagnostics_of("scenario = locked_4km\nduration = 500 s\n");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].key, "duration");

  d = diagnostics_of("scenario = dip_scan\nduration = 30 s\ncontroller.scan_range = [240, 260 ps]\n");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_NE(d[0].message.find("41 s"), std::string::npos);

  EXPECT_EQ(diagnostics_of("scenario = sideways\n")[0].message, "unknown scenario 'sideways'");
  EXPECT_FALSE(diagnostics_of("scenario = locked_4km\nmdl.range = [300, 200 ps]\n").empty());
}

TEST(Config, EchoReparsesToTheSameConfig) {
  for (const char* text : {"scenario = locked_4km\nlink.tap_mismatch = 59.4 ps\nseed = 99\n",
                           "scenario = dip_scan\n[controller]\nscan_range = [240, 260 ps]\nscan_step = 0.5 ps\n",
                           "scenario = tcspc_selftest\ntcspc.drift_step = 123.25\n",
                           "scenario = free_running\nduration = 16000 s\nmetrology.m_values = [1, 3]\n"}) {
    const RunConfig a = parse(text, "x.cfg");
    const RunConfig b = parse(echo(a), "x.cfg");
    EXPECT_EQ(echo(a), echo(b));
    EXPECT_EQ(resolved(a).size(), keys().size());
  }
}

TEST(Config, PlantDerivation) {
  RunConfig c = parse("scenario = locked_4km\nlink.tap_mismatch = 59.4 ps\n");
  plant::PlantConfig p = c.plant_config();
  EXPECT_EQ(p.channel_a.nominal_delay, plant::kSpoolDelay + 150_ps);
  EXPECT_EQ(p.channel_b.nominal_delay, plant::kSpoolDelay);
  EXPECT_DOUBLE_EQ(p.channel_a.thermal_coefficient, 10500.0);
  EXPECT_EQ(p.channel_b.tap_leg, Duration::from_ps(59.4));
  EXPECT_DOUBLE_EQ(p.temperature_a.diurnal_period, 10800.0);
  EXPECT_DOUBLE_EQ(p.temperature_a.ou_tau, 200000.0);
  EXPECT_DOUBLE_EQ(p.dip.baseline_rate, p.source.pair_rate);

  c = parse("scenario = locked_0km\nlink.tap_mismatch = 59.4 ps\n");
  p = c.plant_config();
  EXPECT_EQ(p.channel_a.nominal_delay, 150_ps);
  EXPECT_EQ(p.channel_b.tap_leg, 0_fs);  // no spools, no mismatch
  EXPECT_DOUBLE_EQ(p.channel_b.thermal_coefficient, 500.0);
}

TEST(Config, ShippedConfigsValidate) {
  const std::filesystem::path dir = HOMSYNC_CONFIG_DIR;
  int n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() != ".cfg") continue;
    EXPECT_NO_THROW(load(e.path())) << e.path();
    ++n;
  }
  EXPECT_GE(n, 5);
  EXPECT_THROW(load(dir / "does_not_exist.cfg"), IoError);
}
