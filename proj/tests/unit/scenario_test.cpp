#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "homsync/scenario.hpp"

using namespace homsync;
using namespace homsync::literals;

namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::path(testing::TempDir()) / ("homsync_" + name);
  fs::remove_all(p);
  return p;
}

config::RunConfig make(std::string text, const fs::path& out) {
  text += "\noutput_dir = " + out.string() + "\n";
  return config::parse(text, "test.cfg");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

double value(const scenario::RunSummary& s, std::string_view key) {
  const std::string* v = s.find(key);
  if (!v) throw std::runtime_error("missing summary key " + std::string(key));
  return std::stod(*v);
}

}  // namespace

TEST(Scenario, DipScanFindsTheDip) {
  const fs::path out = fresh_dir("dip");
  const scenario::RunSummary s = scenario::run(make("scenario = dip_scan\ncontroller.scan_range = [240, 260 ps]", out));
  EXPECT_EQ(*s.find("files"), "config_echo.txt,dip_scan.csv");
  EXPECT_EQ(value(s, "dip_points"), 41.0);
  EXPECT_GT(value(s, "dip_contrast"), 0.5);

  // The summary minimum is the lowest-rate row of the CSV.
  const auto rows = csv_rows(out / "dip_scan.csv");
  ASSERT_EQ(rows.size(), 41u);
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (std::stod(rows[i][1]) < std::stod(rows[best][1])) best = i;
  EXPECT_EQ(rows[best][0], *s.find("dip_minimum_fs"));
  EXPECT_NEAR(value(s, "dip_minimum_fs"), 250000.0, 1500.0);
  EXPECT_EQ(slurp(out / "summary.txt"), scenario::format_summary(s));
}

TEST(Scenario, TcspcSummaryRecomputesFromCsv) {
  const fs::path out = fresh_dir("tcspc");
  const scenario::RunSummary s = scenario::run(make("scenario = tcspc_selftest\nduration = 4000 s", out));
  const auto rows = csv_rows(out / "tcspc.csv");
  ASSERT_EQ(rows.size(), 4000u);
  EXPECT_EQ(rows[0][0], "1000000000000000");
  double s1 = 0.0;
  double s2 = 0.0;
  for (const auto& r : rows) {
    s1 += std::stod(r[1]);
    s2 += std::stod(r[1]) * std::stod(r[1]);
  }
  const double mean = s1 / 4000.0;
  EXPECT_NEAR(std::sqrt(s2 / 4000.0 - mean * mean), value(s, "tcspc_rms_fs"), 1e-6 * value(s, "tcspc_rms_fs"));
  EXPECT_NE(s.find("tdev_tcspc_fs@1000s"), nullptr);
  EXPECT_EQ(*s.find("tdev_tcspc_fs@4000s"), "n/a");  // needs N >= 12001
}

TEST(Scenario, FreeRunningOffsets) {
  const fs::path out = fresh_dir("free");
  const scenario::RunSummary s =
      scenario::run(make("scenario = free_running\nduration = 400 s\ncorrelation.window = 100 s", out));
  EXPECT_EQ(value(s, "offset_windows"), 4.0);
  EXPECT_EQ(value(s, "offset_missing"), 0.0);
  const auto rows = csv_rows(out / "offsets.csv");
  ASSERT_EQ(rows.size(), 4u);
  double sum = 0.0;
  for (const auto& r : rows) sum += std::stod(r[1]);
  EXPECT_NEAR(sum / 4.0, value(s, "offset_mean_fs"), 1e-3);
  EXPECT_NEAR(value(s, "offset_mean_fs"), 868100.0, 20000.0);
  EXPECT_TRUE(fs::exists(out / "histogram.csv"));
  EXPECT_TRUE(fs::exists(out / "tdev_offset.csv"));
  EXPECT_EQ(s.find("lock_cycles"), nullptr);
}

TEST(Scenario, LockedRunWritesLoopOutputs) {
  const fs::path out = fresh_dir("locked");
  const scenario::RunSummary s = scenario::run(
      make("scenario = locked_4km\nduration = 200 s\ncorrelation.window = 100 s\n"
           "controller.scan_range = [240, 260 ps]\noutput.tag_dump = 2 s",
           out));
  for (const char* f : {"dip_scan.csv", "offsets.csv", "histogram.csv", "lock.csv", "tdev_inloop.csv", "tags.csv"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_EQ(value(s, "lock_cycles"), 100.0);
  EXPECT_EQ(csv_rows(out / "lock.csv").size(), 100u);
  EXPECT_LT(value(s, "inloop_rms_fs"), 1000.0);
  EXPECT_DOUBLE_EQ(value(s, "simulated_time_s"), 241.0);
  EXPECT_EQ(value(s, "bytes.lock.csv"), static_cast<double>(fs::file_size(out / "lock.csv")));

  for (const auto& r : csv_rows(out / "tags.csv")) ASSERT_LT(std::stod(r[1]), 2e15);
}

TEST(Scenario, ReRunIsByteIdentical) {
  const fs::path out = fresh_dir("determinism");
  const config::RunConfig cfg =
      make("scenario = locked_0km\nseed = 17\nduration = 100 s\ncorrelation.window = 50 s\n"
           "controller.scan_range = [240, 260 ps]",
           out);
  const scenario::RunSummary first = scenario::run(cfg);
  std::map<std::string, std::string> before;
  for (const std::string& f : first.files) before[f] = slurp(out / f);
  before["summary.txt"] = slurp(out / "summary.txt");

  const scenario::RunSummary second = scenario::run(cfg);
  EXPECT_EQ(second.files, first.files);
  for (const auto& [name, bytes] : before) EXPECT_EQ(slurp(out / name), bytes) << name;

  config::RunConfig other = cfg;
  other.seed = 18;
  other.output_dir = fresh_dir("determinism_other").string();
  scenario::run(other);
  EXPECT_NE(slurp(fs::path(other.output_dir) / "offsets.csv"), before["offsets.csv"]);
}

TEST(Scenario, InvalidConfigIsRejectedBeforeAnyOutput) {
  const fs::path out = fresh_dir("invalid");
  config::RunConfig cfg = make("scenario = locked_4km", out);
  cfg.detector.efficiency = 2.0;
  EXPECT_THROW(scenario::run(cfg), ConfigError);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_FALSE(scenario::version().empty());
}
