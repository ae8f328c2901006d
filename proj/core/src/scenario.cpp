#include "homsync/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "homsync/control.hpp"
#include "homsync/error.hpp"
#include "homsync/metrology.hpp"
#include "homsync/plant.hpp"
#include "homsync/sync.hpp"

#ifndef HOMSYNC_VERSION
#define HOMSYNC_VERSION "0.0.0"
#endif

namespace homsync::scenario {

namespace {

using config::RunConfig;
using config::Scenario;

// Same precision as the CSV writers, so summary values can be recomputed.
std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

std::string seconds_label(Duration d) {
  std::string s = format_duration(d);
  s.erase(std::remove(s.begin(), s.end(), ' '), s.end());
  return s;
}

class Writer {
 public:
  Writer(RunSummary& summary, std::ostream* log) : summary_(summary), log_(log) {}

  void file(const std::string& name, const std::function<void(std::ostream&)>& body) {
    const std::filesystem::path path = summary_.directory / name;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    body(os);
    os.flush();
    if (!os) throw IoError("write failed for " + path.string());
    summary_.files.push_back(name);
    if (log_) *log_ << "  wrote " << path.string() << '\n';
  }

  void value(std::string key, std::string v) { summary_.values.emplace_back(std::move(key), std::move(v)); }

 private:
  RunSummary& summary_;
  std::ostream* log_;
};

// m values for one series: the configured list, or powers of two plus any
// headline averaging time that falls on the sample grid and fits the data.
std::vector<std::size_t> m_values_for(const RunConfig& cfg, std::size_t n, Duration tau0,
                                      const std::vector<Duration>& extra_times) {
  if (!cfg.m_values.empty()) return cfg.m_values;
  std::vector<std::size_t> m = metrology::default_m_values(n);
  for (const Duration t : extra_times) {
    if (t.ticks() % tau0.ticks() != 0) continue;
    const auto k = static_cast<std::size_t>(t.ticks() / tau0.ticks());
    if (k >= 1 && n >= 3 * k + 1) m.push_back(k);
  }
  std::sort(m.begin(), m.end());
  m.erase(std::unique(m.begin(), m.end()), m.end());
  return m;
}

void report_tdev(Writer& w, const RunConfig& cfg, const std::string& name, const metrology::TdevCurve& curve,
                 std::vector<std::string>& warnings) {
  for (const Duration t : cfg.headline_times) {
    const metrology::TdevPoint* p = curve.at(t);
    w.value("tdev_" + name + "_fs@" + seconds_label(t), p ? num(p->tdev_fs) : "n/a");
  }
  if (!curve.points.empty()) {
    const metrology::TdevPoint& last = curve.points.back();
    w.value("tdev_" + name + "_longest_s", num(last.averaging_time.to_seconds()));
    w.value("tdev_" + name + "_longest_fs", num(last.tdev_fs));
  }
  for (const std::size_t m : curve.skipped_m)
    warnings.push_back("tdev_" + name + ": m=" + std::to_string(m) + " skipped, needs N >= 3m+1");
}

struct OffsetStats {
  metrology::StabilitySeries segment;
  std::size_t missing = 0;
};

OffsetStats offset_stats(const std::vector<sync::OffsetPoint>& points, Duration window) {
  std::vector<std::optional<Duration>> samples;
  OffsetStats out;
  for (const sync::OffsetPoint& p : points) {
    if (p.estimate) {
      samples.emplace_back(p.estimate->tau_hat);
    } else {
      samples.emplace_back(std::nullopt);
      ++out.missing;
    }
  }
  out.segment = metrology::longest_segment(samples, window);
  return out;
}

void offset_outputs(Writer& w, const RunConfig& cfg, const sync::OffsetRun& run, std::vector<std::string>& warnings,
                    std::vector<Duration>& offset_times) {
  w.file("offsets.csv", [&](std::ostream& os) { sync::write_offsets_csv(os, run.points); });
  if (run.first_histogram)
    w.file("histogram.csv", [&](std::ostream& os) { sync::write_histogram_csv(os, *run.first_histogram); });

  const OffsetStats stats = offset_stats(run.points, cfg.correlation.window);
  w.value("offset_windows", std::to_string(run.points.size()));
  w.value("offset_missing", std::to_string(stats.missing));
  w.value("offset_segment", std::to_string(stats.segment.values.size()));
  for (const sync::OffsetPoint& p : run.points)
    if (!p.estimate) warnings.push_back("window ending " + to_string(p.time.ticks()) + " fs: " + p.failure);
  if (stats.segment.values.empty()) {
    w.value("offset_mean_fs", "n/a");
    w.value("offset_stddev_fs", "n/a");
    return;
  }
  w.value("offset_mean_fs", num(metrology::mean_fs(stats.segment)));
  w.value("offset_stddev_fs", num(metrology::rms_fs(stats.segment)));

  const metrology::TdevCurve curve = metrology::tdev(
      stats.segment, m_values_for(cfg, stats.segment.values.size(), cfg.correlation.window, cfg.headline_times));
  w.file("tdev_offset.csv", [&](std::ostream& os) { metrology::write_tdev_csv(os, curve); });
  report_tdev(w, cfg, "offset", curve, warnings);
  for (const metrology::TdevPoint& p : curve.points) offset_times.push_back(p.averaging_time);
}

void lock_outputs(Writer& w, const RunConfig& cfg, const control::LockRecord& lock,
                  const std::vector<Duration>& offset_times, std::vector<std::string>& warnings) {
  w.file("lock.csv", [&](std::ostream& os) { control::write_lock_csv(os, lock); });
  w.value("lock_cycles", std::to_string(lock.entries.size()));
  w.value("rescans", std::to_string(lock.rescans));
  if (lock.entries.empty()) {
    w.value("inloop_rms_fs", "n/a");
    return;
  }
  metrology::StabilitySeries residual;
  residual.tau0 = cfg.controller.dwell * 2;
  for (const control::LockEntry& e : lock.entries) residual.values.push_back(e.residual);
  w.value("inloop_rms_fs", num(metrology::rms_fs(residual)));

  std::vector<Duration> times = cfg.headline_times;
  times.insert(times.end(), offset_times.begin(), offset_times.end());
  const metrology::TdevCurve curve =
      metrology::tdev(residual, m_values_for(cfg, residual.values.size(), residual.tau0, times));
  w.file("tdev_inloop.csv", [&](std::ostream& os) { metrology::write_tdev_csv(os, curve); });
  report_tdev(w, cfg, "inloop", curve, warnings);
}

void scan_outputs(Writer& w, const control::DipScan& scan) {
  w.file("dip_scan.csv", [&](std::ostream& os) { control::write_scan_csv(os, scan); });
  w.value("dip_minimum_fs", to_string(scan.minimum_setting.ticks()));
  w.value("dip_points", std::to_string(scan.points.size()));
}

}  // namespace

std::string_view version() { return HOMSYNC_VERSION; }

const std::string* RunSummary::find(std::string_view key) const {
  for (const auto& [k, v] : values)
    if (k == key) return &v;
  return nullptr;
}

RunSummary run(const RunConfig& cfg, std::ostream* log) {
  if (const std::vector<config::Diagnostic> problems = config::check(cfg); !problems.empty())
    throw config::ConfigParseError("run config", problems);

  RunSummary summary;
  summary.directory = cfg.output_dir;
  std::error_code ec;
  std::filesystem::create_directories(summary.directory, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.output_dir + ": " + ec.message());

  if (log) *log << "scenario " << config::to_string(cfg.scenario) << ", seed " << cfg.seed << '\n';
  Writer w(summary, log);
  w.value("version", std::string(version()));
  w.value("scenario", std::string(config::to_string(cfg.scenario)));
  w.value("seed", std::to_string(cfg.seed));
  w.value("duration", format_duration(cfg.duration));
  w.value("time_compression", num(cfg.time_compression));
  w.file("config_echo.txt", [&](std::ostream& os) {
    os << "# homsync " << version() << " resolved configuration\n" << config::echo(cfg);
  });

  plant::Plant plant(cfg.plant_config(), cfg.seed);
  std::vector<std::string> warnings;

  // Raw tap tags from the start of the run.
  std::vector<TimestampSeries> dump{{ClockId::A, {}}, {ClockId::B, {}}};
  const TimeTag dump_end = TimeTag::epoch() + cfg.tag_dump;
  const control::BatchSink dump_sink = [&](const plant::EventBatch& b) {
    if (b.start >= dump_end) return;
    for (const TimeTag t : b.tags_a.tags)
      if (t < dump_end) dump[0].tags.push_back(t);
    for (const TimeTag t : b.tags_b.tags)
      if (t < dump_end) dump[1].tags.push_back(t);
  };
  const control::BatchSink sink = cfg.tag_dump.ticks() > 0 ? dump_sink : control::BatchSink{};

  switch (cfg.scenario) {
    case Scenario::locked_4km:
    case Scenario::locked_0km: {
      const auto n = static_cast<std::size_t>(cfg.duration.ticks() / cfg.correlation.window.ticks());
      if (log) *log << "scan, then lock for " << n << " correlation windows\n";
      const sync::OffsetRun run = sync::offset_series(plant, &cfg.controller, cfg.correlation, n, cfg.controller.dwell, sink);
      scan_outputs(w, run.lock->scans.front());
      std::vector<Duration> offset_times;
      offset_outputs(w, cfg, run, warnings, offset_times);
      lock_outputs(w, cfg, *run.lock, offset_times, warnings);
      break;
    }
    case Scenario::free_running: {
      const auto n = static_cast<std::size_t>(cfg.duration.ticks() / cfg.correlation.window.ticks());
      if (log) *log << "free running for " << n << " correlation windows\n";
      const sync::OffsetRun run = sync::offset_series(plant, nullptr, cfg.correlation, n, Duration::seconds(1), sink);
      std::vector<Duration> offset_times;
      offset_outputs(w, cfg, run, warnings, offset_times);
      break;
    }
    case Scenario::tcspc_selftest: {
      // Two simultaneous PPS edges one interval apart: the instrument should
      // read the interval exactly, so any departure is its own systematic.
      const Duration pps = cfg.tcspc.sample_interval;
      const auto n = static_cast<std::size_t>(cfg.duration.ticks() / pps.ticks());
      if (log) *log << "tcspc self-test, " << n << " samples\n";
      metrology::StabilitySeries series;
      series.tau0 = pps;
      series.values.reserve(n);
      for (std::size_t i = 0; i < n; ++i) series.values.push_back(plant::tcspc_measure(plant.tcspc(), pps) - pps);
      w.file("tcspc.csv", [&](std::ostream& os) {
        os << "time_fs,error_fs\n";
        for (std::size_t i = 0; i < n; ++i)
          os << to_string(pps.ticks() * static_cast<Ticks>(i + 1)) << ',' << to_string(series.values[i].ticks())
             << '\n';
      });
      w.value("tcspc_samples", std::to_string(n));
      w.value("tcspc_rms_fs", num(metrology::rms_fs(series)));
      const metrology::TdevCurve curve = metrology::tdev(series, m_values_for(cfg, n, pps, cfg.headline_times));
      w.file("tdev_tcspc.csv", [&](std::ostream& os) { metrology::write_tdev_csv(os, curve); });
      report_tdev(w, cfg, "tcspc", curve, warnings);
      break;
    }
    case Scenario::dip_scan: {
      if (log) *log << "dip scan\n";
      const control::DipScan scan = control::scan_dip(plant, cfg.controller, sink);
      scan_outputs(w, scan);
      // Simulation truth at the end of the scan, for comparison.
      w.value("dip_truth_fs", to_string(plant.balance_setting_at(plant.now()).ticks()));
      double lo = scan.points.front().rate;
      double hi = lo;
      for (const control::ScanPoint& p : scan.points) {
        lo = std::min(lo, p.rate);
        hi = std::max(hi, p.rate);
      }
      w.value("dip_contrast", num((hi - lo) / hi));
      break;
    }
  }

  if (cfg.tag_dump.ticks() > 0)
    w.file("tags.csv", [&](std::ostream& os) { write_timestamp_csv(os, dump); });

  w.value("simulated_time_s", num(plant.now().to_seconds()));
  std::string list;
  for (const std::string& f : summary.files) list += (list.empty() ? "" : ",") + f;
  w.value("files", list);
  for (const std::string& f : summary.files)
    w.value("bytes." + f, std::to_string(std::filesystem::file_size(summary.directory / f)));
  w.value("warnings", std::to_string(warnings.size()));
  for (std::size_t i = 0; i < warnings.size(); ++i) w.value("warning." + std::to_string(i + 1), warnings[i]);

  const std::string text = format_summary(summary);
  std::ofstream os(summary.directory / "summary.txt", std::ios::binary);
  os << text;
  if (!os) throw IoError("cannot write summary.txt");
  return summary;
}

std::string format_summary(const RunSummary& summary) {
  std::string out;
  for (const auto& [k, v] : summary.values) out += k + "=" + v + "\n";
  return out;
}

}  // namespace homsync::scenario
