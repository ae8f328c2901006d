#include "homsync/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

namespace homsync::config {

namespace {

constexpr std::pair<Scenario, std::string_view> kScenarios[] = {
    {Scenario::locked_4km, "locked_4km"},
    {Scenario::locked_0km, "locked_0km"},
    {Scenario::free_running, "free_running"},
    {Scenario::tcspc_selftest, "tcspc_selftest"},
    {Scenario::dip_scan, "dip_scan"},
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string format_list(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + items[i];
  return out + "]";
}

// A value failing to parse or check reports through this.
struct BadValue {
  std::string message;
};

double parse_double(std::string_view s) {
  s = trim(s);
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v))
    throw BadValue{"expected a number, got '" + std::string(s) + "'"};
  return v;
}

std::uint64_t parse_u64(std::string_view s) {
  s = trim(s);
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw BadValue{"expected a non-negative integer, got '" + std::string(s) + "'"};
  return v;
}

bool parse_bool(std::string_view s) {
  s = trim(s);
  if (s == "true") return true;
  if (s == "false") return false;
  throw BadValue{"expected true or false, got '" + std::string(s) + "'"};
}

bool has_unit(std::string_view s) {
  s = trim(s);
  return !s.empty() && std::isalpha(static_cast<unsigned char>(s.back()));
}

Duration parse_duration(std::string_view s, bool bare_seconds = false) {
  s = trim(s);
  try {
    if (!has_unit(s)) {
      if (!bare_seconds) throw BadValue{"duration '" + std::string(s) + "' needs a unit (fs, ps, ns, us, ms, s)"};
      return Duration::parse(std::string(s) + " s");
    }
    return Duration::parse(s);
  } catch (const UsageError& e) {
    throw BadValue{e.what()};
  }
}

std::vector<std::string_view> split_list(std::string_view s) {
  s = trim(s);
  if (s.size() < 2 || s.front() != '[' || s.back() != ']') throw BadValue{"expected a list [a, b, ...]"};
  s = trim(s.substr(1, s.size() - 2));
  std::vector<std::string_view> out;
  if (s.empty()) return out;
  while (true) {
    const std::size_t comma = s.find(',');
    out.push_back(trim(s.substr(0, comma)));
    if (out.back().empty()) throw BadValue{"empty list element"};
    if (comma == std::string_view::npos) break;
    s = s.substr(comma + 1);
  }
  return out;
}

// Elements without a unit take the unit of the last element.
std::vector<Duration> parse_duration_list(std::string_view s) {
  const std::vector<std::string_view> items = split_list(s);
  std::vector<Duration> out;
  if (items.empty()) return out;
  if (!has_unit(items.back())) throw BadValue{"the last list element needs a unit"};
  const std::string_view last = items.back();
  std::size_t u = last.size();
  while (u > 0 && std::isalpha(static_cast<unsigned char>(last[u - 1]))) --u;
  const std::string unit(trim(last.substr(u)));
  for (const std::string_view item : items)
    out.push_back(has_unit(item) ? parse_duration(item) : parse_duration(std::string(item) + " " + unit));
  return out;
}

std::pair<Duration, Duration> parse_range(std::string_view s) {
  const std::vector<Duration> v = parse_duration_list(s);
  if (v.size() != 2) throw BadValue{"expected a two-element range [lo, hi]"};
  if (v[0] >= v[1]) throw BadValue{"range must satisfy lo < hi"};
  return {v[0], v[1]};
}

std::string unquote(std::string_view s) {
  s = trim(s);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  if (s.empty()) throw BadValue{"expected a non-empty string"};
  return std::string(s);
}

using Bound = std::function<void(double)>;

Bound at_least(double lo) {
  return [lo](double v) {
    if (!(v >= lo)) throw BadValue{"must be >= " + format_double(lo)};
  };
}
Bound positive() {
  return [](double v) {
    if (!(v > 0.0)) throw BadValue{"must be positive"};
  };
}
Bound fraction() {
  return [](double v) {
    if (!(v >= 0.0 && v <= 1.0)) throw BadValue{"must be in [0, 1]"};
  };
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Access>
Field number(std::string key, Access access, Bound bound = {}) {
  return {std::move(key),
          [access, bound](RunConfig& c, std::string_view v) {
            const double x = parse_double(v);
            if (bound) bound(x);
            access(c) = x;
          },
          [access](const RunConfig& c) { return format_double(access(const_cast<RunConfig&>(c))); }};
}

enum class Sign { any, non_negative, positive };

void check_sign(Duration d, Sign sign) {
  if (sign == Sign::non_negative && d.ticks() < 0) throw BadValue{"must be non-negative"};
  if (sign == Sign::positive && d.ticks() <= 0) throw BadValue{"must be positive"};
}

template <typename Access>
Field duration(std::string key, Access access, Sign sign = Sign::any) {
  return {std::move(key),
          [access, sign](RunConfig& c, std::string_view v) {
            const Duration d = parse_duration(v);
            check_sign(d, sign);
            access(c) = d;
          },
          [access](const RunConfig& c) { return format_duration(access(const_cast<RunConfig&>(c))); }};
}

// A period stored as double seconds.
template <typename Access>
Field seconds(std::string key, Access access) {
  return {std::move(key),
          [access](RunConfig& c, std::string_view v) {
            const Duration d = parse_duration(v);
            check_sign(d, Sign::positive);
            access(c) = d.to_seconds();
          },
          [access](const RunConfig& c) {
            return format_duration(Duration::from_seconds(access(const_cast<RunConfig&>(c))));
          }};
}

template <typename Access>
Field flag(std::string key, Access access) {
  return {std::move(key), [access](RunConfig& c, std::string_view v) { access(c) = parse_bool(v); },
          [access](const RunConfig& c) { return std::string(access(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

template <typename Lo, typename Hi>
Field range(std::string key, Lo lo, Hi hi) {
  return {std::move(key),
          [lo, hi](RunConfig& c, std::string_view v) {
            const auto [a, b] = parse_range(v);
            lo(c) = a;
            hi(c) = b;
          },
          [lo, hi](const RunConfig& c) {
            auto& m = const_cast<RunConfig&>(c);
            return format_list({format_duration(lo(m)), format_duration(hi(m))});
          }};
}

#define HS_REF(expr) [](RunConfig& c) -> auto& { return c.expr; }

std::vector<Field> channel_fields(const std::string& name, ChannelParams RunConfig::*ch) {
  return {
      duration(name + ".nominal_delay", [ch](RunConfig& c) -> Duration& { return (c.*ch).nominal_delay; },
               Sign::non_negative),
      number(name + ".thermal_coefficient", [ch](RunConfig& c) -> double& { return (c.*ch).thermal_coefficient; }),
      number(name + ".drift_ramp", [ch](RunConfig& c) -> double& { return (c.*ch).drift_ramp; }),
      duration(name + ".tap_leg", [ch](RunConfig& c) -> Duration& { return (c.*ch).tap_leg; }),
      duration(name + ".ramp_start", [ch](RunConfig& c) -> Duration& { return (c.*ch).ramp_start; },
               Sign::non_negative),
  };
}

std::vector<Field> temperature_fields(const std::string& name, TemperatureParams RunConfig::*tp) {
  return {
      number(name + ".mean", [tp](RunConfig& c) -> double& { return (c.*tp).mean; }, positive()),
      number(name + ".diurnal_amplitude", [tp](RunConfig& c) -> double& { return (c.*tp).diurnal_amplitude; },
             at_least(0.0)),
      seconds(name + ".diurnal_period", [tp](RunConfig& c) -> double& { return (c.*tp).diurnal_period; }),
      number(name + ".ou_sigma", [tp](RunConfig& c) -> double& { return (c.*tp).ou_sigma; }, at_least(0.0)),
      seconds(name + ".ou_tau", [tp](RunConfig& c) -> double& { return (c.*tp).ou_tau; }),
  };
}

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = [] {
    std::vector<Field> f;
    f.push_back({"scenario", [](RunConfig&, std::string_view) {},  // resolved before the other keys
                 [](const RunConfig& c) { return std::string(to_string(c.scenario)); }});
    f.push_back({"seed", [](RunConfig& c, std::string_view v) { c.seed = parse_u64(v); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    f.push_back({"duration",
                 [](RunConfig& c, std::string_view v) {
                   c.duration = parse_duration(v, true);
                   check_sign(c.duration, Sign::positive);
                 },
                 [](const RunConfig& c) { return format_duration(c.duration); }});
    f.push_back({"output_dir", [](RunConfig& c, std::string_view v) { c.output_dir = unquote(v); },
                 [](const RunConfig& c) { return c.output_dir; }});
    f.push_back(number("time_compression", HS_REF(time_compression), positive()));

    f.push_back(number("source.rep_rate", HS_REF(source.rep_rate), positive()));
    f.push_back(number("source.pair_rate", HS_REF(source.pair_rate), at_least(0.0)));
    f.push_back(number("source.singles_rate_a", HS_REF(source.singles_rate_a), at_least(0.0)));
    f.push_back(number("source.singles_rate_b", HS_REF(source.singles_rate_b), at_least(0.0)));
    f.push_back(number("source.hom_fraction", HS_REF(source.hom_fraction), [](double v) {
      if (!(v > 0.0 && v <= 1.0)) throw BadValue{"must be in (0, 1]"};
    }));

    f.push_back(flag("link.installed", HS_REF(link.installed)));
    f.push_back(duration("link.spool_delay", HS_REF(link.spool_delay), Sign::non_negative));
    f.push_back(number("link.spool_thermal_coefficient", HS_REF(link.spool_thermal_coefficient)));
    f.push_back(duration("link.tap_mismatch", HS_REF(link.tap_mismatch)));

    for (Field& x : channel_fields("channel_a", &RunConfig::channel_a)) f.push_back(std::move(x));
    for (Field& x : channel_fields("channel_b", &RunConfig::channel_b)) f.push_back(std::move(x));
    for (Field& x : temperature_fields("temperature_a", &RunConfig::temperature_a)) f.push_back(std::move(x));
    for (Field& x : temperature_fields("temperature_b", &RunConfig::temperature_b)) f.push_back(std::move(x));

    f.push_back(duration("odl.setting", HS_REF(odl), Sign::non_negative));
    f.push_back(range("mdl.range", HS_REF(mdl_lo), HS_REF(mdl_hi)));
    f.push_back(duration("mdl.resolution", HS_REF(mdl_resolution), Sign::positive));
    f.push_back(duration("mdl.setting", HS_REF(mdl_setting)));

    f.push_back(number("detector.efficiency", HS_REF(detector.efficiency), fraction()));
    f.push_back(duration("detector.jitter_sigma", HS_REF(detector.jitter_sigma), Sign::non_negative));
    f.push_back(duration("detector.dead_time", HS_REF(detector.dead_time), Sign::non_negative));
    f.push_back(number("detector.dark_rate", HS_REF(detector.dark_rate), at_least(0.0)));
    f.push_back(number("detector.gate_rate", HS_REF(detector.gate_rate), at_least(1.0)));
    f.push_back(duration("detector.gate_width", HS_REF(detector.gate_width), Sign::positive));

    f.push_back(number("dip.visibility", HS_REF(dip_visibility), fraction()));
    f.push_back(duration("dip.coherence_time", HS_REF(dip_coherence_time), Sign::positive));

    f.push_back(duration("tcspc.bin_width", HS_REF(tcspc.bin_width), Sign::positive));
    f.push_back(number("tcspc.drift_step", HS_REF(tcspc.drift_step), at_least(0.0)));
    f.push_back(number("tcspc.reversion_samples", HS_REF(tcspc.reversion_samples), at_least(0.0)));
    f.push_back(duration("tcspc.sample_interval", HS_REF(tcspc.sample_interval), Sign::positive));

    f.push_back(duration("plant.clock_offset", HS_REF(clock_offset)));
    f.push_back(flag("plant.counting_noise", HS_REF(counting_noise)));

    f.push_back(duration("controller.dither_depth", HS_REF(controller.dither_depth), Sign::positive));
    f.push_back(duration("controller.step", HS_REF(controller.step), Sign::positive));
    f.push_back(number("controller.hold_threshold", HS_REF(controller.hold_threshold), at_least(0.0)));
    f.push_back(duration("controller.dwell", HS_REF(controller.dwell), Sign::positive));
    f.push_back(range("controller.scan_range", HS_REF(controller.scan_lo), HS_REF(controller.scan_hi)));
    f.push_back(duration("controller.scan_step", HS_REF(controller.scan_step), Sign::positive));

    f.push_back(duration("correlation.bin_width", HS_REF(correlation.bin_width), Sign::positive));
    f.push_back(range("correlation.span", HS_REF(correlation.span_lo), HS_REF(correlation.span_hi)));
    f.push_back(duration("correlation.window", HS_REF(correlation.window), Sign::positive));

    f.push_back({"metrology.m_values",
                 [](RunConfig& c, std::string_view v) {
                   std::vector<std::size_t> out;
                   for (const std::string_view item : split_list(v)) {
                     const std::uint64_t m = parse_u64(item);
                     if (m == 0) throw BadValue{"m values must be >= 1"};
                     out.push_back(m);
                   }
                   c.m_values = std::move(out);
                 },
                 [](const RunConfig& c) {
                   std::vector<std::string> items;
                   for (const std::size_t m : c.m_values) items.push_back(std::to_string(m));
                   return format_list(items);
                 }});
    f.push_back({"metrology.headline_times",
                 [](RunConfig& c, std::string_view v) {
                   std::vector<Duration> out = parse_duration_list(v);
                   for (const Duration d : out) check_sign(d, Sign::positive);
                   c.headline_times = std::move(out);
                 },
                 [](const RunConfig& c) {
                   std::vector<std::string> items;
                   for (const Duration d : c.headline_times) items.push_back(format_duration(d));
                   return format_list(items);
                 }});
    f.push_back(duration("output.tag_dump", HS_REF(tag_dump), Sign::non_negative));
    return f;
  }();
  return fields;
}

#undef HS_REF

const Field* find_field(std::string_view key) {
  for (const Field& f : schema())
    if (f.key == key) return &f;
  return nullptr;
}

struct Entry {
  std::size_t line;
  std::string key;
  std::string value;
};

std::optional<Scenario> scenario_from(std::string_view s) {
  for (const auto& [sc, name] : kScenarios)
    if (name == s) return sc;
  return std::nullopt;
}

std::string stem_of(std::string_view source) {
  std::string s = std::filesystem::path(std::string(source)).stem().string();
  return s.empty() ? "run" : s;
}

// Maps a message from a struct's validate() back to a key when it names one.
std::string key_in(const std::string& message) {
  for (const Field& f : schema())
    if (message.rfind(f.key, 0) == 0) return f.key;
  return {};
}

}  // namespace

std::string_view to_string(Scenario scenario) {
  for (const auto& [sc, name] : kScenarios)
    if (sc == scenario) return name;
  return "unknown";
}

RunConfig RunConfig::defaults(Scenario scenario) {
  RunConfig c;
  c.scenario = scenario;
  switch (scenario) {
    case Scenario::locked_4km:
    case Scenario::free_running:
      break;
    case Scenario::locked_0km:
      c.link.installed = false;
      break;
    case Scenario::tcspc_selftest:
      c.duration = Duration::seconds(200000);
      break;
    case Scenario::dip_scan:
      break;
  }
  return c;
}

plant::PlantConfig RunConfig::plant_config() const {
  plant::PlantConfig p;
  p.source = source;
  const auto channel = [&](const ChannelParams& ch, Duration extra_tap) {
    plant::FiberChannelConfig out;
    out.nominal_delay = ch.nominal_delay + (link.installed ? link.spool_delay : Duration{});
    out.thermal_coefficient = ch.thermal_coefficient + (link.installed ? link.spool_thermal_coefficient : 0.0);
    out.drift_ramp = ch.drift_ramp;
    out.tap_leg = ch.tap_leg + extra_tap;
    out.ramp_start = ch.ramp_start;
    return out;
  };
  p.channel_a = channel(channel_a, Duration{});
  p.channel_b = channel(channel_b, link.installed ? link.tap_mismatch : Duration{});
  const auto temperature = [&](const TemperatureParams& t) {
    return plant::TemperatureConfig{t.mean, t.diurnal_amplitude, t.diurnal_period / time_compression, t.ou_sigma,
                                    t.ou_tau / time_compression};
  };
  p.temperature_a = temperature(temperature_a);
  p.temperature_b = temperature(temperature_b);
  p.odl = odl;
  p.mdl_lo = mdl_lo;
  p.mdl_hi = mdl_hi;
  p.mdl_resolution = mdl_resolution;
  p.mdl_setting = mdl_setting;
  p.detector_a = detector;
  p.detector_b = detector;
  p.dip = photonics::HomDipModel{dip_visibility, dip_coherence_time, source.pair_rate};
  p.tcspc = tcspc;
  p.clock_offset = clock_offset;
  p.counting_noise = counting_noise;
  return p;
}

std::string format(const Diagnostic& d, std::string_view source) {
  std::string out(source);
  if (d.line) out += ":" + std::to_string(d.line);
  out += ": ";
  if (!d.key.empty()) out += d.key + ": ";
  return out + d.message;
}

namespace {

std::string join_diagnostics(const std::string& source, const std::vector<Diagnostic>& diagnostics) {
  std::string out = std::to_string(diagnostics.size()) + " configuration error(s)";
  for (const Diagnostic& d : diagnostics) out += "\n  " + format(d, source);
  return out;
}

}  // namespace

ConfigParseError::ConfigParseError(std::string source, std::vector<Diagnostic> diagnostics)
    : ConfigError(join_diagnostics(source, diagnostics)), diagnostics_(std::move(diagnostics)) {}

std::vector<Diagnostic> check(const RunConfig& cfg) {
  std::vector<Diagnostic> out;
  const auto add = [&](std::string key, std::string message) { out.push_back({0, std::move(key), std::move(message)}); };
  const auto guard = [&](const auto& fn) {
    try {
      fn();
    } catch (const Error& e) {
      add(key_in(e.what()), e.what());
    }
  };

  guard([&] { cfg.source.validate(); });
  guard([&] { cfg.detector.validate(); });
  guard([&] { cfg.tcspc.validate(); });
  guard([&] { cfg.controller.validate(); });
  guard([&] { cfg.correlation.validate(); });
  if (!(cfg.time_compression > 0.0)) add("time_compression", "must be positive");
  guard([&] {
    const plant::PlantConfig p = cfg.plant_config();
    p.temperature_a.validate();
    p.temperature_b.validate();
  });

  if (cfg.mdl_lo.ticks() < 0) add("mdl.range", "must start at or above 0 fs");
  if (cfg.mdl_lo >= cfg.mdl_hi) add("mdl.range", "is empty");
  if (cfg.mdl_setting < cfg.mdl_lo || cfg.mdl_setting > cfg.mdl_hi)
    add("mdl.setting", format_duration(cfg.mdl_setting) + " is outside mdl.range");
  if (cfg.mdl_resolution.ticks() > 0 && cfg.mdl_setting.ticks() % cfg.mdl_resolution.ticks() != 0)
    add("mdl.setting", "is not a multiple of mdl.resolution");

  const bool locked = cfg.scenario == Scenario::locked_4km || cfg.scenario == Scenario::locked_0km;
  const bool uses_scan = locked || cfg.scenario == Scenario::dip_scan;
  if (uses_scan) {
    if (cfg.controller.scan_lo < cfg.mdl_lo || cfg.controller.scan_hi > cfg.mdl_hi)
      add("controller.scan_range", "must lie within mdl.range");
    if (cfg.controller.scan_step < cfg.mdl_resolution)
      add("controller.scan_step", "must be at least mdl.resolution");
    if (cfg.controller.scan_step.ticks() > 0 &&
        (cfg.controller.scan_hi - cfg.controller.scan_lo).ticks() / cfg.controller.scan_step.ticks() > 1'000'000)
      add("controller.scan_step", "gives more than 10^6 scan points");
  }
  if (locked && cfg.controller.dither_depth >= cfg.mdl_hi - cfg.mdl_lo)
    add("controller.dither_depth", "exceeds the MDL travel");

  if (locked || cfg.scenario == Scenario::free_running) {
    if (cfg.duration < cfg.correlation.window)
      add("duration", "must cover at least one correlation.window (" + format_duration(cfg.correlation.window) + ")");
    if (cfg.correlation.bin_width.ticks() > 0 && cfg.correlation.bins() > 10'000'000)
      add("correlation.bin_width", "gives more than 10^7 histogram bins");
    if (cfg.correlation.window < cfg.tcspc.sample_interval)
      add("correlation.window", "is shorter than tcspc.sample_interval");
  }
  if (locked && cfg.correlation.window < cfg.controller.dwell * 2)
    add("correlation.window", "is shorter than one dither cycle");
  if (cfg.scenario == Scenario::tcspc_selftest && cfg.tcspc.sample_interval.ticks() > 0 &&
      cfg.duration.ticks() / cfg.tcspc.sample_interval.ticks() < 4)
    add("duration", "gives fewer than 4 TCSPC samples");
  if (cfg.scenario == Scenario::free_running && cfg.duration.ticks() / cfg.correlation.window.ticks() > 1'000'000)
    add("duration", "gives more than 10^6 correlation windows");
  return out;
}

RunConfig parse(std::string_view text, std::string_view source) {
  std::vector<Diagnostic> diags;
  std::vector<Entry> entries;
  std::map<std::string, std::size_t> seen;

  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      if (line.front() == '[' && line.back() == ']') {
        section = std::string(trim(line.substr(1, line.size() - 2)));
        if (section.empty()) diags.push_back({line_no, {}, "empty section name"});
      } else {
        diags.push_back({line_no, {}, "expected 'key = value' or '[section]'"});
      }
      continue;
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty()) {
      diags.push_back({line_no, {}, "missing key before '='"});
      continue;
    }
    const std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
    if (!find_field(full)) {
      diags.push_back({line_no, full, "unknown key"});
      continue;
    }
    if (value.empty()) {
      diags.push_back({line_no, full, "missing value"});
      continue;
    }
    if (const auto it = seen.find(full); it != seen.end()) {
      diags.push_back({line_no, full, "duplicate key (first set on line " + std::to_string(it->second) + ")"});
      continue;
    }
    seen[full] = line_no;
    entries.push_back({line_no, full, std::string(value)});
  }

  Scenario scenario = Scenario::locked_4km;
  if (const auto it = std::find_if(entries.begin(), entries.end(), [](const Entry& e) { return e.key == "scenario"; });
      it == entries.end()) {
    diags.push_back({0, "scenario", "missing required key (one of locked_4km, locked_0km, free_running, "
                                    "tcspc_selftest, dip_scan)"});
  } else if (const auto sc = scenario_from(trim(it->value))) {
    scenario = *sc;
  } else {
    diags.push_back({it->line, "scenario", "unknown scenario '" + it->value + "'"});
  }

  RunConfig cfg = RunConfig::defaults(scenario);
  cfg.output_dir = "runs/" + stem_of(source);
  for (const Entry& e : entries) {
    try {
      find_field(e.key)->set(cfg, e.value);
    } catch (const BadValue& b) {
      diags.push_back({e.line, e.key, b.message});
    }
  }

  // A scan takes as long as it takes; the duration just reports it.
  if (scenario == Scenario::dip_scan && diags.empty() && cfg.controller.scan_step.ticks() > 0 &&
      cfg.controller.scan_lo <= cfg.controller.scan_hi) {
    const Ticks points = (cfg.controller.scan_hi - cfg.controller.scan_lo).ticks() / cfg.controller.scan_step.ticks() + 1;
    const Duration needed = cfg.controller.dwell * points;
    if (!seen.count("duration")) {
      cfg.duration = needed;
    } else if (cfg.duration != needed) {
      diags.push_back({seen["duration"], "duration",
                       "a dip scan takes exactly " + format_duration(needed) + "; omit duration or set it to that"});
    }
  }

  // Cross-field checks only make sense once every value parsed.
  if (diags.empty()) {
    for (Diagnostic d : check(cfg)) {
      if (const auto it = seen.find(d.key); it != seen.end()) d.line = it->second;
      diags.push_back(std::move(d));
    }
  }
  std::stable_sort(diags.begin(), diags.end(),
                   [](const Diagnostic& a, const Diagnostic& b) { return a.line < b.line; });
  if (!diags.empty()) throw ConfigParseError(std::string(source), std::move(diags));
  return cfg;
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str(), path.string());
}

std::vector<std::pair<std::string, std::string>> resolved(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Field& f : schema()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

std::string echo(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : resolved(cfg)) out += k + " = " + v + "\n";
  return out;
}

std::vector<std::string> keys() {
  std::vector<std::string> out;
  for (const Field& f : schema()) out.push_back(f.key);
  return out;
}

}  // namespace homsync::config
