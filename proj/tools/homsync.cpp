// homsync: run, validate and batch scenario configs; print dip curves.
//
// Exit codes: 0 ok, 1 unexpected, 2 usage, 3 config, 4 numeric, 5 scenario, 6 io.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "homsync/config.hpp"
#include "homsync/error.hpp"
#include "homsync/photonics.hpp"
#include "homsync/scenario.hpp"
#include "homsync/timebase.hpp"

namespace fs = std::filesystem;
using namespace homsync;

namespace {

int exit_code(const Error& e) { return static_cast<int>(e.category()); }

int report(const std::exception& e) {
  std::cerr << "homsync: " << e.what() << '\n';
  if (const auto* he = dynamic_cast<const Error*>(&e)) return exit_code(*he);
  return 1;
}

int cmd_run(const std::string& path, std::optional<std::uint64_t> seed, const std::string& out) {
  config::RunConfig cfg = config::load(path);
  if (seed) cfg.seed = *seed;
  if (!out.empty()) cfg.output_dir = out;
  const scenario::RunSummary summary = scenario::run(cfg, &std::cerr);
  std::cout << scenario::format_summary(summary);
  return 0;
}

int cmd_validate(const std::string& path) {
  try {
    const config::RunConfig cfg = config::load(path);
    std::cout << "# " << path << ": ok\n" << config::echo(cfg);
    return 0;
  } catch (const config::ConfigParseError& e) {
    for (const config::Diagnostic& d : e.diagnostics()) std::cerr << config::format(d, path) << '\n';
    std::cerr << e.diagnostics().size() << " error(s)\n";
    return exit_code(e);
  }
}

std::pair<Duration, Duration> parse_span(const std::string& text) {
  // The separator is the first ':' after the first character, so a leading
  // minus sign on either bound is fine.
  const std::size_t colon = text.find(':', 1);
  if (colon == std::string::npos) throw UsageError("--range expects LO:HI, got '" + text + "'");
  const Duration lo = Duration::parse(text.substr(0, colon));
  const Duration hi = Duration::parse(text.substr(colon + 1));
  if (hi < lo) throw UsageError("--range is empty");
  return {lo, hi};
}

int cmd_dip_curve(double v, const std::string& tc_text, const std::string& range_text, const std::string& step_text,
                  const std::string& model, const std::string& out) {
  const Duration tc = Duration::parse(tc_text);
  const auto [lo, hi] = parse_span(range_text);
  const Duration step = Duration::parse(step_text);
  if (step.ticks() <= 0) throw UsageError("--step must be positive");
  if ((hi - lo).ticks() / step.ticks() > 10'000'000) throw UsageError("--range / --step gives too many points");
  const photonics::HomDipModel dip{v, tc, 1.0};
  dip.validate();

  std::optional<photonics::InterferogramQuadrature> quad;
  if (model == "quadrature")
    quad.emplace(photonics::jsa_for_dip(v, tc, photonics::default_pair_center(), photonics::default_sigma_plus()));

  std::ofstream file;
  if (!out.empty()) {
    file.open(out);
    if (!file) throw IoError("cannot write " + out);
  }
  std::ostream& os = out.empty() ? std::cout : file;
  os << "delay_fs,relative_coincidence\n" << std::setprecision(12);
  for (Duration d = lo; d <= hi; d += step)
    os << to_string(d.ticks()) << ',' << (quad ? (*quad)(d) : photonics::dip_envelope(dip, d)) << '\n';
  return 0;
}

int cmd_batch(const std::string& dir, unsigned jobs) {
  std::vector<fs::path> configs;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec))
    if (entry.is_regular_file() && entry.path().extension() == ".cfg") configs.push_back(entry.path());
  if (ec) throw IoError("cannot list " + dir + ": " + ec.message());
  if (configs.empty()) throw UsageError("no .cfg files in " + dir);
  std::sort(configs.begin(), configs.end());

  // Runs share nothing, so each worker just takes the next index.
  std::atomic<std::size_t> next{0};
  std::vector<int> codes(configs.size(), 0);
  std::mutex io;
  const auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      int code = 0;
      std::string message;
      try {
        const scenario::RunSummary s = scenario::run(config::load(configs[i]));
        message = "-> " + s.directory.string();
      } catch (const std::exception& e) {
        code = 1;
        if (const auto* he = dynamic_cast<const Error*>(&e)) code = exit_code(*he);
        message = e.what();
      }
      codes[i] = code;
      std::lock_guard lock(io);
      std::cout << (code == 0 ? "ok   " : "FAIL ") << configs[i].string() << ' ' << message << '\n';
    }
  };
  const unsigned n = std::clamp<unsigned>(jobs, 1, static_cast<unsigned>(configs.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  const auto failed = std::count_if(codes.begin(), codes.end(), [](int c) { return c != 0; });
  std::cout << configs.size() - static_cast<std::size_t>(failed) << " of " << configs.size() << " runs succeeded\n";
  for (const int c : codes)
    if (c != 0) return c;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Seeded HOM two-clock synchronization simulator"};
  app.set_version_flag("--version", std::string(scenario::version()));
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  auto* run = app.add_subcommand("run", "Run a scenario config and write its outputs");
  run->add_option("--config", config_path, "Config file")->required();
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--out", out_dir, "Override the output directory");

  auto* validate = app.add_subcommand("validate", "Check a config and print every resolved parameter");
  validate->add_option("--config", config_path, "Config file")->required();

  double visibility = 0.68;
  std::string tc = "3000";
  std::string range = "-15000:15000";
  std::string step = "100";
  std::string model = "envelope";
  std::string curve_out;
  auto* dip = app.add_subcommand("dip-curve", "Print the HOM dip as delay_fs,relative_coincidence");
  dip->add_option("--v", visibility, "Visibility")->capture_default_str();
  dip->add_option("--tc", tc, "Coherence time, fs (units accepted)")->capture_default_str();
  dip->add_option("--range", range, "Delay range LO:HI, fs")->capture_default_str();
  dip->add_option("--step", step, "Delay step, fs")->capture_default_str();
  dip->add_option("--model", model, "envelope or quadrature")
      ->check(CLI::IsMember({"envelope", "quadrature"}))
      ->capture_default_str();
  dip->add_option("--out", curve_out, "Write to a file instead of stdout");

  std::string batch_dir;
  unsigned jobs = 1;
  auto* batch = app.add_subcommand("batch", "Run every .cfg file in a directory");
  batch->add_option("--configs", batch_dir, "Directory of config files")->required();
  batch->add_option("--jobs", jobs, "Concurrent runs")->check(CLI::PositiveNumber)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorCategory::usage);
  }

  try {
    if (*run) return cmd_run(config_path, seed, out_dir);
    if (*validate) return cmd_validate(config_path);
    if (*dip) return cmd_dip_curve(visibility, tc, range, step, model, curve_out);
    if (*batch) return cmd_batch(batch_dir, jobs);
  } catch (const std::exception& e) {
    return report(e);
  }
  return 0;
}
