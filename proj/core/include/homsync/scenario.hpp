#pragma once

// End-to-end scenario runs: build the plant from a RunConfig, drive it, and
// write one directory of CSVs plus a key=value summary.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "homsync/config.hpp"

namespace homsync::scenario {

std::string_view version();

struct RunSummary {
  std::filesystem::path directory;
  std::vector<std::pair<std::string, std::string>> values;  // in output order
  std::vector<std::string> files;                           // written, excluding summary.txt

  const std::string* find(std::string_view key) const;
};

/// Runs the scenario and writes every output, summary.txt last. `log` gets a
/// line per phase when set. Errors from the modules propagate unchanged.
RunSummary run(const config::RunConfig& cfg, std::ostream* log = nullptr);

/// `key=value` per line.
std::string format_summary(const RunSummary& summary);

}  // namespace homsync::scenario
