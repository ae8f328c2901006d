#pragma once

#include <stdexcept>
#include <string>

namespace homsync {

/// Broad failure class. The CLI maps each category to its exit code.
enum class ErrorCategory {
  usage = 2,
  config = 3,
  numeric = 4,
  scenario = 5,
  io = 6,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorCategory::usage, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};

// photonics
class GridUnderresolvedError : public Error {
 public:
  explicit GridUnderresolvedError(const std::string& what) : Error(ErrorCategory::numeric, what) {}
};

class FitDivergedError : public Error {
 public:
  explicit FitDivergedError(const std::string& what) : Error(ErrorCategory::numeric, what) {}
};

// control
class NoDipError : public Error {
 public:
  explicit NoDipError(const std::string& what) : Error(ErrorCategory::scenario, what) {}
};

class RelockRequired : public Error {
 public:
  explicit RelockRequired(const std::string& what) : Error(ErrorCategory::scenario, what) {}
};

// sync
class NoPeakError : public Error {
 public:
  explicit NoPeakError(const std::string& what) : Error(ErrorCategory::numeric, what) {}
};

class NonConvergenceError : public Error {
 public:
  explicit NonConvergenceError(const std::string& what) : Error(ErrorCategory::numeric, what) {}
};

// metrology
class InsufficientDataError : public Error {
 public:
  explicit InsufficientDataError(const std::string& what) : Error(ErrorCategory::numeric, what) {}
};

}  // namespace homsync
