#pragma once

#include <stdexcept>
#include <string>

namespace kgcf {

/// Process exit codes used by the command-line front end.
enum class ExitCode : int {
  kSuccess = 0,
  kUsage = 1,
  kStageDependency = 2,
  kBackend = 3,
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ExitCode code = ExitCode::kUsage)
      : std::runtime_error(what), code_(code) {}
  [[nodiscard]] ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Malformed or missing input files.
class LoadError : public Error {
 public:
  explicit LoadError(const std::string& what) : Error(what, ExitCode::kUsage) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, ExitCode::kUsage) {}
};

/// An upstream artifact is missing, stale, or from a different configuration.
class StageDependencyError : public Error {
 public:
  explicit StageDependencyError(const std::string& what)
      : Error(what, ExitCode::kStageDependency) {}
};

/// Network, protocol or remote-service failure.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, int attempts = 0)
      : Error(what, ExitCode::kBackend), attempts_(attempts) {}
  [[nodiscard]] int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

/// Training data has a single class (or is empty).
class DegenerateDataError : public Error {
 public:
  explicit DegenerateDataError(const std::string& what) : Error(what, ExitCode::kUsage) {}
};

/// Loss became NaN or infinite during optimisation.
class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what) : Error(what, ExitCode::kUsage) {}
};

}  // namespace kgcf
