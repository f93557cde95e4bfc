#pragma once

#include <stdexcept>
#include <string>

namespace heavyrange {

// Every library error carries a short machine-readable tag; the CLI prints it
// on stderr and maps it to an exit code.
class Error : public std::runtime_error {
 public:
  Error(std::string tag, const std::string& what)
      : std::runtime_error(what), tag_(std::move(tag)) {}

  const std::string& tag() const noexcept { return tag_; }

 private:
  std::string tag_;
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error("domain", what) {}
};

class NoRoot : public Error {
 public:
  explicit NoRoot(const std::string& what) : Error("no-root", what) {}
};

class CapacityExceeded : public Error {
 public:
  explicit CapacityExceeded(const std::string& what) : Error("capacity", what) {}
};

class StepBudgetExceeded : public Error {
 public:
  explicit StepBudgetExceeded(const std::string& what) : Error("step-budget", what) {}
};

class EmptyCandidates : public Error {
 public:
  explicit EmptyCandidates(const std::string& what) : Error("empty-candidates", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

}  // namespace heavyrange
