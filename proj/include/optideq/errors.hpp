#pragma once

#include <stdexcept>
#include <string>

namespace optideq {

// Invalid shapes, dimensions, or configuration values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A non-finite value appeared; the message names the stage that produced it.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& stage, const std::string& detail)
      : std::runtime_error("non-finite value in stage '" + stage + "': " + detail), stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

// Malformed input rows, files or schemas.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace optideq
