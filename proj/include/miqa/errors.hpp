#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace miqa {

/// Tensor extents do not satisfy an operation's shape contract.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an API precondition (non-scalar loss, missing gradient, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A metric is undefined for its input (zero variance, all ties).
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed binary file. Carries the name of the failing field and the byte
/// offset at which it was expected.
class FormatError : public std::runtime_error {
 public:
  FormatError(std::string field, std::uint64_t offset, const std::string& detail)
      : std::runtime_error(field + " at byte offset " + std::to_string(offset) + ": " + detail),
        field_(std::move(field)),
        offset_(offset) {}

  const std::string& field() const noexcept { return field_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::string field_;
  std::uint64_t offset_;
};

}  // namespace miqa
