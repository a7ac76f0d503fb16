#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace amdprep {

enum class Errc {
  TooFewPairs,
  DegenerateConfiguration,
  NonFinite,
  InvalidImage,
  InvalidThreshold,
  DimensionMismatch,
  MaskDimensionMismatch,
  IoError,
  NotFound,
  CorruptSet,
  EmptyCorpus,
  MissingSegmentationMap,
  ValidationFailed,
  RevisionConflict,
  PayloadTooLarge,
  InvalidArgument,
};

std::string_view errc_name(Errc code) noexcept;

/// Every failure raised by the library. `invariant()` carries the name of the
/// violated rule for validation-style errors (CorruptSet, ValidationFailed).
class Error : public std::runtime_error {
public:
  Error(Errc code, std::string message, std::string invariant = {})
      : std::runtime_error(std::move(message)), code_(code), invariant_(std::move(invariant)) {}

  Errc code() const noexcept { return code_; }
  const std::string& invariant() const noexcept { return invariant_; }

private:
  Errc code_;
  std::string invariant_;
};

class RevisionConflict : public Error {
public:
  RevisionConflict(std::int64_t current, std::optional<std::int64_t> expected)
      : Error(Errc::RevisionConflict,
              "revision conflict: stored revision is " + std::to_string(current) +
                  (expected ? ", expected " + std::to_string(*expected) : std::string{})),
        current_(current) {}

  std::int64_t current_revision() const noexcept { return current_; }

private:
  std::int64_t current_;
};

}  // namespace amdprep
