#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace wimp {

enum class ErrorCode {
  kDegenerateHeading,
  kInvalidPolygon,
  kInvalidPolyline,
  kEmptyGraph,
  kEmptyResult,
  kUnknownSeed,
  kInvalidMap,
  kShapeMismatch,
  kNonScalarLoss,
  kEmptyPolyline,
  kMissingFocalActor,
  kMissingPolyline,
  kInvalidConfig,
  kInvalidMPrime,
  kEmptyDataset,
  kLengthMismatch,
  kEmptyInput,
  kMissingFuture,
  kSchemaViolation,
  kInvalidMix,
  kUnknownActor,
  kDuplicateInjectedId,
  kFocalRemoval,
  kInvalidEdit,
  kCheckpointFormat,
  kIo,
};

std::string_view error_code_name(ErrorCode code);

// Base exception for every failure raised by the library. `code()` is stable
// and is what the CLI and HTTP layers map onto exit codes / status codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Schema violations carry a JSON pointer to the offending field.
class SchemaViolation : public Error {
 public:
  SchemaViolation(std::string pointer, const std::string& detail)
      : Error(ErrorCode::kSchemaViolation, pointer + ": " + detail),
        pointer_(std::move(pointer)) {}

  const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::string pointer_;
};

}  // namespace wimp
