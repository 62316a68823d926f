#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace personadb {

enum class ErrorCode {
  DuplicateRecordId,
  MalformedRecord,
  UnknownUser,
  DimensionMismatch,
  BackendUnavailable,
  TranscriptMiss,
  OutputTruncated,
  PreconditionViolation,
  EmptyHistory,
  AnalyzerParseFailure,
  EmptyCache,
  ZeroNormVector,
  NoCandidates,
  TemplateError,
  DegenerateSeries,
  EmptySeries,
  InvalidConfig,
  UnknownTask,
  ConfigError,
  WriteConflict,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure surfaced by the library carries a stable, machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace personadb
