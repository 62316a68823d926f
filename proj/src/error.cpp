#include "personadb/error.hpp"

namespace personadb {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DuplicateRecordId: return "DuplicateRecordId";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::UnknownUser: return "UnknownUser";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::TranscriptMiss: return "TranscriptMiss";
    case ErrorCode::OutputTruncated: return "OutputTruncated";
    case ErrorCode::PreconditionViolation: return "PreconditionViolation";
    case ErrorCode::EmptyHistory: return "EmptyHistory";
    case ErrorCode::AnalyzerParseFailure: return "AnalyzerParseFailure";
    case ErrorCode::EmptyCache: return "EmptyCache";
    case ErrorCode::ZeroNormVector: return "ZeroNormVector";
    case ErrorCode::NoCandidates: return "NoCandidates";
    case ErrorCode::TemplateError: return "TemplateError";
    case ErrorCode::DegenerateSeries: return "DegenerateSeries";
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::UnknownTask: return "UnknownTask";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::WriteConflict: return "WriteConflict";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace personadb
