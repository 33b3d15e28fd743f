#include "cif/error.hpp"

namespace cif {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Usage: return "usage";
    case ErrorCode::Structural: return "structural";
    case ErrorCode::Data: return "data";
    case ErrorCode::Numeric: return "numeric";
    case ErrorCode::DegenerateDistribution: return "degenerate-distribution";
    case ErrorCode::DegenerateRotation: return "degenerate-rotation";
    case ErrorCode::Io: return "io";
    case ErrorCode::NotACheckpoint: return "not-a-checkpoint";
    case ErrorCode::UnsupportedVersion: return "unsupported-version";
    case ErrorCode::Truncated: return "truncated";
    case ErrorCode::MissingManifest: return "missing-manifest";
    case ErrorCode::DimensionMismatch: return "dimension-mismatch";
    case ErrorCode::LabelOverflow: return "label-overflow";
    case ErrorCode::MalformedHeader: return "malformed-header";
    case ErrorCode::UnsupportedFormat: return "unsupported-format";
  }
  return "unknown";
}

}  // namespace cif
