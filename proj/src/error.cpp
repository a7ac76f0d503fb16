#include "amdprep/error.hpp"

namespace amdprep {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::TooFewPairs: return "TooFewPairs";
    case Errc::DegenerateConfiguration: return "DegenerateConfiguration";
    case Errc::NonFinite: return "NonFinite";
    case Errc::InvalidImage: return "InvalidImage";
    case Errc::InvalidThreshold: return "InvalidThreshold";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::MaskDimensionMismatch: return "MaskDimensionMismatch";
    case Errc::IoError: return "IoError";
    case Errc::NotFound: return "NotFound";
    case Errc::CorruptSet: return "CorruptSet";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::MissingSegmentationMap: return "MissingSegmentationMap";
    case Errc::ValidationFailed: return "ValidationFailed";
    case Errc::RevisionConflict: return "RevisionConflict";
    case Errc::PayloadTooLarge: return "PayloadTooLarge";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace amdprep
