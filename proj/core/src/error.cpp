#include "emgauth/error.hpp"

namespace emgauth {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::kMalformedInput: return "malformed";
    case Errc::kShapeMismatch: return "width_mismatch";
    case Errc::kInvalidArgument: return "invalid_argument";
    case Errc::kBadMagic: return "bad_magic";
    case Errc::kVersionMismatch: return "version_mismatch";
    case Errc::kTruncated: return "truncated";
    case Errc::kChecksumMismatch: return "checksum_mismatch";
    case Errc::kIo: return "io_error";
    case Errc::kUnknownUser: return "unknown_user";
    case Errc::kNoTemplates: return "no_templates";
    case Errc::kInvalidIdentifier: return "invalid_identifier";
    case Errc::kNoModel: return "no_model";
  }
  return "unknown";
}

}  // namespace emgauth
