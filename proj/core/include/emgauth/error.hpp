#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace emgauth {

enum class Errc {
  kMalformedInput,
  kShapeMismatch,
  kInvalidArgument,
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kChecksumMismatch,
  kIo,
  kUnknownUser,
  kNoTemplates,
  kInvalidIdentifier,
  kNoModel,
};

std::string_view errc_name(Errc code) noexcept;

/// Every failure raised by the library carries one of the Errc kinds so callers
/// (the CLI, the line service) can map it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace emgauth
