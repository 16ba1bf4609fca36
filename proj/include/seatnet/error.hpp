#pragma once

#include <stdexcept>
#include <string>

namespace seatnet {

enum class ErrorCode {
  kShapeMismatch,
  kConfig,
  kData,
  kIo,
  kDivergence,
  // Image decoding failures (data errors).
  kImageHeader,
  kImageTruncated,
  kImageMaxval,
  // Weight file (SWT) validation failures.
  kBadMagic,
  kBadVersion,
  kTruncated,
  kChecksum,
  kBadDtype,
  kUnknownTensor,
  kMissingTensor,
  kTensorShape,
};

const char* to_string(ErrorCode code);

/// Base exception for every failure raised by the library. The code is
/// stable and is what callers (the CLI in particular) dispatch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// Manifest, image and other input-data failures.
  bool is_data() const noexcept;
  /// True for every code produced while validating a weight file.
  bool is_weight_format() const noexcept;

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace seatnet
