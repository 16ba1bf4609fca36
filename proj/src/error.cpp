#include "seatnet/error.hpp"

namespace seatnet {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kConfig: return "configuration error";
    case ErrorCode::kData: return "data error";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kDivergence: return "training diverged";
    case ErrorCode::kImageHeader: return "bad image header";
    case ErrorCode::kImageTruncated: return "truncated image payload";
    case ErrorCode::kImageMaxval: return "unsupported image maxval";
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kBadVersion: return "bad version";
    case ErrorCode::kTruncated: return "truncated file";
    case ErrorCode::kChecksum: return "checksum mismatch";
    case ErrorCode::kBadDtype: return "unsupported dtype";
    case ErrorCode::kUnknownTensor: return "unknown tensor";
    case ErrorCode::kMissingTensor: return "missing tensor";
    case ErrorCode::kTensorShape: return "tensor shape mismatch";
  }
  return "unknown error";
}

bool Error::is_data() const noexcept {
  switch (code_) {
    case ErrorCode::kData:
    case ErrorCode::kIo:
    case ErrorCode::kImageHeader:
    case ErrorCode::kImageTruncated:
    case ErrorCode::kImageMaxval:
      return true;
    default:
      return false;
  }
}

bool Error::is_weight_format() const noexcept {
  switch (code_) {
    case ErrorCode::kBadMagic:
    case ErrorCode::kBadVersion:
    case ErrorCode::kTruncated:
    case ErrorCode::kChecksum:
    case ErrorCode::kBadDtype:
    case ErrorCode::kUnknownTensor:
    case ErrorCode::kMissingTensor:
    case ErrorCode::kTensorShape:
      return true;
    default:
      return false;
  }
}

void fail(ErrorCode code, const std::string& message) {
  throw Error(code, std::string(to_string(code)) + ": " + message);
}

}  // namespace seatnet
