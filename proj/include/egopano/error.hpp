#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace egopano {

enum class ErrorCode {
  InvalidArgument,
  MissingFile,
  MalformedRecord,
  InconsistentFrameDimensions,
  NonMonotoneTimestamps,
  EmptyFrameList,
  ImageIo,
  UnsupportedDetector,
  ImageTooSmall,
  DescriptorLengthMismatch,
  TrainSetTooSmall,
  PointAtInfinity,
  DegenerateConfiguration,
  InsufficientPairs,
  NoModelFound,
  SingularNormalEquations,
  BaseFrameMissing,
  BaseFrameUnstitchable,
  AllFramesExcluded,
  CanvasTooLarge,
  DetectionOnExcludedFrame,
  InvalidRange,
  SessionNotFound,
  PanoramaNotFound,
  JobNotFound,
  MissingPanorama,
  NotAllowed,
};

std::string_view to_string(ErrorCode code);

// Every failure surfaced by the library is an Error carrying a stable code;
// the CLI and the HTTP layer map codes to exit statuses and response bodies.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace egopano
