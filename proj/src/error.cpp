#include "egopano/error.hpp"

namespace egopano {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::InconsistentFrameDimensions: return "InconsistentFrameDimensions";
    case ErrorCode::NonMonotoneTimestamps: return "NonMonotoneTimestamps";
    case ErrorCode::EmptyFrameList: return "EmptyFrameList";
    case ErrorCode::ImageIo: return "ImageIo";
    case ErrorCode::UnsupportedDetector: return "UnsupportedDetector";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::DescriptorLengthMismatch: return "DescriptorLengthMismatch";
    case ErrorCode::TrainSetTooSmall: return "TrainSetTooSmall";
    case ErrorCode::PointAtInfinity: return "PointAtInfinity";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::InsufficientPairs: return "InsufficientPairs";
    case ErrorCode::NoModelFound: return "NoModelFound";
    case ErrorCode::SingularNormalEquations: return "SingularNormalEquations";
    case ErrorCode::BaseFrameMissing: return "BaseFrameMissing";
    case ErrorCode::BaseFrameUnstitchable: return "BaseFrameUnstitchable";
    case ErrorCode::AllFramesExcluded: return "AllFramesExcluded";
    case ErrorCode::CanvasTooLarge: return "CanvasTooLarge";
    case ErrorCode::DetectionOnExcludedFrame: return "DetectionOnExcludedFrame";
    case ErrorCode::InvalidRange: return "InvalidRange";
    case ErrorCode::SessionNotFound: return "SessionNotFound";
    case ErrorCode::PanoramaNotFound: return "PanoramaNotFound";
    case ErrorCode::JobNotFound: return "JobNotFound";
    case ErrorCode::MissingPanorama: return "MissingPanorama";
    case ErrorCode::NotAllowed: return "NotAllowed";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace egopano
