#include "sentinel/error.hpp"

namespace sentinel {

std::string_view kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::EmptyMask: return "EmptyMask";
    case ErrorKind::IncompatibleGrids: return "IncompatibleGrids";
    case ErrorKind::InvalidGrid: return "InvalidGrid";
    case ErrorKind::DegenerateHistogram: return "DegenerateHistogram";
    case ErrorKind::NoForeground: return "NoForeground";
    case ErrorKind::InvalidParams: return "InvalidParams";
    case ErrorKind::TooFewMembers: return "TooFewMembers";
    case ErrorKind::TooFewCalibrationCases: return "TooFewCalibrationCases";
    case ErrorKind::InvalidThreshold: return "InvalidThreshold";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::UnsupportedDatatype: return "UnsupportedDatatype";
    case ErrorKind::UnsupportedCompression: return "UnsupportedCompression";
    case ErrorKind::CorruptHeader: return "CorruptHeader";
    case ErrorKind::EndiannessUnsupported: return "EndiannessUnsupported";
    case ErrorKind::TruncatedData: return "TruncatedData";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::InputNotFound: return "InputNotFound";
    case ErrorKind::MissingReference: return "MissingReference";
    case ErrorKind::MalformedCase: return "MalformedCase";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace sentinel
