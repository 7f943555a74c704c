#include "debias/error.hpp"

namespace debias {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptyCaption: return "EmptyCaption";
    case ErrorCode::kFixedPadTooLarge: return "FixedPadTooLarge";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kContextOverflow: return "ContextOverflow";
    case ErrorCode::kDegenerateBatch: return "DegenerateBatch";
    case ErrorCode::kRankTooLarge: return "RankTooLarge";
    case ErrorCode::kSpecInvalid: return "SpecInvalid";
    case ErrorCode::kCorpusEmpty: return "CorpusEmpty";
    case ErrorCode::kResumeMismatch: return "ResumeMismatch";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kParse: return "Parse";
  }
  return "Unknown";
}

}  // namespace debias
