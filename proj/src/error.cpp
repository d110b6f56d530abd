#include "pmash/error.hpp"

namespace pmash {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ZeroColumn: return "ZeroColumn";
    case ErrorCode::LowCountGene: return "LowCountGene";
    case ErrorCode::TooFewStrongGenes: return "TooFewStrongGenes";
    case ErrorCode::ZeroMatrix: return "ZeroMatrix";
    case ErrorCode::NotPsd: return "NotPsd";
    case ErrorCode::NumericalOverflow: return "NumericalOverflow";
    case ErrorCode::AllZeroWeights: return "AllZeroWeights";
    case ErrorCode::DivergedInnerLoop: return "DivergedInnerLoop";
    case ErrorCode::EmptySubgroupCounts: return "EmptySubgroupCounts";
    case ErrorCode::ZeroResponsibility: return "ZeroResponsibility";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NegativeCount: return "NegativeCount";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::SchemaError: return "SchemaError";
  }
  return "Unknown";
}

int error_exit_status(ErrorCode code) {
  // 1 is reserved for usage errors reported by the argument parser.
  return 10 + static_cast<int>(code);
}

}  // namespace pmash
