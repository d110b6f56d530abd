#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pmash {

enum class ErrorCode {
  InvalidArgument,
  ZeroColumn,
  LowCountGene,
  TooFewStrongGenes,
  ZeroMatrix,
  NotPsd,
  NumericalOverflow,
  AllZeroWeights,
  DivergedInnerLoop,
  EmptySubgroupCounts,
  ZeroResponsibility,
  EmptyGroup,
  ParseError,
  DimensionMismatch,
  NegativeCount,
  IoError,
  SchemaError,
};

std::string_view error_code_name(ErrorCode code);

// Process exit status used by the command-line tool for each error code.
int error_exit_status(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace pmash
