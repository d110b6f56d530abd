#include "pmash/core_model.hpp"

namespace pmash {

SizeFactors compute_size_factors(const CountMatrix& x) {
  Vector s(x.conditions());
  for (Index r = 0; r < x.conditions(); ++r) {
    const std::int64_t total = x.counts().col(r).sum();
    if (total == 0) {
      fail(ErrorCode::ZeroColumn, "condition " + std::to_string(r) + " (" +
                                      x.condition_ids()[static_cast<std::size_t>(r)] +
                                      ") has no counts");
    }
    s[r] = static_cast<double>(total);
  }
  return SizeFactors(std::move(s));
}

Matrix ruv_offset(const FactorLoadings& f, const Matrix& rho, Index conditions) {
  if (f.factors() == 0) return Matrix::Zero(f.f.rows(), conditions);
  require(rho.rows() == conditions && rho.cols() == f.factors(),
          ErrorCode::DimensionMismatch, "rho does not match factor loadings");
  return f.f * rho.transpose();
}

}  // namespace pmash
