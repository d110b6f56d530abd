#pragma once

#include <cmath>

#include "pmash/types.hpp"

namespace pmash {

/// Column sums of the count matrix. Throws ZeroColumn for an empty condition.
SizeFactors compute_size_factors(const CountMatrix& x);

template <typename Scalar>
struct PlnMoments {
  Scalar mean;
  Scalar var;
};

/// Mean and variance of a Poisson log-normal count with rate
/// s * exp(mu_total + eta), eta ~ N(0, psi2).
template <typename Scalar>
PlnMoments<Scalar> pln_moments(Scalar mu_total, Scalar psi2, Scalar s) {
  using std::exp;
  using std::expm1;
  const Scalar mean = s * exp(mu_total + psi2 / Scalar(2));
  return {mean, mean * (Scalar(1) + mean * expm1(psi2))};
}

/// Upsilon = F rho', the J x R offset contributed by unwanted variation.
Matrix ruv_offset(const FactorLoadings& f, const Matrix& rho, Index conditions);

}  // namespace pmash
