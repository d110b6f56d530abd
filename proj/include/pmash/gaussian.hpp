#pragma once

#include "pmash/types.hpp"

namespace pmash {

/// Covariance of a Gaussian variational factor. Stored either densely or as
/// diag(d) + b b', the exact form taken under null and rank-one priors.
class GaussianCov {
 public:
  GaussianCov() = default;
  static GaussianCov diagonal_plus_rank_one(Vector d, Vector b);
  static GaussianCov from_dense(Matrix v);

  bool is_dense() const { return dense_.size() > 0; }
  Index dim() const { return is_dense() ? dense_.rows() : d_.size(); }

  Vector diagonal() const;
  double trace() const;
  double log_det() const;
  Vector apply(const Vector& v) const;
  double quad(const Vector& v) const;  // v' V v
  Matrix to_dense() const;
  double entry(Index r, Index c) const;

  const Vector& diag_part() const { return d_; }
  const Vector& low_rank_part() const { return b_; }
  const Matrix& dense() const { return dense_; }

  /// True when symmetric with strictly positive eigenvalues.
  bool is_positive_definite() const;

 private:
  Vector d_;
  Vector b_;
  Matrix dense_;
};

/// Marginal prior covariance of theta = beta + eta for one mixture entry,
/// S = w U + psi2 I, with the structure of U exploited.
class PriorCovariance {
 public:
  PriorCovariance(const CovarianceComponent& component, double scale, double psi2);

  CovarianceKind kind() const { return kind_; }
  Index dim() const { return dim_; }
  double psi2() const { return psi2_; }
  double scale() const { return scale_; }

  double log_det() const { return log_det_; }
  /// S^{-1} v
  Vector solve(const Vector& v) const;
  /// tr(S^{-1} V)
  double trace_solve(const GaussianCov& v) const;
  /// The prior itself, as a variational covariance.
  GaussianCov as_cov() const;
  /// (S^{-1} + diag(a))^{-1}
  GaussianCov precision_update(const Vector& a) const;

  /// Scaled rank-one factor c = sqrt(w) u (RankOne only).
  const Vector& factor() const { return c_; }
  /// w U as a dense matrix.
  Matrix beta_cov() const;
  const Matrix& inverse() const { return s_inv_; }

 private:
  CovarianceKind kind_;
  Index dim_;
  double psi2_;
  double scale_;
  double log_det_ = 0;
  Vector c_;
  double cc_ = 0;
  Matrix u_;
  Matrix s_inv_;
};

/// KL( N(gamma, V) || N(0, S) ).
double gaussian_kl(const Vector& gamma, const GaussianCov& v, const PriorCovariance& s);

}  // namespace pmash
