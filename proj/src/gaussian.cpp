#include "pmash/gaussian.hpp"

#include <cmath>

namespace pmash {

GaussianCov GaussianCov::diagonal_plus_rank_one(Vector d, Vector b) {
  GaussianCov out;
  out.d_ = std::move(d);
  out.b_ = std::move(b);
  if (out.b_.size() == 0) out.b_ = Vector::Zero(out.d_.size());
  return out;
}

GaussianCov GaussianCov::from_dense(Matrix v) {
  GaussianCov out;
  out.dense_ = std::move(v);
  return out;
}

Vector GaussianCov::diagonal() const {
  if (is_dense()) return dense_.diagonal();
  return d_ + b_.cwiseAbs2();
}

double GaussianCov::trace() const {
  if (is_dense()) return dense_.trace();
  return d_.sum() + b_.squaredNorm();
}

double GaussianCov::log_det() const {
  if (is_dense()) {
    Eigen::LLT<Matrix> llt(dense_);
    if (llt.info() != Eigen::Success) return -INFINITY;
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  }
  return d_.array().log().sum() + std::log1p((b_.array().square() / d_.array()).sum());
}

Vector GaussianCov::apply(const Vector& v) const {
  if (is_dense()) return dense_ * v;
  return d_.cwiseProduct(v) + b_ * b_.dot(v);
}

double GaussianCov::quad(const Vector& v) const {
  if (is_dense()) return v.dot(dense_ * v);
  const double bv = b_.dot(v);
  return (d_.array() * v.array().square()).sum() + bv * bv;
}

Matrix GaussianCov::to_dense() const {
  if (is_dense()) return dense_;
  Matrix out = b_ * b_.transpose();
  out.diagonal() += d_;
  return out;
}

double GaussianCov::entry(Index r, Index c) const {
  if (is_dense()) return dense_(r, c);
  return (r == c ? d_[r] : 0.0) + b_[r] * b_[c];
}

bool GaussianCov::is_positive_definite() const {
  if (!is_dense()) return (d_.array() > 0).all() && d_.allFinite() && b_.allFinite();
  if (!dense_.allFinite()) return false;
  if ((dense_ - dense_.transpose()).cwiseAbs().maxCoeff() >
      1e-10 * std::max(1.0, dense_.cwiseAbs().maxCoeff())) {
    return false;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(dense_, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff() > 0;
}

PriorCovariance::PriorCovariance(const CovarianceComponent& component, double scale,
                                 double psi2)
    : kind_(component.kind), dim_(component.dim()), psi2_(psi2), scale_(scale) {
  require(psi2 > 0, ErrorCode::InvalidArgument, "psi2 must be positive");
  switch (kind_) {
    case CovarianceKind::Null:
      log_det_ = static_cast<double>(dim_) * std::log(psi2_);
      break;
    case CovarianceKind::RankOne:
      c_ = std::sqrt(scale) * component.vec;
      cc_ = c_.squaredNorm();
      log_det_ = static_cast<double>(dim_) * std::log(psi2_) + std::log1p(cc_ / psi2_);
      break;
    case CovarianceKind::FullRank: {
      u_ = scale * component.full;
      Matrix s = u_;
      s.diagonal().array() += psi2_;
      Eigen::LLT<Matrix> llt(s);
      require(llt.info() == Eigen::Success, ErrorCode::NotPsd,
              "prior covariance is not positive definite");
      log_det_ = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
      s_inv_ = llt.solve(Matrix::Identity(dim_, dim_));
      s_inv_ = 0.5 * (s_inv_ + s_inv_.transpose()).eval();
      break;
    }
  }
}

Vector PriorCovariance::solve(const Vector& v) const {
  switch (kind_) {
    case CovarianceKind::Null: return v / psi2_;
    case CovarianceKind::RankOne:
      return (v - c_ * (c_.dot(v) / (psi2_ + cc_))) / psi2_;
    case CovarianceKind::FullRank: return s_inv_ * v;
  }
  return {};
}

double PriorCovariance::trace_solve(const GaussianCov& v) const {
  switch (kind_) {
    case CovarianceKind::Null: return v.trace() / psi2_;
    case CovarianceKind::RankOne:
      return (v.trace() - v.quad(c_) / (psi2_ + cc_)) / psi2_;
    case CovarianceKind::FullRank:
      if (v.is_dense()) return s_inv_.cwiseProduct(v.dense()).sum();
      return (s_inv_.diagonal().cwiseProduct(v.diag_part())).sum() +
             v.low_rank_part().dot(s_inv_ * v.low_rank_part());
  }
  return 0;
}

GaussianCov PriorCovariance::as_cov() const {
  switch (kind_) {
    case CovarianceKind::Null:
      return GaussianCov::diagonal_plus_rank_one(Vector::Constant(dim_, psi2_), {});
    case CovarianceKind::RankOne:
      return GaussianCov::diagonal_plus_rank_one(Vector::Constant(dim_, psi2_), c_);
    case CovarianceKind::FullRank: {
      Matrix s = u_;
      s.diagonal().array() += psi2_;
      return GaussianCov::from_dense(std::move(s));
    }
  }
  return {};
}

GaussianCov PriorCovariance::precision_update(const Vector& a) const {
  switch (kind_) {
    case CovarianceKind::Null:
      return GaussianCov::diagonal_plus_rank_one(
          (1.0 / (a.array() + 1.0 / psi2_)).matrix(), {});
    case CovarianceKind::RankOne: {
      // S^{-1} + diag(a) = D - kappa c c'; invert by Sherman-Morrison.
      const Vector d_inv = (1.0 / (a.array() + 1.0 / psi2_)).matrix();
      const double kappa = 1.0 / (psi2_ * (psi2_ + cc_));
      const Vector dc = d_inv.cwiseProduct(c_);
      const double t = kappa * c_.dot(dc);
      return GaussianCov::diagonal_plus_rank_one(d_inv, std::sqrt(kappa / (1.0 - t)) * dc);
    }
    case CovarianceKind::FullRank: {
      Matrix p = s_inv_;
      p.diagonal() += a;
      Eigen::LLT<Matrix> llt(p);
      Matrix v = llt.solve(Matrix::Identity(dim_, dim_));
      return GaussianCov::from_dense(0.5 * (v + v.transpose()));
    }
  }
  return {};
}

Matrix PriorCovariance::beta_cov() const {
  switch (kind_) {
    case CovarianceKind::Null: return Matrix::Zero(dim_, dim_);
    case CovarianceKind::RankOne: return c_ * c_.transpose();
    case CovarianceKind::FullRank: return u_;
  }
  return {};
}

double gaussian_kl(const Vector& gamma, const GaussianCov& v, const PriorCovariance& s) {
  return 0.5 * (s.trace_solve(v) + gamma.dot(s.solve(gamma)) -
                static_cast<double>(gamma.size()) + s.log_det() - v.log_det());
}

}  // namespace pmash
