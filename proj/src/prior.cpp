#include "pmash/prior.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>

namespace pmash {

std::vector<CovarianceComponent> canonical_covariances(Index conditions) {
  require(conditions >= 2, ErrorCode::InvalidArgument,
          "canonical covariances need at least two conditions");
  std::vector<CovarianceComponent> out;
  out.reserve(static_cast<std::size_t>(conditions) + 1);
  out.push_back(CovarianceComponent::null(conditions));
  for (Index r = 0; r < conditions; ++r) {
    out.push_back(CovarianceComponent::rank_one(Vector::Unit(conditions, r),
                                                "cond_" + std::to_string(r + 1),
                                                /*data_driven=*/false));
  }
  return out;
}

ZScoreMatrix multinomial_gof_zscores(const CountMatrix& x, const SizeFactors& s,
                                     double z_thresh) {
  require(s.size() == x.conditions(), ErrorCode::DimensionMismatch,
          "size factors do not match conditions");
  const Vector p = s.s / s.s.sum();
  ZScoreMatrix out;
  out.z = Matrix::Zero(x.genes(), x.conditions());
  for (Index j = 0; j < x.genes(); ++j) {
    const double n = static_cast<double>(x.gene_total(j));
    if (n == 0) continue;
    double max_abs = 0;
    for (Index r = 0; r < x.conditions(); ++r) {
      const double expected = n * p[r];
      const double z = (static_cast<double>(x(j, r)) - expected) /
                       std::sqrt(expected * (1.0 - p[r]));
      out.z(j, r) = z;
      max_abs = std::max(max_abs, std::abs(z));
    }
    if (max_abs > z_thresh) out.strong_set.push_back(j);
  }
  return out;
}

Vector multinomial_gof_pvalues(const CountMatrix& x, const SizeFactors& s) {
  const Vector p = s.s / s.s.sum();
  const double dof = static_cast<double>(x.conditions() - 1);
  Vector out = Vector::Ones(x.genes());
  for (Index j = 0; j < x.genes(); ++j) {
    const double n = static_cast<double>(x.gene_total(j));
    if (n == 0) continue;
    double chi2 = 0;
    for (Index r = 0; r < x.conditions(); ++r) {
      const double expected = n * p[r];
      const double d = static_cast<double>(x(j, r)) - expected;
      chi2 += d * d / expected;
    }
    out[j] = boost::math::gamma_q(dof / 2.0, chi2 / 2.0);
  }
  return out;
}

std::vector<CovarianceComponent> init_data_driven(const ZScoreMatrix& z, int npc,
                                                  bool center_columns) {
  require(npc >= 1, ErrorCode::InvalidArgument, "npc must be positive");
  const Index n = static_cast<Index>(z.strong_set.size());
  if (n < npc) {
    fail(ErrorCode::TooFewStrongGenes, std::to_string(n) + " strong genes for " +
                                           std::to_string(npc) + " components");
  }
  const Index dim = z.z.cols();
  require(npc <= dim, ErrorCode::InvalidArgument, "npc exceeds number of conditions");
  Matrix strong(n, dim);
  for (Index i = 0; i < n; ++i) strong.row(i) = z.z.row(z.strong_set[static_cast<std::size_t>(i)]);
  if (center_columns) strong.rowwise() -= strong.colwise().mean();

  Eigen::JacobiSVD<Matrix> svd(strong, Eigen::ComputeThinV);
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));

  std::vector<CovarianceComponent> out;
  Matrix sum = Matrix::Zero(dim, dim);
  for (int p = 0; p < npc; ++p) {
    Vector u = svd.singularValues()[p] * norm * svd.matrixV().col(p);
    // Fix the sign so the largest-magnitude entry is positive.
    Index arg = 0;
    u.cwiseAbs().maxCoeff(&arg);
    if (u[arg] < 0) u = -u;
    sum += u * u.transpose();
    out.push_back(CovarianceComponent::rank_one(std::move(u), "pc_" + std::to_string(p + 1)));
  }
  out.push_back(CovarianceComponent::full_rank(0.5 * (sum + sum.transpose()),
                                               "pca_" + std::to_string(npc)));
  return out;
}

CovarianceComponent inflate_diagonal(const CovarianceComponent& c, double eps) {
  require(eps >= 0, ErrorCode::InvalidArgument, "inflation constant must be nonnegative");
  if (!c.data_driven || c.kind == CovarianceKind::Null) return c;
  Matrix u = c.dense();
  const double max_diag = u.diagonal().maxCoeff();
  if (!(max_diag > 0)) {
    fail(ErrorCode::ZeroMatrix, "cannot rescale all-zero component " + c.label);
  }
  u /= max_diag;
  u.diagonal().array() += eps;
  auto out = CovarianceComponent::full_rank(std::move(u), c.label, true);
  out.inflated = true;
  return out;
}

std::vector<double> build_scaling_grid(const CountMatrix& x, const SizeFactors& s,
                                       double gridmult, double pseudocount) {
  require(gridmult > 1, ErrorCode::InvalidArgument, "gridmult must exceed 1");
  require(pseudocount > 0, ErrorCode::InvalidArgument, "pseudocount must be positive");
  const Vector log_s = s.s.array().log();
  double max_range = 0;
  for (Index j = 0; j < x.genes(); ++j) {
    double lo = INFINITY;
    double hi = -INFINITY;
    for (Index r = 0; r < x.conditions(); ++r) {
      const double v = std::log(static_cast<double>(x(j, r)) + pseudocount) - log_s[r];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    max_range = std::max(max_range, hi - lo);
  }
  const double w_max = max_range * max_range;
  int levels = 1;
  double top = w_max;
  while (top > kGridFloor) {
    top /= gridmult;
    ++levels;
  }
  std::vector<double> grid(static_cast<std::size_t>(levels));
  for (int l = 0; l < levels; ++l) grid[static_cast<std::size_t>(l)] = kGridFloor * std::pow(gridmult, l);
  return grid;
}

}  // namespace pmash
