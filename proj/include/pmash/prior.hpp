#pragma once

#include <vector>

#include "pmash/types.hpp"

namespace pmash {

inline constexpr double kDefaultZThreshold = 3.0;
inline constexpr int kDefaultNpc = 5;
inline constexpr double kDefaultInflation = 0.01;
inline constexpr double kDefaultGridMult = 2.5;
inline constexpr double kDefaultPseudocount = 0.1;
inline constexpr double kGridFloor = 1e-4;

struct ZScoreMatrix {
  Matrix z;                       // J x R
  std::vector<Index> strong_set;  // genes with max |z| above the threshold
};

/// The null component plus one condition-specific rank-one pattern e_r per
/// condition. Identity and all-ones patterns are deliberately absent.
std::vector<CovarianceComponent> canonical_covariances(Index conditions);

/// Pearson residuals of a multinomial goodness-of-fit test of equal
/// expression across conditions, given the gene total.
ZScoreMatrix multinomial_gof_zscores(const CountMatrix& x, const SizeFactors& s,
                                     double z_thresh = kDefaultZThreshold);

/// Per-gene chi-square p-values from the same test (R - 1 degrees of
/// freedom); a baseline gene-level detector.
Vector multinomial_gof_pvalues(const CountMatrix& x, const SizeFactors& s);

/// PCA initialisation of data-driven patterns from the strong-gene z-scores:
/// `npc` rank-one components plus their sum as one rank-npc component.
std::vector<CovarianceComponent> init_data_driven(const ZScoreMatrix& z, int npc,
                                                  bool center_columns = false);

/// Rescales a data-driven pattern to unit maximum diagonal and adds `eps` to
/// the diagonal. Canonical and null components pass through unchanged.
CovarianceComponent inflate_diagonal(const CovarianceComponent& c,
                                     double eps = kDefaultInflation);

/// Geometric grid of scaling factors covering [kGridFloor, max squared
/// log-range of the per-gene rate estimates].
std::vector<double> build_scaling_grid(const CountMatrix& x, const SizeFactors& s,
                                       double gridmult = kDefaultGridMult,
                                       double pseudocount = kDefaultPseudocount);

}  // namespace pmash
