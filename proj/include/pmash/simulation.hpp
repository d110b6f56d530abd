#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pmash/types.hpp"

namespace pmash {

/// One permutation of the condition labels, applied identically to every
/// gene. Seed 0 leaves the labels unchanged.
std::vector<int> shuffle_null(std::vector<int> labels, std::uint64_t seed);

/// Sums cell-level counts (J x C) into one column per condition label.
CountMatrix aggregate_pseudobulk(const CountArray& cells, const std::vector<int>& labels,
                                 std::vector<std::string> gene_ids,
                                 std::vector<std::string> condition_ids);

/// Stand-in for a real single-cell data set: cells with random library
/// sizes and negative-binomial gene expression, split unevenly into
/// conditions.
struct SyntheticConfig {
  Index genes = 1000;
  Index conditions = 10;
  Index cells_lo = 150;         // cells per condition, uniform range
  Index cells_hi = 250;
  double log_rate = -1.6;       // centre of log mean count per cell
  double log_rate_sd = 1.2;
  double library_sd = 0.4;      // sd of log cell library size
  double cell_dispersion = 0.5; // negative-binomial 1 / size per cell
  std::uint64_t seed = 1;
};

struct SyntheticCells {
  CountArray counts;        // J x C
  std::vector<int> labels;  // condition of each cell
  std::vector<std::string> gene_ids;
  std::vector<std::string> condition_ids;
};

SyntheticCells synthetic_cells(const SyntheticConfig& config);

/// Null pseudobulk counts: synthetic cells with shuffled labels, aggregated.
CountMatrix synthetic_counts(const SyntheticConfig& config);

struct EffectDesign {
  std::vector<Vector> patterns;
  double w_lo = 0.4054651081081644;  // log 1.5
  double w_hi = 1.6094379124341003;  // log 5
  Index n_de = 0;
  std::int64_t min_total_count = 200;
  std::uint64_t seed = 1;

  /// Effects in the last-but-one condition, in conditions 4-5, or in
  /// conditions 6-8 (1-based), with condition 1 as control. Conditions
  /// fewer than 9 fall back to one single-condition pattern per treatment.
  static std::vector<Vector> default_patterns(Index conditions);
};

struct SimTruth {
  Matrix beta;  // J x R, natural log, zero in the control column
  std::vector<Index> de_genes;

  std::vector<bool> is_de() const;
};

/// beta_j = a w u for n_de genes drawn uniformly among all J.
SimTruth generate_effects(const EffectDesign& design, Index genes, Index conditions);
/// As above, drawing DE genes only among those with total count at least
/// design.min_total_count.
SimTruth generate_effects(const EffectDesign& design, const CountMatrix& base);

/// Thins one gene's counts by Binomial(x_r, exp(beta_r - max beta)).
std::vector<std::int64_t> binomial_thin(const std::vector<std::int64_t>& x,
                                        const Vector& beta_j, std::uint64_t seed);

/// Thins every gene, each with its own random stream.
CountMatrix thin_counts(const CountMatrix& x, const SimTruth& truth, std::uint64_t seed);

/// Per-gene pseudocount MLE of the control-relative log-fold change.
Matrix mle_baseline(const CountMatrix& x, const SizeFactors& s, Index control,
                    double pseudocount = 0.1);

struct DetectionPoint {
  double threshold = 0;
  Index tp = 0;
  Index fp = 0;
  Index fn = 0;
  double fdr = 0;
  double power = 0;
};

/// Gene-level calls: gene j is positive when score_j <= threshold.
std::vector<DetectionPoint> evaluate_detection_genes(const SimTruth& truth,
                                                     const Vector& scores,
                                                     const std::vector<double>& thresholds);

/// Pair-level calls; a true positive also needs the estimated sign to match.
/// The control column is not scored.
std::vector<DetectionPoint> evaluate_detection_pairs(const SimTruth& truth,
                                                     const Matrix& scores,
                                                     const Matrix& estimates, Index control,
                                                     const std::vector<double>& thresholds);

/// Largest power among thresholds taken at every distinct score whose
/// empirical gene-level FDR does not exceed `max_fdr`.
double power_at_fdr(const SimTruth& truth, const Vector& scores, double max_fdr);

/// RMSE of control-relative log-fold changes over `genes`. Throws EmptyGroup.
double rmse(const SimTruth& truth, const Matrix& estimates, const std::vector<Index>& genes,
            Index control);

struct GroupRmse {
  std::string group;
  Index genes = 0;
  double rmse = 0;
};

/// RMSE for the null genes and for DE genes in quartiles of mean count.
std::vector<GroupRmse> rmse_by_group(const SimTruth& truth, const Matrix& estimates,
                                     const Vector& mean_count, Index control);

/// DE genes in quartile q (0-based, lowest first) of mean count.
std::vector<Index> de_quartile(const SimTruth& truth, const Vector& mean_count, int q);

}  // namespace pmash
