#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "pmash/error.hpp"

namespace pmash {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CountArray =
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Minimal floor on the per-gene random-effect variance psi^2.
inline constexpr double kPsi2Floor = 1e-8;
// Genes whose total count is below this are rejected at load.
inline constexpr std::int64_t kDefaultMinGeneCount = 25;
// Tolerance on the smallest eigenvalue of a covariance component.
inline constexpr double kPsdTolerance = 1e-10;

/// J x R matrix of nonnegative pseudobulk counts with identifiers.
class CountMatrix {
 public:
  CountMatrix() = default;
  CountMatrix(CountArray counts, std::vector<std::string> gene_ids,
              std::vector<std::string> condition_ids);

  Index genes() const { return counts_.rows(); }
  Index conditions() const { return counts_.cols(); }

  const CountArray& counts() const { return counts_; }
  std::int64_t operator()(Index j, Index r) const { return counts_(j, r); }
  const std::vector<std::string>& gene_ids() const { return gene_ids_; }
  const std::vector<std::string>& condition_ids() const { return condition_ids_; }

  /// Counts converted to double, the form used by the model math.
  Matrix as_real() const { return counts_.cast<double>(); }
  std::int64_t gene_total(Index j) const { return counts_.row(j).sum(); }

  /// Rows restricted to `genes`, in the given order.
  CountMatrix subset_genes(const std::vector<Index>& genes) const;

 private:
  CountArray counts_;
  std::vector<std::string> gene_ids_;
  std::vector<std::string> condition_ids_;
};

/// Throws LowCountGene naming the first gene whose total count is below
/// `min_gene_count`.
void check_min_gene_count(const CountMatrix& x, std::int64_t min_gene_count);

/// Indices of genes whose total count reaches `min_gene_count`.
std::vector<Index> genes_passing_filter(const CountMatrix& x,
                                        std::int64_t min_gene_count);

struct SizeFactors {
  Vector s;

  SizeFactors() = default;
  explicit SizeFactors(Vector values);
  Index size() const { return s.size(); }
};

/// Assignment of conditions to subgroups, each with its own baseline.
class SubgroupPartition {
 public:
  SubgroupPartition() = default;
  SubgroupPartition(std::vector<int> assignment, std::vector<std::string> labels);

  /// Single subgroup holding every condition.
  static SubgroupPartition single(Index conditions);

  int subgroups() const { return static_cast<int>(labels_.size()); }
  Index conditions() const { return static_cast<Index>(map_.size()); }
  int of(Index r) const { return map_[static_cast<std::size_t>(r)]; }
  const std::vector<int>& assignment() const { return map_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<Index>& members(int m) const {
    return members_[static_cast<std::size_t>(m)];
  }

 private:
  std::vector<int> map_;
  std::vector<std::string> labels_;
  std::vector<std::vector<Index>> members_;
};

/// J x D loadings of the unwanted-variation factors; D = 0 disables them.
struct FactorLoadings {
  Matrix f;

  FactorLoadings() = default;
  explicit FactorLoadings(Matrix loadings);
  static FactorLoadings none(Index genes) { return FactorLoadings(Matrix(genes, 0)); }
  Index factors() const { return f.cols(); }
  FactorLoadings subset_genes(const std::vector<Index>& genes) const;
};

struct ModelParams {
  Matrix mu;    // J x M subgroup baselines
  Vector psi2;  // J random-effect variances
  Matrix rho;   // R x D confounder coefficients

  Index genes() const { return mu.rows(); }
  void validate() const;
  ModelParams subset_genes(const std::vector<Index>& genes) const;
};

enum class CovarianceKind { Null, FullRank, RankOne };

/// One prior covariance pattern U_k.
struct CovarianceComponent {
  CovarianceKind kind = CovarianceKind::Null;
  Matrix full;     // FullRank only
  Vector vec;      // RankOne only, U = vec vec'
  Index dimension = 0;
  std::string label;
  bool data_driven = false;
  bool inflated = false;

  static CovarianceComponent null(Index dim, std::string label = "null");
  static CovarianceComponent full_rank(Matrix u, std::string label,
                                       bool data_driven = true);
  static CovarianceComponent rank_one(Vector u, std::string label,
                                      bool data_driven = true);

  Index dim() const { return dimension; }
  /// Dense R x R matrix of the pattern.
  Matrix dense() const;
  /// Throws NotPsd unless symmetric with min eigenvalue >= -kPsdTolerance.
  void check() const;
};

/// Mixture prior over effect vectors: components crossed with a scaling
/// grid. The null component has no scale and contributes a single entry.
class PriorSpec {
 public:
  struct Entry {
    int component;
    int grid;  // -1 for the null component
  };

  PriorSpec() = default;
  /// Uniform weights over all entries.
  PriorSpec(std::vector<CovarianceComponent> components, std::vector<double> grid);
  PriorSpec(std::vector<CovarianceComponent> components, std::vector<double> grid,
            Vector pi);

  Index dim() const;
  const std::vector<CovarianceComponent>& components() const { return components_; }
  const std::vector<double>& grid() const { return grid_; }
  const std::vector<Entry>& entries() const { return entries_; }
  Index size() const { return static_cast<Index>(entries_.size()); }
  const Vector& pi() const { return pi_; }
  void set_pi(Vector pi);

  double scale(Index e) const;
  const CovarianceComponent& component_of(Index e) const;
  std::string entry_label(Index e) const;

 private:
  void build_entries();

  std::vector<CovarianceComponent> components_;
  std::vector<double> grid_;
  std::vector<Entry> entries_;
  Vector pi_;
};

}  // namespace pmash
