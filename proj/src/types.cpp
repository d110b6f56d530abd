#include "pmash/types.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace pmash {

CountMatrix::CountMatrix(CountArray counts, std::vector<std::string> gene_ids,
                         std::vector<std::string> condition_ids)
    : counts_(std::move(counts)),
      gene_ids_(std::move(gene_ids)),
      condition_ids_(std::move(condition_ids)) {
  require(counts_.rows() >= 1, ErrorCode::InvalidArgument,
          "count matrix needs at least one gene");
  require(counts_.cols() >= 2, ErrorCode::InvalidArgument,
          "count matrix needs at least two conditions");
  require(static_cast<Index>(gene_ids_.size()) == counts_.rows(),
          ErrorCode::DimensionMismatch, "gene id count does not match rows");
  require(static_cast<Index>(condition_ids_.size()) == counts_.cols(),
          ErrorCode::DimensionMismatch, "condition id count does not match columns");
  for (Index j = 0; j < counts_.rows(); ++j) {
    for (Index r = 0; r < counts_.cols(); ++r) {
      if (counts_(j, r) < 0) {
        std::ostringstream msg;
        msg << "negative count for gene " << gene_ids_[static_cast<std::size_t>(j)]
            << " in condition " << condition_ids_[static_cast<std::size_t>(r)];
        fail(ErrorCode::NegativeCount, msg.str());
      }
    }
  }
}

CountMatrix CountMatrix::subset_genes(const std::vector<Index>& genes) const {
  CountArray sub(static_cast<Index>(genes.size()), counts_.cols());
  std::vector<std::string> ids;
  ids.reserve(genes.size());
  for (std::size_t i = 0; i < genes.size(); ++i) {
    sub.row(static_cast<Index>(i)) = counts_.row(genes[i]);
    ids.push_back(gene_ids_[static_cast<std::size_t>(genes[i])]);
  }
  return CountMatrix(std::move(sub), std::move(ids), condition_ids_);
}

void check_min_gene_count(const CountMatrix& x, std::int64_t min_gene_count) {
  for (Index j = 0; j < x.genes(); ++j) {
    const auto total = x.gene_total(j);
    if (total < min_gene_count || total == 0) {
      std::ostringstream msg;
      msg << "gene " << x.gene_ids()[static_cast<std::size_t>(j)] << " has total count "
          << total << " < " << min_gene_count;
      fail(ErrorCode::LowCountGene, msg.str());
    }
  }
}

std::vector<Index> genes_passing_filter(const CountMatrix& x,
                                        std::int64_t min_gene_count) {
  std::vector<Index> keep;
  for (Index j = 0; j < x.genes(); ++j) {
    const auto total = x.gene_total(j);
    if (total >= min_gene_count && total > 0) keep.push_back(j);
  }
  return keep;
}

SizeFactors::SizeFactors(Vector values) : s(std::move(values)) {
  for (Index r = 0; r < s.size(); ++r) {
    require(std::isfinite(s[r]) && s[r] > 0, ErrorCode::InvalidArgument,
            "size factors must be positive and finite");
  }
}

SubgroupPartition::SubgroupPartition(std::vector<int> assignment,
                                     std::vector<std::string> labels)
    : map_(std::move(assignment)), labels_(std::move(labels)) {
  const int m_count = static_cast<int>(labels_.size());
  require(m_count >= 1, ErrorCode::InvalidArgument, "partition needs a subgroup");
  require(m_count < static_cast<int>(map_.size()) || m_count == 1,
          ErrorCode::InvalidArgument, "partition needs fewer subgroups than conditions");
  members_.assign(static_cast<std::size_t>(m_count), {});
  for (std::size_t r = 0; r < map_.size(); ++r) {
    require(map_[r] >= 0 && map_[r] < m_count, ErrorCode::InvalidArgument,
            "condition assigned to unknown subgroup");
    members_[static_cast<std::size_t>(map_[r])].push_back(static_cast<Index>(r));
  }
  for (const auto& m : members_) {
    require(!m.empty(), ErrorCode::InvalidArgument, "empty subgroup in partition");
  }
}

SubgroupPartition SubgroupPartition::single(Index conditions) {
  return SubgroupPartition(std::vector<int>(static_cast<std::size_t>(conditions), 0),
                           {"all"});
}

FactorLoadings::FactorLoadings(Matrix loadings) : f(std::move(loadings)) {
  require(f.allFinite(), ErrorCode::InvalidArgument, "factor loadings must be finite");
}

FactorLoadings FactorLoadings::subset_genes(const std::vector<Index>& genes) const {
  Matrix sub(static_cast<Index>(genes.size()), f.cols());
  for (std::size_t i = 0; i < genes.size(); ++i) sub.row(static_cast<Index>(i)) = f.row(genes[i]);
  return FactorLoadings(std::move(sub));
}

void ModelParams::validate() const {
  require(mu.rows() == psi2.size(), ErrorCode::DimensionMismatch,
          "mu and psi2 disagree on gene count");
  require(mu.allFinite() && psi2.allFinite() && rho.allFinite(),
          ErrorCode::InvalidArgument, "model parameters must be finite");
  require((psi2.array() >= kPsi2Floor).all(), ErrorCode::InvalidArgument,
          "psi2 below floor");
}

ModelParams ModelParams::subset_genes(const std::vector<Index>& genes) const {
  ModelParams out;
  out.mu.resize(static_cast<Index>(genes.size()), mu.cols());
  out.psi2.resize(static_cast<Index>(genes.size()));
  for (std::size_t i = 0; i < genes.size(); ++i) {
    out.mu.row(static_cast<Index>(i)) = mu.row(genes[i]);
    out.psi2[static_cast<Index>(i)] = psi2[genes[i]];
  }
  out.rho = rho;
  return out;
}

CovarianceComponent CovarianceComponent::null(Index dim, std::string label) {
  CovarianceComponent c;
  c.kind = CovarianceKind::Null;
  c.dimension = dim;
  c.label = std::move(label);
  return c;
}

CovarianceComponent CovarianceComponent::full_rank(Matrix u, std::string label,
                                                   bool data_driven) {
  CovarianceComponent c;
  c.kind = CovarianceKind::FullRank;
  c.dimension = u.rows();
  c.full = std::move(u);
  c.label = std::move(label);
  c.data_driven = data_driven;
  c.check();
  return c;
}

CovarianceComponent CovarianceComponent::rank_one(Vector u, std::string label,
                                                  bool data_driven) {
  CovarianceComponent c;
  c.kind = CovarianceKind::RankOne;
  c.dimension = u.size();
  c.vec = std::move(u);
  c.label = std::move(label);
  c.data_driven = data_driven;
  c.check();
  return c;
}

Matrix CovarianceComponent::dense() const {
  switch (kind) {
    case CovarianceKind::Null: return Matrix::Zero(dimension, dimension);
    case CovarianceKind::FullRank: return full;
    case CovarianceKind::RankOne: return vec * vec.transpose();
  }
  return {};
}

void CovarianceComponent::check() const {
  switch (kind) {
    case CovarianceKind::Null: return;
    case CovarianceKind::RankOne:
      require(vec.allFinite(), ErrorCode::NotPsd, "rank-one component " + label + " not finite");
      return;
    case CovarianceKind::FullRank: {
      require(full.rows() == full.cols() && full.allFinite(), ErrorCode::NotPsd,
              "component " + label + " is not a finite square matrix");
      const double scale = std::max(1.0, full.cwiseAbs().maxCoeff());
      require((full - full.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale,
              ErrorCode::NotPsd, "component " + label + " is not symmetric");
      Eigen::SelfAdjointEigenSolver<Matrix> eig(full, Eigen::EigenvaluesOnly);
      require(eig.eigenvalues().minCoeff() >= -kPsdTolerance * scale, ErrorCode::NotPsd,
              "component " + label + " is not positive semidefinite");
      return;
    }
  }
}

PriorSpec::PriorSpec(std::vector<CovarianceComponent> components, std::vector<double> grid)
    : components_(std::move(components)), grid_(std::move(grid)) {
  build_entries();
  pi_ = Vector::Constant(size(), 1.0 / static_cast<double>(size()));
}

PriorSpec::PriorSpec(std::vector<CovarianceComponent> components, std::vector<double> grid,
                     Vector pi)
    : components_(std::move(components)), grid_(std::move(grid)) {
  build_entries();
  set_pi(std::move(pi));
}

void PriorSpec::build_entries() {
  require(!components_.empty(), ErrorCode::InvalidArgument, "prior needs a component");
  require(!grid_.empty(), ErrorCode::InvalidArgument, "prior needs a scaling grid");
  for (std::size_t l = 0; l < grid_.size(); ++l) {
    require(grid_[l] > 0 && std::isfinite(grid_[l]), ErrorCode::InvalidArgument,
            "grid values must be positive");
    if (l > 0) {
      require(grid_[l] > grid_[l - 1], ErrorCode::InvalidArgument,
              "grid must be strictly increasing");
    }
  }
  const Index dim = components_.front().dim();
  entries_.clear();
  for (std::size_t k = 0; k < components_.size(); ++k) {
    require(components_[k].dim() == dim, ErrorCode::DimensionMismatch,
            "prior components disagree on dimension");
    components_[k].check();
    if (components_[k].kind == CovarianceKind::Null) {
      entries_.push_back({static_cast<int>(k), -1});
    } else {
      for (std::size_t l = 0; l < grid_.size(); ++l) {
        entries_.push_back({static_cast<int>(k), static_cast<int>(l)});
      }
    }
  }
}

Index PriorSpec::dim() const { return components_.front().dim(); }

void PriorSpec::set_pi(Vector pi) {
  require(pi.size() == size(), ErrorCode::DimensionMismatch,
          "mixture weights do not match prior entries");
  require((pi.array() >= 0).all() && pi.allFinite(), ErrorCode::InvalidArgument,
          "mixture weights must be nonnegative");
  require(std::abs(pi.sum() - 1.0) < 1e-8, ErrorCode::InvalidArgument,
          "mixture weights must sum to one");
  pi_ = std::move(pi);
}

double PriorSpec::scale(Index e) const {
  const auto& entry = entries_[static_cast<std::size_t>(e)];
  return entry.grid < 0 ? 0.0 : grid_[static_cast<std::size_t>(entry.grid)];
}

const CovarianceComponent& PriorSpec::component_of(Index e) const {
  return components_[static_cast<std::size_t>(entries_[static_cast<std::size_t>(e)].component)];
}

std::string PriorSpec::entry_label(Index e) const {
  const auto& entry = entries_[static_cast<std::size_t>(e)];
  std::string out = component_of(e).label;
  if (entry.grid >= 0) out += "@" + std::to_string(entry.grid);
  return out;
}

}  // namespace pmash
