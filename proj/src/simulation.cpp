#include "pmash/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pmash/random.hpp"

namespace pmash {

std::vector<int> shuffle_null(std::vector<int> labels, std::uint64_t seed) {
  if (seed == 0) return labels;
  std::mt19937_64 rng(stream_seed(seed, Stream::Shuffle, 0));
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

CountMatrix aggregate_pseudobulk(const CountArray& cells, const std::vector<int>& labels,
                                 std::vector<std::string> gene_ids,
                                 std::vector<std::string> condition_ids) {
  require(static_cast<std::size_t>(cells.cols()) == labels.size(), ErrorCode::DimensionMismatch,
          "one label per cell is required");
  const Index rn = static_cast<Index>(condition_ids.size());
  CountArray out = CountArray::Zero(cells.rows(), rn);
  for (Index c = 0; c < cells.cols(); ++c) {
    const int r = labels[static_cast<std::size_t>(c)];
    require(r >= 0 && r < rn, ErrorCode::InvalidArgument, "cell label out of range");
    out.col(r) += cells.col(c);
  }
  return CountMatrix(std::move(out), std::move(gene_ids), std::move(condition_ids));
}

SyntheticCells synthetic_cells(const SyntheticConfig& config) {
  require(config.genes >= 1 && config.conditions >= 2, ErrorCode::InvalidArgument,
          "synthetic data needs at least one gene and two conditions");
  require(config.cells_lo >= 1 && config.cells_hi >= config.cells_lo, ErrorCode::InvalidArgument,
          "invalid cells-per-condition range");
  require(config.cell_dispersion > 0, ErrorCode::InvalidArgument,
          "cell dispersion must be positive");
  std::mt19937_64 rng(stream_seed(config.seed, Stream::Synthetic, 0));
  SyntheticCells out;
  std::uniform_int_distribution<Index> ncells(config.cells_lo, config.cells_hi);
  for (Index r = 0; r < config.conditions; ++r) {
    const Index n = ncells(rng);
    out.labels.insert(out.labels.end(), static_cast<std::size_t>(n), static_cast<int>(r));
    out.condition_ids.push_back("cond" + std::to_string(r + 1));
  }
  const Index cn = static_cast<Index>(out.labels.size());
  std::normal_distribution<double> unit(0.0, 1.0);
  Vector library(cn);
  for (Index c = 0; c < cn; ++c) library[c] = std::exp(config.library_sd * unit(rng));
  out.counts.resize(config.genes, cn);
  const double shape = 1.0 / config.cell_dispersion;
  std::gamma_distribution<double> gamma(shape, 1.0 / shape);
  for (Index j = 0; j < config.genes; ++j) {
    const double rate = std::exp(config.log_rate + config.log_rate_sd * unit(rng));
    for (Index c = 0; c < cn; ++c) {
      std::poisson_distribution<std::int64_t> pois(library[c] * rate * gamma(rng));
      out.counts(j, c) = pois(rng);
    }
    out.gene_ids.push_back("gene" + std::to_string(j + 1));
  }
  return out;
}

CountMatrix synthetic_counts(const SyntheticConfig& config) {
  SyntheticCells cells = synthetic_cells(config);
  const auto labels = shuffle_null(cells.labels, config.seed);
  return aggregate_pseudobulk(cells.counts, labels, std::move(cells.gene_ids),
                              std::move(cells.condition_ids));
}

std::vector<Vector> EffectDesign::default_patterns(Index conditions) {
  std::vector<Vector> out;
  if (conditions >= 9) {
    const std::vector<std::vector<Index>> sets{{conditions - 2}, {3, 4}, {5, 6, 7}};
    for (const auto& set : sets) {
      Vector u = Vector::Zero(conditions);
      for (Index r : set) u[r] = 1.0;
      out.push_back(u);
    }
    return out;
  }
  for (Index r = 1; r < conditions; ++r) out.push_back(Vector::Unit(conditions, r));
  return out;
}

std::vector<bool> SimTruth::is_de() const {
  std::vector<bool> out(static_cast<std::size_t>(beta.rows()), false);
  for (Index j : de_genes) out[static_cast<std::size_t>(j)] = true;
  return out;
}

namespace {

SimTruth draw_effects(const EffectDesign& design, Index genes, Index conditions,
                      std::vector<Index> eligible) {
  require(!design.patterns.empty(), ErrorCode::InvalidArgument, "no effect patterns given");
  require(design.w_lo > 0 && design.w_hi >= design.w_lo, ErrorCode::InvalidArgument,
          "invalid effect magnitude range");
  require(design.n_de >= 0 && design.n_de <= static_cast<Index>(eligible.size()),
          ErrorCode::InvalidArgument, "more DE genes requested than eligible genes");
  for (const auto& u : design.patterns) {
    require(u.size() == conditions && u.minCoeff() >= 0 && u.maxCoeff() == 1.0,
            ErrorCode::InvalidArgument, "patterns need entries in [0, 1] with maximum 1");
  }
  std::mt19937_64 rng(stream_seed(design.seed, Stream::Effects, 0));
  SimTruth truth;
  truth.beta = Matrix::Zero(genes, conditions);
  // Partial Fisher-Yates for a uniform subset.
  for (Index i = 0; i < design.n_de; ++i) {
    std::uniform_int_distribution<Index> pick(i, static_cast<Index>(eligible.size()) - 1);
    std::swap(eligible[static_cast<std::size_t>(i)], eligible[static_cast<std::size_t>(pick(rng))]);
  }
  truth.de_genes.assign(eligible.begin(), eligible.begin() + design.n_de);
  std::sort(truth.de_genes.begin(), truth.de_genes.end());
  std::uniform_real_distribution<double> mag(design.w_lo, design.w_hi);
  std::uniform_int_distribution<std::size_t> pat(0, design.patterns.size() - 1);
  std::bernoulli_distribution coin(0.5);
  for (Index j : truth.de_genes) {
    const double a = coin(rng) ? 1.0 : -1.0;
    const double w = mag(rng);
    truth.beta.row(j) = (a * w) * design.patterns[pat(rng)].transpose();
  }
  return truth;
}

}  // namespace

SimTruth generate_effects(const EffectDesign& design, Index genes, Index conditions) {
  std::vector<Index> all(static_cast<std::size_t>(genes));
  std::iota(all.begin(), all.end(), Index{0});
  return draw_effects(design, genes, conditions, std::move(all));
}

SimTruth generate_effects(const EffectDesign& design, const CountMatrix& base) {
  std::vector<Index> eligible;
  for (Index j = 0; j < base.genes(); ++j) {
    if (base.gene_total(j) >= design.min_total_count) eligible.push_back(j);
  }
  return draw_effects(design, base.genes(), base.conditions(), std::move(eligible));
}

std::vector<std::int64_t> binomial_thin(const std::vector<std::int64_t>& x,
                                        const Vector& beta_j, std::uint64_t seed) {
  require(static_cast<Index>(x.size()) == beta_j.size(), ErrorCode::DimensionMismatch,
          "effects and counts differ in length");
  const double top = beta_j.maxCoeff();
  std::mt19937_64 rng(seed);
  std::vector<std::int64_t> out(x.size());
  for (std::size_t r = 0; r < x.size(); ++r) {
    const double p = std::exp(beta_j[static_cast<Index>(r)] - top);
    if (p >= 1.0) {
      out[r] = x[r];
    } else {
      std::binomial_distribution<std::int64_t> bin(x[r], p);
      out[r] = bin(rng);
    }
  }
  return out;
}

CountMatrix thin_counts(const CountMatrix& x, const SimTruth& truth, std::uint64_t seed) {
  require(truth.beta.rows() == x.genes() && truth.beta.cols() == x.conditions(),
          ErrorCode::DimensionMismatch, "effects do not match the counts");
  CountArray out = x.counts();
  for (Index j = 0; j < x.genes(); ++j) {
    std::vector<std::int64_t> row(static_cast<std::size_t>(x.conditions()));
    for (Index r = 0; r < x.conditions(); ++r) row[static_cast<std::size_t>(r)] = x(j, r);
    const auto thinned = binomial_thin(row, truth.beta.row(j).transpose(),
                                       stream_seed(seed, Stream::Thinning, static_cast<std::uint64_t>(j)));
    for (Index r = 0; r < x.conditions(); ++r) out(j, r) = thinned[static_cast<std::size_t>(r)];
  }
  return CountMatrix(std::move(out), x.gene_ids(), x.condition_ids());
}

Matrix mle_baseline(const CountMatrix& x, const SizeFactors& s, Index control,
                    double pseudocount) {
  require(pseudocount > 0, ErrorCode::InvalidArgument, "pseudocount must be positive");
  require(control >= 0 && control < x.conditions(), ErrorCode::InvalidArgument,
          "control condition out of range");
  Matrix out(x.genes(), x.conditions());
  for (Index j = 0; j < x.genes(); ++j) {
    const double ref = std::log((static_cast<double>(x(j, control)) + pseudocount) / s.s[control]);
    for (Index r = 0; r < x.conditions(); ++r) {
      out(j, r) = std::log((static_cast<double>(x(j, r)) + pseudocount) / s.s[r]) - ref;
    }
  }
  return out;
}

namespace {

void finish(DetectionPoint& p) {
  p.fdr = p.tp + p.fp == 0 ? 0.0 : static_cast<double>(p.fp) / static_cast<double>(p.tp + p.fp);
  p.power = p.tp + p.fn == 0 ? 0.0 : static_cast<double>(p.tp) / static_cast<double>(p.tp + p.fn);
}

int sign_of(double v) { return (v > 0) - (v < 0); }

}  // namespace

std::vector<DetectionPoint> evaluate_detection_genes(const SimTruth& truth,
                                                     const Vector& scores,
                                                     const std::vector<double>& thresholds) {
  require(scores.size() == truth.beta.rows(), ErrorCode::DimensionMismatch,
          "one score per gene is required");
  const auto de = truth.is_de();
  std::vector<DetectionPoint> out;
  for (double t : thresholds) {
    DetectionPoint p;
    p.threshold = t;
    for (Index j = 0; j < scores.size(); ++j) {
      const bool call = scores[j] <= t;
      const bool real = de[static_cast<std::size_t>(j)];
      if (call && real) ++p.tp;
      if (call && !real) ++p.fp;
      if (!call && real) ++p.fn;
    }
    finish(p);
    out.push_back(p);
  }
  return out;
}

std::vector<DetectionPoint> evaluate_detection_pairs(const SimTruth& truth,
                                                     const Matrix& scores,
                                                     const Matrix& estimates, Index control,
                                                     const std::vector<double>& thresholds) {
  require(scores.rows() == truth.beta.rows() && scores.cols() == truth.beta.cols() &&
              estimates.rows() == scores.rows() && estimates.cols() == scores.cols(),
          ErrorCode::DimensionMismatch, "scores and estimates must match the truth");
  std::vector<DetectionPoint> out;
  for (double t : thresholds) {
    DetectionPoint p;
    p.threshold = t;
    for (Index j = 0; j < scores.rows(); ++j) {
      for (Index r = 0; r < scores.cols(); ++r) {
        if (r == control) continue;
        const double lfc = truth.beta(j, r) - truth.beta(j, control);
        const bool call = scores(j, r) <= t;
        const bool hit = call && lfc != 0 && sign_of(estimates(j, r)) == sign_of(lfc);
        if (hit) {
          ++p.tp;
        } else {
          if (call) ++p.fp;
          if (lfc != 0) ++p.fn;
        }
      }
    }
    finish(p);
    out.push_back(p);
  }
  return out;
}

double power_at_fdr(const SimTruth& truth, const Vector& scores, double max_fdr) {
  std::vector<double> cuts(scores.data(), scores.data() + scores.size());
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  double best = 0;
  for (const auto& p : evaluate_detection_genes(truth, scores, cuts)) {
    if (p.fdr <= max_fdr) best = std::max(best, p.power);
  }
  return best;
}

double rmse(const SimTruth& truth, const Matrix& estimates, const std::vector<Index>& genes,
            Index control) {
  if (genes.empty()) fail(ErrorCode::EmptyGroup, "RMSE over an empty gene group");
  double total = 0;
  Index n = 0;
  for (Index j : genes) {
    for (Index r = 0; r < estimates.cols(); ++r) {
      if (r == control) continue;
      const double err = (estimates(j, r) - estimates(j, control)) -
                         (truth.beta(j, r) - truth.beta(j, control));
      total += err * err;
      ++n;
    }
  }
  return std::sqrt(total / static_cast<double>(n));
}

std::vector<Index> de_quartile(const SimTruth& truth, const Vector& mean_count, int q) {
  std::vector<Index> de = truth.de_genes;
  std::stable_sort(de.begin(), de.end(),
                   [&](Index a, Index b) { return mean_count[a] < mean_count[b]; });
  const std::size_t n = de.size();
  const std::size_t lo = n * static_cast<std::size_t>(q) / 4;
  const std::size_t hi = n * static_cast<std::size_t>(q + 1) / 4;
  return {de.begin() + static_cast<std::ptrdiff_t>(lo), de.begin() + static_cast<std::ptrdiff_t>(hi)};
}

std::vector<GroupRmse> rmse_by_group(const SimTruth& truth, const Matrix& estimates,
                                     const Vector& mean_count, Index control) {
  std::vector<GroupRmse> out;
  std::vector<Index> null_genes;
  const auto de = truth.is_de();
  for (Index j = 0; j < truth.beta.rows(); ++j) {
    if (!de[static_cast<std::size_t>(j)]) null_genes.push_back(j);
  }
  out.push_back({"null", static_cast<Index>(null_genes.size()),
                 rmse(truth, estimates, null_genes, control)});
  for (int q = 0; q < 4; ++q) {
    const auto genes = de_quartile(truth, mean_count, q);
    out.push_back({"de_q" + std::to_string(q + 1), static_cast<Index>(genes.size()),
                   rmse(truth, estimates, genes, control)});
  }
  return out;
}

}  // namespace pmash
