#pragma once

#include <random>
#include <string>
#include <vector>

#include "pmash/core_model.hpp"
#include "pmash/prior.hpp"
#include "pmash/vem.hpp"

namespace fixture {

using namespace pmash;

// Small Poisson-log-normal data set with sparse effects, drawn directly from
// the model. Everything the fit needs is kept alive here.
struct Toy {
  CountMatrix x;
  SizeFactors s;
  FactorLoadings f;
  SubgroupPartition partition;
  Matrix beta;

  FitInputs inputs() const { return {x, s, f, partition}; }
};

inline Toy make_toy(Index genes, Index conditions, std::uint64_t seed, double psi2 = 0.05,
                    double de_fraction = 0.2, double log_depth = 3.5, Index factors = 0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector s = (0.3 * Vector::NullaryExpr(conditions, [&] { return g(rng); })).array().exp();
  s /= s.mean();
  Matrix fl = Matrix::Zero(genes, factors);
  for (Index j = 0; j < genes; ++j)
    for (Index d = 0; d < factors; ++d) fl(j, d) = g(rng);
  Matrix rho(conditions, factors);
  for (Index r = 0; r < conditions; ++r)
    for (Index d = 0; d < factors; ++d) rho(r, d) = 0.1 * g(rng);
  Matrix beta = Matrix::Zero(genes, conditions);
  CountArray counts(genes, conditions);
  for (Index j = 0; j < genes; ++j) {
    const double mu = log_depth + 0.8 * g(rng);
    if (unif(rng) < de_fraction) {
      const Index r = static_cast<Index>(unif(rng) * conditions) % conditions;
      beta(j, r) = (unif(rng) < 0.5 ? -1 : 1) * (0.5 + unif(rng));
    }
    for (Index r = 0; r < conditions; ++r) {
      double lam = mu + beta(j, r) + std::sqrt(psi2) * g(rng);
      if (factors > 0) lam += fl.row(j).dot(rho.row(r));
      std::poisson_distribution<std::int64_t> p(s[r] * std::exp(lam));
      counts(j, r) = p(rng);
    }
    if (counts.row(j).sum() < 30) counts(j, 0) += 30;
  }
  std::vector<std::string> gids, cids;
  for (Index j = 0; j < genes; ++j) gids.push_back("g" + std::to_string(j));
  for (Index r = 0; r < conditions; ++r) cids.push_back("c" + std::to_string(r));
  CountMatrix x(counts, gids, cids);
  SizeFactors sf = compute_size_factors(x);
  FactorLoadings f = factors > 0 ? FactorLoadings(fl) : FactorLoadings::none(genes);
  return {std::move(x), std::move(sf), std::move(f), SubgroupPartition::single(conditions),
          std::move(beta)};
}

// Null, K - 1 single-condition patterns and one data-driven full-rank
// pattern, crossed with `levels` grid points.
inline PriorSpec toy_prior(Index conditions, int components, int levels) {
  std::vector<CovarianceComponent> comps{CovarianceComponent::null(conditions)};
  for (int k = 1; k + 1 < components; ++k)
    comps.push_back(CovarianceComponent::rank_one(Vector::Unit(conditions, k - 1),
                                                  "e" + std::to_string(k), false));
  Matrix u = 0.5 * Matrix::Identity(conditions, conditions);
  u.array() += 0.5;
  comps.push_back(CovarianceComponent::full_rank(u, "shared"));
  std::vector<double> grid;
  for (int l = 0; l < levels; ++l) grid.push_back(0.05 * std::pow(2.5, l));
  return PriorSpec(comps, grid);
}

}  // namespace fixture
