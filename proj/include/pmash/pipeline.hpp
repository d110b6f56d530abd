#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pmash/cov_refine.hpp"
#include "pmash/posterior.hpp"
#include "pmash/prior.hpp"
#include "pmash/vem.hpp"

namespace pmash {

struct RunConfig {
  FitConfig fit;
  double gridmult = kDefaultGridMult;
  double pseudocount = kDefaultPseudocount;
  double eps_inflate = kDefaultInflation;
  double z_thresh = kDefaultZThreshold;
  int npc = kDefaultNpc;
  int n_draws = kDefaultDraws;
  double lfsr_threshold = kDefaultLfsrThreshold;
  std::uint64_t seed = 1;
  int refine_sweeps = 100;
  // Start the final fit of strong genes from the refinement's parameters
  // instead of the prefit.
  bool seed_from_refine = false;

  void validate() const;
  /// Digest of every setting that can change numerical output; the thread
  /// count is excluded.
  std::string hash() const;
};

/// Canonical patterns plus PCA-initialised data-driven ones. When fewer
/// strong genes than npc exist, npc is reduced; with none, only the
/// canonical patterns are returned.
std::vector<CovarianceComponent> initial_components(const CountMatrix& x, const SizeFactors& s,
                                                    const RunConfig& config);

struct RefineOutcome {
  RefineResult result;
  std::vector<Index> strong_genes;
};

/// Runs covariance refinement on the strong genes, starting from the
/// corresponding rows of `prefit_params`. Without strong genes the
/// components are returned unchanged.
RefineOutcome refine_on_strong(const FitInputs& in, const ModelParams& prefit_params,
                               std::vector<CovarianceComponent> components,
                               const RunConfig& config);

/// Inflates the data-driven components and crosses all with the grid.
PriorSpec final_prior(const std::vector<CovarianceComponent>& components,
                      const std::vector<double>& grid, double eps_inflate);

/// Overwrites the strong-gene rows of `prefit_params` (and rho) with the
/// values learned during refinement.
ModelParams seeded_params(const ModelParams& prefit_params, const RefineOutcome& refine);

struct PipelineResult {
  PrefitResult prefit;
  RefineOutcome refine;
  PriorSpec prior;
  FitResult fit;
};

/// prefit -> init-cov -> refine-cov -> fit in one call.
PipelineResult run_full_pipeline(const FitInputs& in, const RunConfig& config);

}  // namespace pmash
