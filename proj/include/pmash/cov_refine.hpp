#pragma once

#include <vector>

#include "pmash/vem.hpp"

namespace pmash {

/// Responsibility-weighted average of E[beta beta'], symmetrised. Throws
/// ZeroResponsibility when the weights sum to zero.
Matrix update_fullrank(const Vector& zeta_h, const std::vector<Matrix>& e_bb);

/// Rank-one pattern maximising the expected complete-data likelihood with
/// beta = v u. Throws ZeroResponsibility when the denominator vanishes.
Vector update_rank1(const Vector& zeta_g, const Vector& psi2, const Vector& e_v2,
                    const std::vector<Vector>& e_vtheta);

struct RefineConfig {
  FitConfig fit;
  int max_sweeps = 100;
  double rel_tol = 1e-6;
  // Sweeps below the responsibility floor before a component is frozen.
  int freeze_after = 3;
  double freeze_floor = 1e-8;  // times the number of genes
};

struct RefineResult {
  // Every input component, with the data-driven ones refined.
  std::vector<CovarianceComponent> components;
  // Parameters learned alongside, for the strong genes only.
  ModelParams params;
  Vector pi;
  std::vector<double> elbo_trace;
  std::vector<bool> frozen;
  bool converged = false;
  int sweeps = 0;

  /// The refined data-driven components alone.
  std::vector<CovarianceComponent> data_driven() const;
};

/// Refines the data-driven components on (typically strong-signal) genes with
/// a single unit scale. Canonical and null components stay fixed.
RefineResult refine_covariances(const FitInputs& in,
                                std::vector<CovarianceComponent> components,
                                const ModelParams& init, const RefineConfig& config);

}  // namespace pmash
