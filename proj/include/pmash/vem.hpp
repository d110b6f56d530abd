#pragma once

#include <span>
#include <vector>

#include "pmash/gaussian.hpp"
#include "pmash/types.hpp"

namespace pmash {

struct FitConfig {
  // Active-set tolerances on proposed changes of mu, psi2 and F rho'.
  double eps_mu = 1e-3;
  double eps_psi2 = 1e-3;
  double eps_upsilon = 1e-3;
  int max_outer_iters = 300;
  int inner_iters = 20;
  double inner_tol = 1e-8;
  double newton_damping = 1.0;
  int threads = 1;
  // When false every gene is re-processed on every sweep.
  bool use_active_set = true;
  // Baseline substituted for a subgroup with no counts: log(pc / sum s).
  double empty_subgroup_pseudocount = 0.1;

  void validate() const;
};

/// Per-gene data with the baseline and unwanted-variation offsets folded in.
struct GeneInput {
  Vector x;
  Vector log_s;
  Vector offset;  // mu_{m(r)} + Upsilon_r
  double log_factorial = 0;  // sum_r log(x_r!)
};

GeneInput make_gene_input(const Vector& x, const Vector& s, const Vector& mu_j,
                          const Vector& upsilon_j, const SubgroupPartition& partition);

/// Local ELBO of one mixture entry. Throws NumericalOverflow if any rate
/// exponent exceeds 700.
double local_elbo(const GeneInput& gene, const PriorCovariance& prior,
                  const Vector& gamma, const GaussianCov& v);

/// Responsibilities proportional to pi * exp(local ELBO).
Vector update_zeta(const Vector& pi, const Vector& f_local);

struct InnerResult {
  double elbo;
  int iterations;
};

/// Damped fixed-point / Newton updates of the Gaussian factor (gamma, V) of
/// one mixture entry. Never decreases the local ELBO.
InnerResult update_gamma_V(const GeneInput& gene, const PriorCovariance& prior,
                           Vector& gamma, GaussianCov& v, const FitConfig& config);

/// Per-gene, per-entry Gaussian factors and responsibilities.
class VariationalState {
 public:
  VariationalState() = default;
  VariationalState(Index genes, Index entries);

  Index genes() const { return genes_; }
  Index entries() const { return entries_; }

  Vector& gamma(Index j, Index e) { return gamma_[slot(j, e)]; }
  const Vector& gamma(Index j, Index e) const { return gamma_[slot(j, e)]; }
  GaussianCov& cov(Index j, Index e) { return cov_[slot(j, e)]; }
  const GaussianCov& cov(Index j, Index e) const { return cov_[slot(j, e)]; }

  std::span<const Vector> gammas(Index j) const {
    return {gamma_.data() + slot(j, 0), static_cast<std::size_t>(entries_)};
  }
  std::span<const GaussianCov> covs(Index j) const {
    return {cov_.data() + slot(j, 0), static_cast<std::size_t>(entries_)};
  }

  Matrix zeta;     // J x E
  Matrix f_local;  // J x E

 private:
  std::size_t slot(Index j, Index e) const {
    return static_cast<std::size_t>(j * entries_ + e);
  }

  Index genes_ = 0;
  Index entries_ = 0;
  std::vector<Vector> gamma_;
  std::vector<GaussianCov> cov_;
};

/// Closed-form baseline update. Throws EmptySubgroupCounts(m) when a
/// subgroup has no counts for this gene.
Vector update_mu(const Vector& x_j, const Vector& s, const SubgroupPartition& partition,
                 const Vector& zeta_j, std::span<const Vector> gammas,
                 std::span<const GaussianCov> covs, const Vector& upsilon_j);

/// Posterior second moments of the effect and random-effect parts of
/// theta = beta + eta under q(theta) = N(gamma, V).
struct LatentMoments {
  Matrix e_bb;          // E[beta beta'], filled when requested
  double e_eta_sq = 0;  // E[eta' eta]
  // Rank-one entries, beta = v * c with c = sqrt(w) u and v ~ N(0, 1):
  double e_v2 = 0;
  Vector e_vtheta;
};

LatentMoments latent_second_moments(const PriorCovariance& prior, const Vector& gamma,
                                    const GaussianCov& v, bool want_e_bb = true);

/// max(sum_e zeta_e E_e[eta'eta] / R, psi2 floor).
double update_psi2(const Vector& zeta_j, const Vector& eta_sq, Index conditions);

/// Damped Newton maximisation of the unwanted-variation objective for one
/// condition r:  sum_j x_jr f_j'rho - s_r sum_j exp(log_c_j + f_j'rho).
/// Columns of F that are identically zero keep their value.
Vector update_rho(const Vector& x_col, double s_r, const Matrix& f, const Vector& log_c,
                  Vector rho_init);

/// The objective maximised by update_rho.
double rho_objective(const Vector& x_col, double s_r, const Matrix& f, const Vector& log_c,
                     const Vector& rho);

/// Column means of the responsibilities.
Vector update_pi(const Matrix& zeta);

/// Per-gene ELBO, sum_e zeta_e (log pi_e + F_e - log zeta_e) with 0 log 0 = 0.
Vector gene_elbos(const Matrix& zeta, const Matrix& f_local, const Vector& pi);
double overall_elbo(const Matrix& zeta, const Matrix& f_local, const Vector& pi);

struct FitInputs {
  const CountMatrix& x;
  const SizeFactors& s;
  const FactorLoadings& f;
  const SubgroupPartition& partition;
};

struct PrefitResult {
  ModelParams params;
  Vector null_elbo;
  std::vector<double> elbo_trace;
  bool converged = false;
  int iterations = 0;
};

struct FitResult {
  ModelParams params;
  PriorSpec prior;
  VariationalState vstate;
  Matrix upsilon;  // per-gene offsets actually used (J x R)
  std::vector<double> elbo_trace;
  Vector gene_elbo;
  bool converged = false;
  int iterations = 0;
};

/// Initial estimates of mu, psi2 and rho from the model without effects.
PrefitResult prefit(const FitInputs& in, const FitConfig& config);

/// Variational EM with fixed prior covariances, using the active-set sweep.
FitResult fit(const FitInputs& in, PriorSpec prior, const ModelParams& init,
              const FitConfig& config);

/// Re-optimises the variational factors and responsibilities of every gene
/// for fixed parameters and prior, e.g. to rebuild a posterior from an
/// archived model.
FitResult e_step_only(const FitInputs& in, PriorSpec prior, const ModelParams& params,
                      const FitConfig& config);

}  // namespace pmash
