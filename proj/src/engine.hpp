#pragma once

// Shared machinery behind fit, prefit and covariance refinement.

#include "pmash/vem.hpp"

namespace pmash::detail {

class Engine {
 public:
  Engine(const FitInputs& in, PriorSpec prior, ModelParams params, const FitConfig& config);

  Index genes() const { return x_.rows(); }
  Index conditions() const { return x_.cols(); }
  Index entries() const { return prior_.size(); }

  const PriorSpec& prior() const { return prior_; }
  void set_prior(PriorSpec prior);
  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }
  const Matrix& upsilon() const { return upsilon_; }
  Matrix& upsilon() { return upsilon_; }
  const VariationalState& state() const { return state_; }
  VariationalState& state() { return state_; }
  const FitConfig& config() const { return config_; }
  const Matrix& counts() const { return x_; }
  const Vector& size_factors() const { return s_; }
  const FitInputs& inputs() const { return in_; }

  GeneInput gene_input(Index j) const;
  PriorCovariance prior_cov(Index j, Index e) const;

  /// gamma = 0, V = prior covariance for every entry of gene j.
  void reset_gene(Index j);
  /// Step II for every entry of gene j, refreshing its local ELBOs.
  void e_step_gene(Index j);
  /// Local ELBOs of gene j at the current factors, without re-optimising.
  void refresh_local_elbos(Index j);

  void e_step_all();
  void update_zeta_gene(Index j);
  void update_zeta_all();
  void update_pi();

  double gene_elbo(Index j) const;
  double overall() const;

  /// Step III proposal for gene j, with the empty-subgroup substitution.
  Vector propose_mu(Index j) const;
  /// E[eta'eta] for every entry of gene j.
  Vector eta_sq(Index j) const;
  /// Step IV proposal for gene j.
  double propose_psi2(Index j) const;
  /// Step V: new rho (R x D) given baselines `mu` (J x M).
  Matrix propose_rho(const Matrix& mu) const;

 private:
  const FitInputs& in_;
  FitConfig config_;
  Matrix x_;
  Vector s_;
  Vector log_fact_;
  PriorSpec prior_;
  ModelParams params_;
  Matrix upsilon_;
  VariationalState state_;
};

}  // namespace pmash::detail
