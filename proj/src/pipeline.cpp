#include "pmash/pipeline.hpp"

#include <algorithm>
#include <sstream>

#include "pmash/io.hpp"

namespace pmash {

void RunConfig::validate() const {
  fit.validate();
  require(gridmult > 1, ErrorCode::InvalidArgument, "gridmult must exceed 1");
  require(pseudocount > 0 && eps_inflate >= 0 && z_thresh > 0, ErrorCode::InvalidArgument,
          "pseudocount and z threshold must be positive, inflation nonnegative");
  require(npc >= 1 && n_draws >= 100 && refine_sweeps >= 1, ErrorCode::InvalidArgument,
          "npc, draws and refinement sweeps must be positive (draws at least 100)");
  require(lfsr_threshold > 0 && lfsr_threshold < 1, ErrorCode::InvalidArgument,
          "lfsr threshold must lie in (0, 1)");
}

std::string RunConfig::hash() const {
  std::ostringstream ss;
  ss.precision(17);
  ss << "eps_mu=" << fit.eps_mu << ";eps_psi2=" << fit.eps_psi2
     << ";eps_upsilon=" << fit.eps_upsilon << ";max_outer_iters=" << fit.max_outer_iters
     << ";inner_iters=" << fit.inner_iters << ";inner_tol=" << fit.inner_tol
     << ";newton_damping=" << fit.newton_damping << ";active_set=" << fit.use_active_set
     << ";empty_pc=" << fit.empty_subgroup_pseudocount << ";gridmult=" << gridmult
     << ";pseudocount=" << pseudocount << ";eps_inflate=" << eps_inflate
     << ";z_thresh=" << z_thresh << ";npc=" << npc << ";n_draws=" << n_draws
     << ";lfsr_threshold=" << lfsr_threshold << ";seed=" << seed
     << ";refine_sweeps=" << refine_sweeps << ";seed_from_refine=" << seed_from_refine;
  return fnv1a_hex(ss.str());
}

std::vector<CovarianceComponent> initial_components(const CountMatrix& x, const SizeFactors& s,
                                                    const RunConfig& config) {
  auto out = canonical_covariances(x.conditions());
  const ZScoreMatrix z = multinomial_gof_zscores(x, s, config.z_thresh);
  const int npc = std::min<int>({config.npc, static_cast<int>(z.strong_set.size()),
                                 static_cast<int>(x.conditions())});
  if (npc >= 1) {
    for (auto& c : init_data_driven(z, npc)) out.push_back(std::move(c));
  }
  return out;
}

RefineOutcome refine_on_strong(const FitInputs& in, const ModelParams& prefit_params,
                               std::vector<CovarianceComponent> components,
                               const RunConfig& config) {
  RefineOutcome out;
  out.strong_genes = multinomial_gof_zscores(in.x, in.s, config.z_thresh).strong_set;
  const bool any_dd = std::any_of(components.begin(), components.end(),
                                  [](const CovarianceComponent& c) { return c.data_driven; });
  if (out.strong_genes.empty() || !any_dd) {
    out.result.components = std::move(components);
    out.result.params = prefit_params.subset_genes(out.strong_genes);
    out.result.converged = true;
    return out;
  }
  const CountMatrix xs = in.x.subset_genes(out.strong_genes);
  const FactorLoadings fs = in.f.subset_genes(out.strong_genes);
  const FitInputs sub{xs, in.s, fs, in.partition};
  RefineConfig rc;
  rc.fit = config.fit;
  rc.max_sweeps = config.refine_sweeps;
  out.result = refine_covariances(sub, std::move(components),
                                  prefit_params.subset_genes(out.strong_genes), rc);
  return out;
}

PriorSpec final_prior(const std::vector<CovarianceComponent>& components,
                      const std::vector<double>& grid, double eps_inflate) {
  std::vector<CovarianceComponent> comps;
  for (const auto& c : components) {
    comps.push_back(c.data_driven && !c.inflated ? inflate_diagonal(c, eps_inflate) : c);
  }
  return PriorSpec(std::move(comps), grid);
}

ModelParams seeded_params(const ModelParams& prefit_params, const RefineOutcome& refine) {
  ModelParams out = prefit_params;
  const auto& rp = refine.result.params;
  if (rp.mu.rows() != static_cast<Index>(refine.strong_genes.size())) return out;
  for (std::size_t i = 0; i < refine.strong_genes.size(); ++i) {
    const Index j = refine.strong_genes[i];
    out.mu.row(j) = rp.mu.row(static_cast<Index>(i));
    out.psi2[j] = rp.psi2[static_cast<Index>(i)];
  }
  if (rp.rho.size() == out.rho.size()) out.rho = rp.rho;
  return out;
}

PipelineResult run_full_pipeline(const FitInputs& in, const RunConfig& config) {
  config.validate();
  PipelineResult out;
  out.prefit = prefit(in, config.fit);
  out.refine = refine_on_strong(in, out.prefit.params, initial_components(in.x, in.s, config),
                                config);
  const auto grid = build_scaling_grid(in.x, in.s, config.gridmult, config.pseudocount);
  out.prior = final_prior(out.refine.result.components, grid, config.eps_inflate);
  const ModelParams init =
      config.seed_from_refine ? seeded_params(out.prefit.params, out.refine) : out.prefit.params;
  out.fit = fit(in, out.prior, init, config.fit);
  return out;
}

}  // namespace pmash
