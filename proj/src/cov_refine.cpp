#include "pmash/cov_refine.hpp"

#include <cmath>

#include "engine.hpp"
#include "pmash/core_model.hpp"
#include "pmash/parallel.hpp"

namespace pmash {

Matrix update_fullrank(const Vector& zeta_h, const std::vector<Matrix>& e_bb) {
  require(static_cast<std::size_t>(zeta_h.size()) == e_bb.size(), ErrorCode::DimensionMismatch,
          "responsibilities and moments differ in length");
  const double total = zeta_h.sum();
  if (!(total > 0)) fail(ErrorCode::ZeroResponsibility, "component received no weight");
  Matrix u = Matrix::Zero(e_bb.front().rows(), e_bb.front().cols());
  for (Index j = 0; j < zeta_h.size(); ++j) {
    if (zeta_h[j] > 0) u += zeta_h[j] * e_bb[static_cast<std::size_t>(j)];
  }
  u /= total;
  return 0.5 * (u + u.transpose());
}

Vector update_rank1(const Vector& zeta_g, const Vector& psi2, const Vector& e_v2,
                    const std::vector<Vector>& e_vtheta) {
  require(zeta_g.size() == psi2.size() && zeta_g.size() == e_v2.size() &&
              static_cast<std::size_t>(zeta_g.size()) == e_vtheta.size(),
          ErrorCode::DimensionMismatch, "rank-one update inputs differ in length");
  double denom = 0;
  Vector num = Vector::Zero(e_vtheta.front().size());
  for (Index j = 0; j < zeta_g.size(); ++j) {
    if (!(zeta_g[j] > 0)) continue;
    denom += zeta_g[j] * e_v2[j] / psi2[j];
    num += (zeta_g[j] / psi2[j]) * e_vtheta[static_cast<std::size_t>(j)];
  }
  if (!(denom > 0)) fail(ErrorCode::ZeroResponsibility, "component received no weight");
  return num / denom;
}

std::vector<CovarianceComponent> RefineResult::data_driven() const {
  std::vector<CovarianceComponent> out;
  for (const auto& c : components) {
    if (c.data_driven) out.push_back(c);
  }
  return out;
}

RefineResult refine_covariances(const FitInputs& in,
                                std::vector<CovarianceComponent> components,
                                const ModelParams& init, const RefineConfig& config) {
  require(config.max_sweeps >= 1 && config.rel_tol > 0, ErrorCode::InvalidArgument,
          "refinement limits must be positive");
  for (const auto& c : components) c.check();
  const std::vector<double> unit_grid{1.0};
  detail::Engine eng(in, PriorSpec(components, unit_grid), init, config.fit);
  const Index jn = eng.genes();
  const Index rn = eng.conditions();
  const Index en = eng.entries();
  const int threads = config.fit.threads;

  RefineResult out;
  std::vector<int> starved(components.size(), 0);
  out.frozen.assign(components.size(), false);

  struct Moments {
    Matrix e_bb;
    double e_v2 = 0;
    Vector e_vtheta;
  };

  for (int sweep = 1; sweep <= config.max_sweeps; ++sweep) {
    out.sweeps = sweep;
    eng.e_step_all();
    eng.update_zeta_all();
    if (sweep == 1) out.elbo_trace.push_back(eng.overall());

    std::vector<Index> entry_of(components.size(), -1);
    for (Index e = 0; e < en; ++e) {
      entry_of[static_cast<std::size_t>(eng.prior().entries()[static_cast<std::size_t>(e)].component)] = e;
    }

    std::vector<Moments> mom(static_cast<std::size_t>(jn * en));
    parallel_for(jn, threads, [&](Index j) {
      for (std::size_t k = 0; k < components.size(); ++k) {
        const auto& c = components[k];
        if (!c.data_driven || out.frozen[k]) continue;
        const Index e = entry_of[k];
        if (!(eng.state().zeta(j, e) > 0)) continue;
        const PriorCovariance pc = eng.prior_cov(j, e);
        LatentMoments lm = latent_second_moments(pc, eng.state().gamma(j, e),
                                                 eng.state().cov(j, e),
                                                 c.kind == CovarianceKind::FullRank);
        auto& slot = mom[static_cast<std::size_t>(j * en + e)];
        slot.e_bb = std::move(lm.e_bb);
        slot.e_v2 = lm.e_v2;
        slot.e_vtheta = std::move(lm.e_vtheta);
      }
    });

    for (std::size_t k = 0; k < components.size(); ++k) {
      auto& c = components[k];
      if (!c.data_driven || out.frozen[k]) continue;
      const Index e = entry_of[k];
      const Vector zeta_h = eng.state().zeta.col(e);
      if (zeta_h.sum() < config.freeze_floor * static_cast<double>(jn)) {
        if (++starved[k] >= config.freeze_after) out.frozen[k] = true;
      } else {
        starved[k] = 0;
      }
      if (!(zeta_h.sum() > 0)) continue;
      if (c.kind == CovarianceKind::FullRank) {
        std::vector<Matrix> e_bb(static_cast<std::size_t>(jn), Matrix::Zero(rn, rn));
        for (Index j = 0; j < jn; ++j) {
          if (zeta_h[j] > 0) e_bb[static_cast<std::size_t>(j)] = mom[static_cast<std::size_t>(j * en + e)].e_bb;
        }
        c.full = update_fullrank(zeta_h, e_bb);
      } else if (c.kind == CovarianceKind::RankOne) {
        Vector e_v2 = Vector::Zero(jn);
        std::vector<Vector> e_vt(static_cast<std::size_t>(jn), Vector::Zero(rn));
        for (Index j = 0; j < jn; ++j) {
          if (!(zeta_h[j] > 0)) continue;
          const auto& m = mom[static_cast<std::size_t>(j * en + e)];
          e_v2[j] = m.e_v2;
          e_vt[static_cast<std::size_t>(j)] = m.e_vtheta;
        }
        c.vec = update_rank1(zeta_h, eng.params().psi2, e_v2, e_vt);
      }
    }
    eng.set_prior(PriorSpec(components, unit_grid, eng.prior().pi()));

    Matrix mu_new(jn, eng.params().mu.cols());
    parallel_for(jn, threads, [&](Index j) { mu_new.row(j) = eng.propose_mu(j).transpose(); });
    eng.params().mu = mu_new;
    Vector psi2_new(jn);
    parallel_for(jn, threads, [&](Index j) { psi2_new[j] = eng.propose_psi2(j); });
    eng.params().psi2 = psi2_new;
    if (in.f.factors() > 0) {
      eng.params().rho = eng.propose_rho(eng.params().mu);
      eng.upsilon() = ruv_offset(in.f, eng.params().rho, rn);
    }
    eng.update_pi();
    parallel_for(jn, threads, [&](Index j) { eng.refresh_local_elbos(j); });

    const double prev = out.elbo_trace.back();
    const double cur = eng.overall();
    out.elbo_trace.push_back(cur);
    if (std::abs(cur - prev) < config.rel_tol * std::max(1.0, std::abs(cur))) {
      out.converged = true;
      break;
    }
  }
  out.components = std::move(components);
  out.params = eng.params();
  out.pi = eng.prior().pi();
  return out;
}

}  // namespace pmash
