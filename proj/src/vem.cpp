#include "pmash/vem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "engine.hpp"
#include "pmash/core_model.hpp"
#include "pmash/parallel.hpp"

namespace pmash {

namespace {

constexpr double kMaxExponent = 700.0;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kZetaFloor = 1e-250;

// Expected Poisson log-likelihood sum_r x_r (log s_r + o_r + g_r) - exp(...).
// Returns -inf when an exponent overflows.
double expected_loglik(const GeneInput& gene, const Vector& gamma, const Vector& v_diag) {
  double total = -gene.log_factorial;
  for (Index r = 0; r < gene.x.size(); ++r) {
    const double lin = gene.log_s[r] + gene.offset[r] + gamma[r];
    const double e = lin + 0.5 * v_diag[r];
    if (!(e <= kMaxExponent)) return kNegInf;
    total += gene.x[r] * lin - std::exp(e);
  }
  return total;
}

struct CovTerms {
  Vector diag;
  double log_det;
  double trace_solve;
};

CovTerms cov_terms(const GaussianCov& v, const PriorCovariance& prior) {
  return {v.diagonal(), v.log_det(), prior.trace_solve(v)};
}

double elbo_from_terms(const GeneInput& gene, const PriorCovariance& prior,
                       const Vector& gamma, const CovTerms& t) {
  const double ll = expected_loglik(gene, gamma, t.diag);
  if (!std::isfinite(ll) || !std::isfinite(t.log_det)) return kNegInf;
  const double kl = 0.5 * (t.trace_solve + gamma.dot(prior.solve(gamma)) -
                           static_cast<double>(gamma.size()) + prior.log_det() - t.log_det);
  return ll - kl;
}

double log_sum_exp(const Vector& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

// Shared body of the baseline update; `fallback_pc` <= 0 means throw on an
// empty subgroup.
Vector mu_update_impl(const Vector& x_j, const Vector& s, const SubgroupPartition& partition,
                      const Vector& zeta_j, std::span<const Vector> gammas,
                      std::span<const GaussianCov> covs, const Vector& upsilon_j,
                      double fallback_pc) {
  const int m_count = partition.subgroups();
  Vector mu(m_count);
  const Index entries = zeta_j.size();
  std::vector<Vector> diags(static_cast<std::size_t>(entries));
  for (Index e = 0; e < entries; ++e) {
    if (zeta_j[e] > 0) diags[static_cast<std::size_t>(e)] = covs[static_cast<std::size_t>(e)].diagonal();
  }
  for (int m = 0; m < m_count; ++m) {
    const auto& members = partition.members(m);
    double num = 0;
    double s_sum = 0;
    for (Index r : members) {
      num += x_j[r];
      s_sum += s[r];
    }
    if (num == 0) {
      if (fallback_pc <= 0) {
        fail(ErrorCode::EmptySubgroupCounts,
             "subgroup " + std::to_string(m) + " has no counts");
      }
      mu[m] = std::log(fallback_pc / s_sum);
      continue;
    }
    std::vector<double> terms;
    terms.reserve(static_cast<std::size_t>(entries) * members.size());
    for (Index e = 0; e < entries; ++e) {
      if (!(zeta_j[e] > 0)) continue;
      const auto& g = gammas[static_cast<std::size_t>(e)];
      const auto& d = diags[static_cast<std::size_t>(e)];
      for (Index r : members) {
        terms.push_back(std::log(zeta_j[e]) + std::log(s[r]) + upsilon_j[r] + g[r] + 0.5 * d[r]);
      }
    }
    const Vector t = Eigen::Map<const Vector>(terms.data(), static_cast<Index>(terms.size()));
    mu[m] = std::log(num) - log_sum_exp(t);
  }
  return mu;
}

}  // namespace

void FitConfig::validate() const {
  require(eps_mu > 0 && eps_psi2 > 0 && eps_upsilon > 0, ErrorCode::InvalidArgument,
          "active-set tolerances must be positive");
  require(max_outer_iters >= 1 && inner_iters >= 1, ErrorCode::InvalidArgument,
          "iteration limits must be positive");
  require(inner_tol > 0, ErrorCode::InvalidArgument, "inner tolerance must be positive");
  require(newton_damping > 0 && newton_damping <= 1, ErrorCode::InvalidArgument,
          "newton damping must lie in (0, 1]");
  require(threads >= 1, ErrorCode::InvalidArgument, "thread count must be positive");
}

GeneInput make_gene_input(const Vector& x, const Vector& s, const Vector& mu_j,
                          const Vector& upsilon_j, const SubgroupPartition& partition) {
  GeneInput g;
  g.x = x;
  g.log_s = s.array().log();
  g.offset.resize(x.size());
  for (Index r = 0; r < x.size(); ++r) g.offset[r] = mu_j[partition.of(r)] + upsilon_j[r];
  g.log_factorial = 0;
  for (Index r = 0; r < x.size(); ++r) g.log_factorial += std::lgamma(x[r] + 1.0);
  return g;
}

double local_elbo(const GeneInput& gene, const PriorCovariance& prior, const Vector& gamma,
                  const GaussianCov& v) {
  const Vector diag = v.diagonal();
  for (Index r = 0; r < gamma.size(); ++r) {
    const double e = gene.log_s[r] + gene.offset[r] + gamma[r] + 0.5 * diag[r];
    if (!(e <= kMaxExponent)) {
      fail(ErrorCode::NumericalOverflow,
           "rate exponent " + std::to_string(e) + " exceeds " + std::to_string(kMaxExponent));
    }
  }
  return elbo_from_terms(gene, prior, gamma, cov_terms(v, prior));
}

Vector update_zeta(const Vector& pi, const Vector& f_local) {
  require(pi.size() == f_local.size(), ErrorCode::DimensionMismatch,
          "pi and local ELBOs differ in length");
  Vector logw = Vector::Constant(pi.size(), kNegInf);
  for (Index e = 0; e < pi.size(); ++e) {
    if (pi[e] > 0 && std::isfinite(f_local[e])) logw[e] = std::log(pi[e]) + f_local[e];
  }
  const double m = logw.maxCoeff();
  if (!std::isfinite(m)) fail(ErrorCode::AllZeroWeights, "no mixture entry has positive weight");
  Vector zeta = (logw.array() - m).exp();
  zeta /= zeta.sum();
  // Negligible weights are flushed so that pooled weights cannot underflow.
  zeta = (zeta.array() < kZetaFloor).select(0.0, zeta);
  return zeta / zeta.sum();
}

InnerResult update_gamma_V(const GeneInput& gene, const PriorCovariance& prior,
                           Vector& gamma, GaussianCov& v, const FitConfig& config) {
  CovTerms cur = cov_terms(v, prior);
  double f = elbo_from_terms(gene, prior, gamma, cur);
  if (!std::isfinite(f)) {
    // Entry point overflowed; restart from the prior.
    gamma.setZero();
    v = prior.as_cov();
    cur = cov_terms(v, prior);
    f = elbo_from_terms(gene, prior, gamma, cur);
    if (!std::isfinite(f)) {
      fail(ErrorCode::NumericalOverflow, "local ELBO is not finite at the prior");
    }
  }
  int t = 0;
  for (; t < config.inner_iters; ++t) {
    const Vector a = (gene.log_s + gene.offset + gamma + 0.5 * cur.diag).array().exp().matrix();
    const Vector grad = gene.x - a - prior.solve(gamma);
    GaussianCov v_new = prior.precision_update(a);
    CovTerms next = cov_terms(v_new, prior);

    bool accepted = false;
    double f_new = kNegInf;
    double best = kNegInf;
    Vector cand;
    // Newton direction with the refreshed covariance, then with the old one.
    for (int pass = 0; pass < 2 && !accepted; ++pass) {
      const GaussianCov& precond = pass == 0 ? v_new : v;
      const CovTerms& terms = pass == 0 ? next : cur;
      const Vector dir = precond.apply(grad);
      double step = config.newton_damping;
      for (int h = 0; h <= 10; ++h, step *= 0.5) {
        cand = gamma + step * dir;
        const double fc = elbo_from_terms(gene, prior, cand, terms);
        best = std::max(best, fc);
        if (fc >= f) {
          f_new = fc;
          accepted = true;
          if (pass == 1) {
            v_new = v;
            next = cur;
          }
          break;
        }
      }
    }
    if (!accepted) {
      if (f - best > 1e-6 * std::max(1.0, std::abs(f))) {
        fail(ErrorCode::DivergedInnerLoop, "local ELBO decreased after damping");
      }
      break;
    }
    const double change = f_new - f;
    gamma = std::move(cand);
    v = std::move(v_new);
    cur = std::move(next);
    f = f_new;
    if (change <= config.inner_tol * std::max(1.0, std::abs(f))) {
      ++t;
      break;
    }
  }
  return {f, t};
}

VariationalState::VariationalState(Index genes, Index entries)
    : zeta(Matrix::Zero(genes, entries)),
      f_local(Matrix::Zero(genes, entries)),
      genes_(genes),
      entries_(entries),
      gamma_(static_cast<std::size_t>(genes * entries)),
      cov_(static_cast<std::size_t>(genes * entries)) {}

Vector update_mu(const Vector& x_j, const Vector& s, const SubgroupPartition& partition,
                 const Vector& zeta_j, std::span<const Vector> gammas,
                 std::span<const GaussianCov> covs, const Vector& upsilon_j) {
  return mu_update_impl(x_j, s, partition, zeta_j, gammas, covs, upsilon_j, 0.0);
}

LatentMoments latent_second_moments(const PriorCovariance& prior, const Vector& gamma,
                                    const GaussianCov& v, bool want_e_bb) {
  LatentMoments out;
  const Index dim = gamma.size();
  const double psi2 = prior.psi2();
  const double theta_sq = gamma.squaredNorm() + v.trace();
  switch (prior.kind()) {
    case CovarianceKind::Null:
      out.e_eta_sq = theta_sq;
      if (want_e_bb) out.e_bb = Matrix::Zero(dim, dim);
      break;
    case CovarianceKind::RankOne: {
      const Vector& c = prior.factor();
      const double cc = c.squaredNorm();
      const double cond_var = 1.0 / (cc / psi2 + 1.0);
      const Vector m = (cond_var / psi2) * c;
      const double mg = m.dot(gamma);
      out.e_v2 = cond_var + mg * mg + v.quad(m);
      out.e_vtheta = gamma * mg + v.apply(m);
      out.e_eta_sq = theta_sq - 2.0 * c.dot(out.e_vtheta) + cc * out.e_v2;
      if (want_e_bb) out.e_bb = out.e_v2 * (c * c.transpose());
      break;
    }
    case CovarianceKind::FullRank: {
      const Matrix sigma_b = prior.beta_cov();
      const Matrix& s_inv = prior.inverse();
      const Matrix a = sigma_b * s_inv;
      const Matrix cond = sigma_b - a * sigma_b;
      const Vector s_inv_g = s_inv * gamma;
      const Matrix v_dense = v.to_dense();
      const double tr_v_s2 = (s_inv * v_dense).cwiseProduct(s_inv).sum();
      out.e_eta_sq = cond.trace() + psi2 * psi2 * (s_inv_g.squaredNorm() + tr_v_s2);
      if (want_e_bb) {
        const Vector ag = a * gamma;
        Matrix e_bb = cond + ag * ag.transpose() + a * v_dense * a.transpose();
        out.e_bb = 0.5 * (e_bb + e_bb.transpose());
      }
      break;
    }
  }
  return out;
}

double update_psi2(const Vector& zeta_j, const Vector& eta_sq, Index conditions) {
  require(zeta_j.size() == eta_sq.size(), ErrorCode::DimensionMismatch,
          "responsibilities and moments differ in length");
  double total = 0;
  for (Index e = 0; e < zeta_j.size(); ++e) {
    if (zeta_j[e] > 0) total += zeta_j[e] * eta_sq[e];
  }
  return std::max(total / static_cast<double>(conditions), kPsi2Floor);
}

double rho_objective(const Vector& x_col, double s_r, const Matrix& f, const Vector& log_c,
                     const Vector& rho) {
  const Vector eta = f * rho;
  double total = 0;
  for (Index j = 0; j < f.rows(); ++j) {
    total += x_col[j] * eta[j] - s_r * std::exp(log_c[j] + eta[j]);
  }
  return total;
}

Vector update_rho(const Vector& x_col, double s_r, const Matrix& f, const Vector& log_c,
                  Vector rho) {
  std::vector<Index> active;
  for (Index d = 0; d < f.cols(); ++d) {
    if (!f.col(d).isZero(0)) active.push_back(d);
  }
  if (active.empty()) return rho;
  const Index jn = f.rows();
  const Index dn = static_cast<Index>(active.size());
  Matrix fa(jn, dn);
  Vector ra(dn);
  for (Index i = 0; i < dn; ++i) {
    fa.col(i) = f.col(active[static_cast<std::size_t>(i)]);
    ra[i] = rho[active[static_cast<std::size_t>(i)]];
  }
  auto objective = [&](const Vector& r) {
    const Vector eta = fa * r;
    double total = 0;
    for (Index j = 0; j < jn; ++j) total += x_col[j] * eta[j] - s_r * std::exp(log_c[j] + eta[j]);
    return total;
  };
  double obj = objective(ra);
  for (int it = 0; it < 50; ++it) {
    const Vector w = (s_r * (log_c + fa * ra).array().exp()).matrix();
    const Vector grad = fa.transpose() * (x_col - w);
    if (grad.cwiseAbs().maxCoeff() < 1e-8) break;
    const Matrix h = fa.transpose() * w.asDiagonal() * fa;
    const Vector step = h.ldlt().solve(grad);
    if (!step.allFinite()) break;
    double t = 1.0;
    bool improved = false;
    for (int k = 0; k < 30; ++k, t *= 0.5) {
      const Vector cand = ra + t * step;
      const double oc = objective(cand);
      if (oc >= obj) {
        improved = oc > obj || k == 0;
        ra = cand;
        obj = oc;
        break;
      }
    }
    if (!improved) break;
  }
  for (Index i = 0; i < dn; ++i) rho[active[static_cast<std::size_t>(i)]] = ra[i];
  return rho;
}

Vector update_pi(const Matrix& zeta) {
  require(zeta.rows() >= 1, ErrorCode::InvalidArgument, "no genes to pool");
  Vector pi = Vector::Zero(zeta.cols());
  for (Index j = 0; j < zeta.rows(); ++j) pi += zeta.row(j).transpose();
  return pi / static_cast<double>(zeta.rows());
}

Vector gene_elbos(const Matrix& zeta, const Matrix& f_local, const Vector& pi) {
  Vector out = Vector::Zero(zeta.rows());
  for (Index j = 0; j < zeta.rows(); ++j) {
    double total = 0;
    for (Index e = 0; e < zeta.cols(); ++e) {
      const double z = zeta(j, e);
      if (z > 0) total += z * (std::log(pi[e]) + f_local(j, e) - std::log(z));
    }
    out[j] = total;
  }
  return out;
}

double overall_elbo(const Matrix& zeta, const Matrix& f_local, const Vector& pi) {
  return gene_elbos(zeta, f_local, pi).sum();
}

// ---------------------------------------------------------------------------

namespace detail {

Engine::Engine(const FitInputs& in, PriorSpec prior, ModelParams params,
               const FitConfig& config)
    : in_(in),
      config_(config),
      x_(in.x.as_real()),
      s_(in.s.s),
      prior_(std::move(prior)),
      params_(std::move(params)) {
  config_.validate();
  const Index jn = x_.rows();
  const Index rn = x_.cols();
  require(s_.size() == rn, ErrorCode::DimensionMismatch, "size factors do not match conditions");
  require(in.f.f.rows() == jn, ErrorCode::DimensionMismatch,
          "factor loadings do not match genes");
  require(in.partition.conditions() == rn, ErrorCode::DimensionMismatch,
          "partition does not match conditions");
  require(prior_.dim() == rn, ErrorCode::DimensionMismatch, "prior does not match conditions");
  require(params_.mu.rows() == jn && params_.mu.cols() == in.partition.subgroups(),
          ErrorCode::DimensionMismatch, "mu has the wrong shape");
  if (params_.rho.size() == 0) params_.rho = Matrix::Zero(rn, in.f.factors());
  params_.validate();
  upsilon_ = ruv_offset(in.f, params_.rho, rn);
  log_fact_.resize(jn);
  for (Index j = 0; j < jn; ++j) {
    double lf = 0;
    for (Index r = 0; r < rn; ++r) lf += std::lgamma(x_(j, r) + 1.0);
    log_fact_[j] = lf;
  }
  state_ = VariationalState(jn, prior_.size());
  for (Index j = 0; j < jn; ++j) reset_gene(j);
  state_.zeta.rowwise() = prior_.pi().transpose();
}

void Engine::set_prior(PriorSpec prior) {
  require(prior.size() == prior_.size(), ErrorCode::DimensionMismatch,
          "replacement prior changes the number of entries");
  prior_ = std::move(prior);
}

GeneInput Engine::gene_input(Index j) const {
  GeneInput g;
  const Index rn = conditions();
  g.x = x_.row(j).transpose();
  g.log_s = s_.array().log();
  g.offset.resize(rn);
  for (Index r = 0; r < rn; ++r) {
    g.offset[r] = params_.mu(j, in_.partition.of(r)) + upsilon_(j, r);
  }
  g.log_factorial = log_fact_[j];
  return g;
}

PriorCovariance Engine::prior_cov(Index j, Index e) const {
  return PriorCovariance(prior_.component_of(e), prior_.scale(e), params_.psi2[j]);
}

void Engine::reset_gene(Index j) {
  for (Index e = 0; e < entries(); ++e) {
    const PriorCovariance pc = prior_cov(j, e);
    state_.gamma(j, e) = Vector::Zero(conditions());
    state_.cov(j, e) = pc.as_cov();
  }
}

void Engine::e_step_gene(Index j) {
  const GeneInput g = gene_input(j);
  for (Index e = 0; e < entries(); ++e) {
    const PriorCovariance pc = prior_cov(j, e);
    const InnerResult res =
        update_gamma_V(g, pc, state_.gamma(j, e), state_.cov(j, e), config_);
    state_.f_local(j, e) = res.elbo;
  }
}

void Engine::refresh_local_elbos(Index j) {
  const GeneInput g = gene_input(j);
  for (Index e = 0; e < entries(); ++e) {
    const PriorCovariance pc = prior_cov(j, e);
    state_.f_local(j, e) =
        elbo_from_terms(g, pc, state_.gamma(j, e), cov_terms(state_.cov(j, e), pc));
  }
}

void Engine::e_step_all() {
  parallel_for(genes(), config_.threads, [&](Index j) { e_step_gene(j); });
}

void Engine::update_zeta_gene(Index j) {
  state_.zeta.row(j) = update_zeta(prior_.pi(), state_.f_local.row(j).transpose()).transpose();
}

void Engine::update_zeta_all() {
  for (Index j = 0; j < genes(); ++j) update_zeta_gene(j);
}

void Engine::update_pi() {
  Vector pi = pmash::update_pi(state_.zeta);
  pi /= pi.sum();
  prior_.set_pi(std::move(pi));
}

double Engine::gene_elbo(Index j) const {
  double total = 0;
  const Vector& pi = prior_.pi();
  for (Index e = 0; e < entries(); ++e) {
    const double z = state_.zeta(j, e);
    if (z > 0) total += z * (std::log(pi[e]) + state_.f_local(j, e) - std::log(z));
  }
  return total;
}

double Engine::overall() const {
  double total = 0;
  for (Index j = 0; j < genes(); ++j) total += gene_elbo(j);
  return total;
}

Vector Engine::propose_mu(Index j) const {
  return mu_update_impl(x_.row(j).transpose(), s_, in_.partition,
                        state_.zeta.row(j).transpose(), state_.gammas(j), state_.covs(j),
                        upsilon_.row(j).transpose(), config_.empty_subgroup_pseudocount);
}

Vector Engine::eta_sq(Index j) const {
  Vector out = Vector::Zero(entries());
  for (Index e = 0; e < entries(); ++e) {
    if (!(state_.zeta(j, e) > 0)) continue;
    const PriorCovariance pc = prior_cov(j, e);
    out[e] = latent_second_moments(pc, state_.gamma(j, e), state_.cov(j, e), false).e_eta_sq;
  }
  return out;
}

double Engine::propose_psi2(Index j) const {
  return update_psi2(state_.zeta.row(j).transpose(), eta_sq(j), conditions());
}

Matrix Engine::propose_rho(const Matrix& mu) const {
  const Index jn = genes();
  const Index rn = conditions();
  Matrix rho = params_.rho;
  if (in_.f.factors() == 0) return rho;
  Matrix log_c(jn, rn);
  parallel_for(jn, config_.threads, [&](Index j) {
    std::vector<Vector> diags(static_cast<std::size_t>(entries()));
    for (Index e = 0; e < entries(); ++e) {
      if (state_.zeta(j, e) > 0) diags[static_cast<std::size_t>(e)] = state_.cov(j, e).diagonal();
    }
    for (Index r = 0; r < rn; ++r) {
      Vector terms = Vector::Constant(entries(), kNegInf);
      for (Index e = 0; e < entries(); ++e) {
        const double z = state_.zeta(j, e);
        if (!(z > 0)) continue;
        terms[e] = std::log(z) + state_.gamma(j, e)[r] + 0.5 * diags[static_cast<std::size_t>(e)][r];
      }
      log_c(j, r) = mu(j, in_.partition.of(r)) + log_sum_exp(terms);
    }
  });
  for (Index r = 0; r < rn; ++r) {
    rho.row(r) = update_rho(x_.col(r), s_[r], in_.f.f, log_c.col(r), rho.row(r).transpose())
                     .transpose();
  }
  return rho;
}

}  // namespace detail

// ---------------------------------------------------------------------------

namespace {

ModelParams prefit_init(const FitInputs& in) {
  const Index jn = in.x.genes();
  const Index rn = in.x.conditions();
  const auto& part = in.partition;
  ModelParams p;
  p.mu.resize(jn, part.subgroups());
  p.psi2.resize(jn);
  p.rho = Matrix::Zero(rn, in.f.factors());
  for (Index j = 0; j < jn; ++j) {
    Vector resid(rn);
    double poisson_var = 0;
    for (int m = 0; m < part.subgroups(); ++m) {
      double xs = 0;
      double ss = 0;
      for (Index r : part.members(m)) {
        xs += static_cast<double>(in.x(j, r));
        ss += in.s.s[r];
      }
      p.mu(j, m) = std::log(std::max(xs, 0.5) / ss);
      for (Index r : part.members(m)) {
        const double xr = static_cast<double>(in.x(j, r)) + 0.5;
        resid[r] = std::log(xr / in.s.s[r]) - p.mu(j, m);
        poisson_var += 1.0 / xr;
      }
    }
    const double centered = (resid.array() - resid.mean()).square().sum() /
                            static_cast<double>(std::max<Index>(rn - 1, 1));
    const double excess = centered - poisson_var / static_cast<double>(rn);
    p.psi2[j] = std::clamp(excess, kPsi2Floor, 10.0);
  }
  return p;
}

struct SweepStats {
  std::vector<double> trace;
  bool converged = false;
  int iterations = 0;
};

// Algorithm-1 style outer loop shared by fit and prefit.
SweepStats run_outer_loop(detail::Engine& eng, const FitConfig& config) {
  SweepStats stats;
  const Index jn = eng.genes();
  const Index rn = eng.conditions();
  const FitInputs& in = eng.inputs();

  eng.e_step_all();
  eng.update_zeta_all();
  stats.trace.push_back(eng.overall());

  for (int it = 1; it <= config.max_outer_iters; ++it) {
    stats.iterations = it;
    Matrix mu_new(jn, eng.params().mu.cols());
    Vector psi2_new(jn);
    parallel_for(jn, config.threads, [&](Index j) {
      mu_new.row(j) = eng.propose_mu(j).transpose();
      psi2_new[j] = eng.propose_psi2(j);
    });
    const Matrix rho_new = eng.propose_rho(eng.params().mu);
    const Matrix ups_new = ruv_offset(in.f, rho_new, rn);

    std::vector<Index> active;
    std::vector<Index> process;
    for (Index j = 0; j < jn; ++j) {
      const bool moved =
          (mu_new.row(j) - eng.params().mu.row(j)).cwiseAbs().maxCoeff() > config.eps_mu ||
          std::abs(psi2_new[j] - eng.params().psi2[j]) > config.eps_psi2 ||
          (rn > 0 && (ups_new.row(j) - eng.upsilon().row(j)).cwiseAbs().maxCoeff() >
                         config.eps_upsilon);
      if (moved) active.push_back(j);
      if (moved || !config.use_active_set) process.push_back(j);
    }

    parallel_for(static_cast<Index>(process.size()), config.threads, [&](Index i) {
      const Index j = process[static_cast<std::size_t>(i)];
      auto& st = eng.state();
      const double before = eng.gene_elbo(j);
      std::vector<Vector> gam(static_cast<std::size_t>(eng.entries()));
      std::vector<GaussianCov> cov(static_cast<std::size_t>(eng.entries()));
      for (Index e = 0; e < eng.entries(); ++e) {
        gam[static_cast<std::size_t>(e)] = st.gamma(j, e);
        cov[static_cast<std::size_t>(e)] = st.cov(j, e);
      }
      const Vector f_old = st.f_local.row(j).transpose();
      const Vector mu_old = eng.params().mu.row(j).transpose();
      const double psi2_old = eng.params().psi2[j];
      const Vector ups_old = eng.upsilon().row(j).transpose();
      auto restore_factors = [&] {
        for (Index e = 0; e < eng.entries(); ++e) {
          st.gamma(j, e) = gam[static_cast<std::size_t>(e)];
          st.cov(j, e) = cov[static_cast<std::size_t>(e)];
        }
        st.f_local.row(j) = f_old.transpose();
      };

      eng.params().mu.row(j) = mu_new.row(j);
      eng.params().psi2[j] = psi2_new[j];
      eng.upsilon().row(j) = ups_new.row(j);
      eng.e_step_gene(j);
      if (eng.gene_elbo(j) >= before) return;

      // The shared rho move lowered this gene's bound; keep its old offset.
      restore_factors();
      eng.upsilon().row(j) = ups_old.transpose();
      eng.e_step_gene(j);
      if (eng.gene_elbo(j) >= before) return;

      restore_factors();
      eng.params().mu.row(j) = mu_old.transpose();
      eng.params().psi2[j] = psi2_old;
    });
    eng.params().rho = rho_new;

    eng.update_zeta_all();
    eng.update_pi();
    stats.trace.push_back(eng.overall());
    if (active.empty()) {
      stats.converged = true;
      break;
    }
  }
  return stats;
}

}  // namespace

PrefitResult prefit(const FitInputs& in, const FitConfig& config) {
  const Index rn = in.x.conditions();
  PriorSpec null_prior({CovarianceComponent::null(rn)}, {1.0});
  detail::Engine eng(in, std::move(null_prior), prefit_init(in), config);
  SweepStats stats = run_outer_loop(eng, config);
  PrefitResult out;
  out.params = eng.params();
  out.null_elbo = gene_elbos(eng.state().zeta, eng.state().f_local, eng.prior().pi());
  out.elbo_trace = std::move(stats.trace);
  out.converged = stats.converged;
  out.iterations = stats.iterations;
  return out;
}

namespace {

FitResult collect(detail::Engine& eng) {
  FitResult out;
  out.params = eng.params();
  out.prior = eng.prior();
  out.upsilon = eng.upsilon();
  out.gene_elbo = gene_elbos(eng.state().zeta, eng.state().f_local, eng.prior().pi());
  out.vstate = std::move(eng.state());
  return out;
}

}  // namespace

FitResult fit(const FitInputs& in, PriorSpec prior, const ModelParams& init,
              const FitConfig& config) {
  detail::Engine eng(in, std::move(prior), init, config);
  SweepStats stats = run_outer_loop(eng, config);
  FitResult out = collect(eng);
  out.elbo_trace = std::move(stats.trace);
  out.converged = stats.converged;
  out.iterations = stats.iterations;
  return out;
}

FitResult e_step_only(const FitInputs& in, PriorSpec prior, const ModelParams& params,
                      const FitConfig& config) {
  detail::Engine eng(in, std::move(prior), params, config);
  eng.e_step_all();
  eng.update_zeta_all();
  FitResult out = collect(eng);
  out.elbo_trace = {overall_elbo(out.vstate.zeta, out.vstate.f_local, out.prior.pi())};
  out.converged = true;
  return out;
}

}  // namespace pmash
