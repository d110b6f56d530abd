#include "pmash/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pmash/parallel.hpp"

namespace pmash {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// P(X >= 0) and P(X <= 0) for X ~ N(m, var); a zero variance is a point mass.
std::pair<double, double> sign_probs(double m, double var) {
  if (!(var > 0)) {
    return {m >= 0 ? 1.0 : 0.0, m <= 0 ? 1.0 : 0.0};
  }
  const double sd = std::sqrt(var);
  return {normal_cdf(m / sd), normal_cdf(-m / sd)};
}

Matrix dense_prior_inverse(const PriorCovariance& prior) {
  if (prior.kind() == CovarianceKind::FullRank) return prior.inverse();
  const Index n = prior.dim();
  Matrix out(n, n);
  for (Index r = 0; r < n; ++r) out.col(r) = prior.solve(Vector::Unit(n, r));
  return 0.5 * (out + out.transpose());
}

Matrix sqrt_factor(const Matrix& cov) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal();
}

double median_of(Vector v) {
  const std::size_t n = static_cast<std::size_t>(v.size());
  std::sort(v.data(), v.data() + n);
  return n % 2 == 1 ? v[static_cast<Index>(n / 2)]
                    : 0.5 * (v[static_cast<Index>(n / 2 - 1)] + v[static_cast<Index>(n / 2)]);
}

}  // namespace

Vector BetaMixture::mean() const {
  Vector m = Vector::Zero(dim);
  for (const auto& c : components) {
    if (!c.point_mass) m += c.weight * c.mean;
  }
  return m;
}

Matrix BetaMixture::covariance() const {
  Matrix second = Matrix::Zero(dim, dim);
  for (const auto& c : components) {
    if (!c.point_mass) second += c.weight * (c.cov + c.mean * c.mean.transpose());
  }
  const Vector m = mean();
  return second - m * m.transpose();
}

BetaMixture::Component beta_component(const PriorCovariance& prior, const Vector& gamma,
                                      const GaussianCov& v, double weight) {
  BetaMixture::Component out;
  out.weight = weight;
  if (prior.kind() == CovarianceKind::Null) {
    out.point_mass = true;
    return out;
  }
  const Matrix sigma_b = prior.beta_cov();
  const Matrix a = sigma_b * dense_prior_inverse(prior);
  out.mean = a * gamma;
  const Matrix cov = sigma_b - a * sigma_b + a * v.to_dense() * a.transpose();
  out.cov = 0.5 * (cov + cov.transpose());
  return out;
}

BetaMixture beta_posterior(const FitResult& fit, Index gene) {
  BetaMixture bm;
  bm.dim = fit.prior.dim();
  const double psi2 = fit.params.psi2[gene];
  for (Index e = 0; e < fit.prior.size(); ++e) {
    const double w = fit.vstate.zeta(gene, e);
    if (!(w > 0)) continue;
    const PriorCovariance pc(fit.prior.component_of(e), fit.prior.scale(e), psi2);
    bm.components.push_back(
        beta_component(pc, fit.vstate.gamma(gene, e), fit.vstate.cov(gene, e), w));
  }
  return bm;
}

double lfsr(const BetaMixture& bm, Index r) {
  double pos = 0;
  double neg = 0;
  for (const auto& c : bm.components) {
    if (c.point_mass) {
      pos += c.weight;
      neg += c.weight;
      continue;
    }
    const auto [p, n] = sign_probs(c.mean[r], c.cov(r, r));
    pos += c.weight * p;
    neg += c.weight * n;
  }
  return std::clamp(std::min(pos, neg), 0.0, 1.0);
}

Vector lfsr_all(const BetaMixture& bm) {
  Vector out(bm.dim);
  for (Index r = 0; r < bm.dim; ++r) out[r] = lfsr(bm, r);
  return out;
}

double min_lfsr(const BetaMixture& bm) { return lfsr_all(bm).minCoeff(); }

LfcEstimate lfc_vs_control(const BetaMixture& bm, Index control) {
  require(control >= 0 && control < bm.dim, ErrorCode::InvalidArgument,
          "control condition out of range");
  const Index n = bm.dim;
  LfcEstimate out{Vector::Zero(n), Vector::Zero(n), Vector::Zero(n), Vector::Zero(n)};
  Vector second = Vector::Zero(n);
  for (const auto& c : bm.components) {
    if (c.point_mass) continue;
    for (Index r = 0; r < n; ++r) {
      const double m = c.mean[r] - c.mean[control];
      const double var = std::max(
          0.0, c.cov(r, r) + c.cov(control, control) - 2.0 * c.cov(r, control));
      out.mean[r] += c.weight * m;
      second[r] += c.weight * (var + m * m);
      if (var > 0) {
        out.p_pos[r] += c.weight * normal_cdf(m / std::sqrt(var));
        out.p_neg[r] += c.weight * normal_cdf(-m / std::sqrt(var));
      } else {
        out.p_pos[r] += m > 0 ? c.weight : 0.0;
        out.p_neg[r] += m < 0 ? c.weight : 0.0;
      }
    }
  }
  out.sd = (second - out.mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
  out.mean[control] = 0;
  out.sd[control] = 0;
  out.p_pos[control] = 0;
  out.p_neg[control] = 0;
  return out;
}

LfcEstimate lfc_vs_median(const BetaMixture& bm, int n_draws, std::uint64_t seed) {
  require(n_draws >= 100, ErrorCode::InvalidArgument, "at least 100 draws are required");
  const Index n = bm.dim;
  std::vector<Matrix> factors;
  std::vector<double> cum;
  double acc = 0;
  for (const auto& c : bm.components) {
    factors.push_back(c.point_mass ? Matrix() : sqrt_factor(c.cov));
    acc += c.weight;
    cum.push_back(acc);
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Vector sum = Vector::Zero(n);
  Vector sum_sq = Vector::Zero(n);
  Vector pos = Vector::Zero(n);
  Vector neg = Vector::Zero(n);
  Vector beta(n);
  Vector z(n);
  for (int d = 0; d < n_draws; ++d) {
    const double u = unif(rng) * acc;
    std::size_t k = 0;
    while (k + 1 < cum.size() && u >= cum[k]) ++k;
    const auto& c = bm.components[k];
    if (c.point_mass) {
      beta.setZero();
    } else {
      for (Index r = 0; r < n; ++r) z[r] = gauss(rng);
      beta = c.mean + factors[k] * z;
    }
    const double med = median_of(beta);
    for (Index r = 0; r < n; ++r) {
      const double diff = beta[r] - med;
      sum[r] += diff;
      sum_sq[r] += diff * diff;
      if (diff > 0) pos[r] += 1;
      if (diff < 0) neg[r] += 1;
    }
  }
  const double nd = static_cast<double>(n_draws);
  LfcEstimate out;
  out.mean = sum / nd;
  out.sd = (sum_sq / nd - out.mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
  out.p_pos = pos / nd;
  out.p_neg = neg / nd;
  return out;
}

PosteriorSummary summarize_posterior(const FitResult& fit, const Vector& null_elbo,
                                     const PosteriorConfig& config) {
  const Index jn = fit.params.genes();
  const Index rn = fit.prior.dim();
  require(null_elbo.size() == jn, ErrorCode::DimensionMismatch,
          "null ELBOs do not match the fitted genes");
  PosteriorSummary out{Matrix(jn, rn), Matrix(jn, rn), Matrix(jn, rn), Vector(jn), Vector(jn)};
  parallel_for(jn, config.threads, [&](Index j) {
    const BetaMixture bm = beta_posterior(fit, j);
    const LfcEstimate lfc =
        config.reference == Reference::Control
            ? lfc_vs_control(bm, config.control)
            : lfc_vs_median(bm, config.n_draws,
                            stream_seed(config.seed, Stream::MonteCarlo, static_cast<std::uint64_t>(j)));
    out.lfc_mean.row(j) = lfc.mean.transpose();
    out.lfc_sd.row(j) = lfc.sd.transpose();
    const Vector l = lfsr_all(bm);
    out.lfsr.row(j) = l.transpose();
    out.min_lfsr[j] = l.minCoeff();
    out.log_bf[j] = log_bayes_factor(fit.gene_elbo[j], null_elbo[j]);
  });
  return out;
}

}  // namespace pmash
