#pragma once

#include <cstdint>
#include <vector>

#include "pmash/random.hpp"
#include "pmash/vem.hpp"

namespace pmash {

inline constexpr double kDefaultLfsrThreshold = 0.05;
inline constexpr int kDefaultDraws = 1000;

/// Posterior of the effect vector beta_j: a mixture of point masses at zero
/// and Gaussians.
struct BetaMixture {
  struct Component {
    double weight = 0;
    bool point_mass = false;
    Vector mean;  // empty for point masses
    Matrix cov;
  };
  Index dim = 0;
  std::vector<Component> components;

  Vector mean() const;
  Matrix covariance() const;
};

/// Conditional law of beta given theta ~ N(gamma, V) under one mixture
/// entry: mean A gamma, covariance C + A V A'.
BetaMixture::Component beta_component(const PriorCovariance& prior, const Vector& gamma,
                                      const GaussianCov& v, double weight);

BetaMixture beta_posterior(const FitResult& fit, Index gene);

/// Local false sign rate of beta_r; point masses count towards both signs.
double lfsr(const BetaMixture& bm, Index r);
Vector lfsr_all(const BetaMixture& bm);
double min_lfsr(const BetaMixture& bm);

struct LfcEstimate {
  Vector mean;
  Vector sd;
  Vector p_pos;  // P(diff > 0)
  Vector p_neg;  // P(diff < 0)
};

/// beta_r - beta_control with exact mixture moments; sign probabilities use
/// the exact Gaussian tails.
LfcEstimate lfc_vs_control(const BetaMixture& bm, Index control);

/// beta_r - median_r'(beta_r') by Monte Carlo, deterministic in `seed`.
LfcEstimate lfc_vs_median(const BetaMixture& bm, int n_draws, std::uint64_t seed);

/// ELBO-based lower bound on the log Bayes factor against the prefit model.
inline double log_bayes_factor(double gene_elbo, double null_elbo) {
  return gene_elbo - null_elbo;
}

enum class Reference { Control, Median };

struct PosteriorConfig {
  Reference reference = Reference::Control;
  Index control = 0;
  int n_draws = kDefaultDraws;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct PosteriorSummary {
  Matrix lfc_mean;  // J x R, natural log
  Matrix lfc_sd;
  Matrix lfsr;      // of beta_jr
  Vector min_lfsr;
  Vector log_bf;
};

PosteriorSummary summarize_posterior(const FitResult& fit, const Vector& null_elbo,
                                     const PosteriorConfig& config);

}  // namespace pmash
