#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "pmash/vem.hpp"

using namespace pmash;

namespace {

Matrix spd2(double a, double b, double c) {
  Matrix m(2, 2);
  m << a, b, b, c;
  return m;
}

GeneInput gene2(Vector x, Vector s, Vector offset) {
  return make_gene_input(x, s, Vector::Zero(1), offset,
                         SubgroupPartition(std::vector<int>(x.size(), 0), {"all"}));
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("kl vanishes at the prior") {
  const auto full = CovarianceComponent::full_rank(spd2(1, 0.3, 0.5), "f");
  const auto r1 = CovarianceComponent::rank_one(Vector::Ones(2), "r");
  const auto nul = CovarianceComponent::null(2);
  for (const auto* c : {&full, &r1, &nul}) {
    const PriorCovariance p(*c, 0.7, 0.2);
    CHECK(std::abs(gaussian_kl(Vector::Zero(2), p.as_cov(), p)) < 1e-12);
  }
}

TEST_CASE("local elbo with no counts") {
  Vector s(2), o(2);
  s << 1.5, 0.5;
  o << 0.2, -0.4;
  const auto gene = gene2(Vector::Zero(2), s, o);
  const PriorCovariance p(CovarianceComponent::full_rank(spd2(1, 0.3, 0.5), "f"), 0.4, 0.1);
  const Matrix sd = p.as_cov().to_dense();
  const double expected = -(s.array() * (o.array() + 0.5 * sd.diagonal().array()).exp()).sum();
  CHECK(local_elbo(gene, p, Vector::Zero(2), p.as_cov()) == doctest::Approx(expected).epsilon(1e-12));
  // Vanishing V: the Poisson term tends to -sum s exp(o) and the KL diverges.
  const auto tiny = GaussianCov::from_dense(1e-6 * Matrix::Identity(2, 2));
  const double small = local_elbo(gene, p, Vector::Zero(2), tiny);
  const double pois = -(s.array() * (o.array() + 0.5e-6).exp()).sum();
  CHECK(small == doctest::Approx(pois - gaussian_kl(Vector::Zero(2), tiny, p)).epsilon(1e-9));
}

TEST_CASE("local elbo overflow") {
  const auto gene = gene2(Vector::Ones(2), Vector::Ones(2), Vector::Constant(2, 800.0));
  const PriorCovariance p(CovarianceComponent::null(2), 0.0, 0.1);
  CHECK(code_of([&] { local_elbo(gene, p, Vector::Zero(2), p.as_cov()); }) ==
        ErrorCode::NumericalOverflow);
}

TEST_CASE("responsibilities") {
  Vector pi(2), f(2);
  pi << 0.5, 0.5;
  f << 0.0, std::log(3.0);
  const Vector z = update_zeta(pi, f);
  CHECK(z[0] == doctest::Approx(0.25));
  CHECK(z[1] == doctest::Approx(0.75));
  Vector pi3(3);
  pi3 << 0.2, 0.3, 0.5;
  CHECK((update_zeta(pi3, Vector::Constant(3, -12.0)) - pi3).cwiseAbs().maxCoeff() < 1e-15);
  pi3 << 0.0, 0.5, 0.5;
  CHECK(update_zeta(pi3, Vector(Eigen::Vector3d(100, 0, 0)))[0] == 0.0);
  CHECK(code_of([] { update_zeta(Vector::Zero(2), Vector::Zero(2)); }) ==
        ErrorCode::AllZeroWeights);
}

TEST_CASE("gaussian factor update reaches a stationary point") {
  std::mt19937_64 rng(3);
  FitConfig cfg;
  cfg.inner_iters = 200;
  cfg.inner_tol = 1e-14;
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix u = oracle::random_spd(3, rng);
    Vector x(3), s(3), o(3);
    x << 5, 40, 12;
    s << 1, 2, 0.5;
    o << 1.5, 2.0, 2.5;
    const auto gene = gene2(x, s, o);
    const PriorCovariance p(CovarianceComponent::full_rank(u, "u"), 0.5 + rep, 0.1);
    Vector gamma = Vector::Zero(3);
    GaussianCov v = p.as_cov();
    const double start = local_elbo(gene, p, gamma, v);
    const auto res = update_gamma_V(gene, p, gamma, v, cfg);
    CHECK(res.elbo >= start);
    CHECK(res.elbo == doctest::Approx(local_elbo(gene, p, gamma, v)).epsilon(1e-12));
    for (Index r = 0; r < 3; ++r) {
      const double d = oracle::central_diff(
          [&](double h) {
            Vector g = gamma;
            g[r] += h;
            return local_elbo(gene, p, g, v);
          },
          0.0, 1e-5);
      CHECK(std::abs(d) < 1e-5);
    }
  }
}

TEST_CASE("gaussian factor update with negligible counts") {
  const auto gene = gene2(Vector::Zero(2), Vector::Constant(2, 1e-12), Vector::Zero(2));
  const PriorCovariance p(CovarianceComponent::rank_one(Eigen::Vector2d(1, -1), "r"), 1.0, 0.2);
  Vector gamma = Vector::Zero(2);
  GaussianCov v = GaussianCov::from_dense(Matrix::Identity(2, 2));
  update_gamma_V(gene, p, gamma, v, FitConfig{});
  CHECK((v.to_dense() - p.as_cov().to_dense()).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(gamma.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("baseline update is the shared-rate MLE") {
  Vector x(3), s(3);
  x << 4, 9, 20;
  s << 1, 2, 3;
  const auto part = SubgroupPartition::single(3);
  const std::vector<Vector> gammas{Vector::Zero(3)};
  const std::vector<GaussianCov> covs{
      GaussianCov::diagonal_plus_rank_one(Vector::Zero(3), Vector::Zero(3))};
  const Vector mu = update_mu(x, s, part, Vector::Ones(1), gammas, covs, Vector::Zero(3));
  CHECK(mu[0] == doctest::Approx(std::log(33.0 / 6.0)));

  SubgroupPartition two({0, 0, 1}, {"a", "b"});
  const Vector mu2 = update_mu(x, s, two, Vector::Ones(1), gammas, covs, Vector::Zero(3));
  CHECK(mu2[0] == doctest::Approx(std::log(13.0 / 3.0)));
  CHECK(mu2[1] == doctest::Approx(std::log(20.0 / 3.0)));
  x[2] = 0;
  CHECK(code_of([&] { update_mu(x, s, two, Vector::Ones(1), gammas, covs, Vector::Zero(3)); }) ==
        ErrorCode::EmptySubgroupCounts);
}

TEST_CASE("latent second moments limits") {
  Vector gamma(2);
  gamma << 0.3, -0.8;
  const auto v = GaussianCov::from_dense(spd2(0.2, 0.05, 0.1));
  const auto nul = latent_second_moments(PriorCovariance(CovarianceComponent::null(2), 0, 0.3),
                                         gamma, v);
  CHECK(nul.e_eta_sq == doctest::Approx(gamma.squaredNorm() + 0.3));
  const auto full = latent_second_moments(
      PriorCovariance(CovarianceComponent::full_rank(spd2(1, 0.2, 0.7), "f"), 1.0, kPsi2Floor),
      gamma, v);
  const Matrix target = gamma * gamma.transpose() + v.to_dense();
  CHECK((full.e_bb - target).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(full.e_eta_sq < 1e-6);
}

TEST_CASE("random-effect variance update") {
  CHECK(update_psi2(Vector::Ones(1), Vector::Constant(1, 3 * 0.4), 3) == doctest::Approx(0.4));
  CHECK(update_psi2(Vector::Ones(2) / 2, Vector::Zero(2), 3) == kPsi2Floor);
  // Null component, gamma = 0, V = cI.
  const auto m = latent_second_moments(PriorCovariance(CovarianceComponent::null(4), 0, 1.0),
                                       Vector::Zero(4),
                                       GaussianCov::from_dense(0.37 * Matrix::Identity(4, 4)));
  CHECK(update_psi2(Vector::Ones(1), Vector::Constant(1, m.e_eta_sq), 4) == doctest::Approx(0.37));
}

TEST_CASE("unwanted-variation update") {
  Vector x(4), log_c(4);
  x << 3, 8, 1, 12;
  log_c << 0.1, 0.7, -0.5, 1.2;
  const double s_r = 1.7;
  const Vector unchanged = update_rho(x, s_r, Matrix::Zero(4, 2), log_c, Vector::Constant(2, 0.3));
  CHECK(unchanged == Vector::Constant(2, 0.3));
  const Vector rho = update_rho(x, s_r, Matrix::Ones(4, 1), log_c, Vector::Zero(1));
  const double closed = std::log(x.sum()) - std::log(s_r * log_c.array().exp().sum());
  CHECK(rho[0] == doctest::Approx(closed).epsilon(1e-10));
}

TEST_CASE("mixture weights") {
  Matrix z = Matrix::Zero(6, 4);
  for (Index j = 0; j < 6; ++j) z(j, j % 3) = 1;
  const Vector pi = update_pi(z);
  CHECK(pi[0] == doctest::Approx(1.0 / 3));
  CHECK(pi[2] == doctest::Approx(1.0 / 3));
  CHECK(pi[3] == 0.0);
  Matrix one(1, 3);
  one << 0.2, 0.5, 0.3;
  CHECK(update_pi(one) == one.row(0).transpose());
}

TEST_CASE("overall elbo identities") {
  Vector pi(3);
  pi << 0.2, 0.3, 0.5;
  Matrix z(2, 3);
  z.row(0) = pi.transpose();
  z.row(1) = pi.transpose();
  CHECK(std::abs(overall_elbo(z, Matrix::Zero(2, 3), pi)) < 1e-15);
  Matrix f(2, 1);
  f << -3.5, -7.25;
  CHECK(overall_elbo(Matrix::Ones(2, 1), f, Vector::Ones(1)) == doctest::Approx(-10.75));
}

TEST_CASE("prefit on constant-rate data") {
  auto toy = fixture::make_toy(30, 4, 1, 0.0, 0.0);
  CountArray c(30, 4);
  for (Index j = 0; j < 30; ++j)
    for (Index r = 0; r < 4; ++r) c(j, r) = (j + 1) * 10 * (r + 1);
  toy.x = CountMatrix(c, toy.x.gene_ids(), toy.x.condition_ids());
  toy.s = compute_size_factors(toy.x);
  FitConfig cfg;
  const auto pre = prefit(toy.inputs(), cfg);
  for (Index j = 0; j < 30; ++j) {
    const double mle = std::log(toy.x.gene_total(j) / toy.s.s.sum());
    CHECK(pre.params.mu(j, 0) == doctest::Approx(mle).epsilon(1e-3));
    CHECK(pre.params.psi2[j] < 1e-6);
  }
  for (std::size_t t = 1; t < pre.elbo_trace.size(); ++t)
    CHECK(pre.elbo_trace[t] >= pre.elbo_trace[t - 1] - 1e-8 * std::abs(pre.elbo_trace[t - 1]));
}

TEST_CASE("prefit recovers the random-effect variance") {
  const auto toy = fixture::make_toy(500, 10, 17, 0.25, 0.0, 5.0);
  const auto pre = prefit(toy.inputs(), FitConfig{});
  std::vector<double> v(pre.params.psi2.data(), pre.params.psi2.data() + 500);
  std::nth_element(v.begin(), v.begin() + 250, v.end());
  CHECK(std::abs(v[250] - 0.25) < 0.3 * 0.25);
}

TEST_CASE("huge tolerances stop after one sweep") {
  const auto toy = fixture::make_toy(40, 4, 5);
  FitConfig cfg;
  cfg.eps_mu = cfg.eps_psi2 = cfg.eps_upsilon = std::numeric_limits<double>::infinity();
  const auto pre = prefit(toy.inputs(), FitConfig{});
  const auto res = fit(toy.inputs(), fixture::toy_prior(4, 3, 3), pre.params, cfg);
  CHECK(res.iterations == 1);
  CHECK(res.converged);
}

TEST_CASE("active set does not change the optimum") {
  const auto toy = fixture::make_toy(200, 10, 8);
  const auto pre = prefit(toy.inputs(), FitConfig{});
  FitConfig cfg;
  cfg.eps_mu = cfg.eps_psi2 = cfg.eps_upsilon = 1e-6;
  const auto a = fit(toy.inputs(), fixture::toy_prior(10, 4, 5), pre.params, cfg);
  cfg.use_active_set = false;
  const auto b = fit(toy.inputs(), fixture::toy_prior(10, 4, 5), pre.params, cfg);
  const double fa = a.elbo_trace.back();
  const double fb = b.elbo_trace.back();
  CHECK(std::abs(fa - fb) <= 1e-6 * std::abs(fb));
}

TEST_CASE("single gene, single component fit") {
  const auto toy = fixture::make_toy(1, 3, 9);
  std::vector<CovarianceComponent> comps{
      CovarianceComponent::full_rank(Matrix::Identity(3, 3), "i")};
  const auto pre = prefit(toy.inputs(), FitConfig{});
  const auto res = fit(toy.inputs(), PriorSpec(comps, {0.5}), pre.params, FitConfig{});
  for (std::size_t t = 1; t < res.elbo_trace.size(); ++t)
    CHECK(res.elbo_trace[t] >= res.elbo_trace[t - 1] - 1e-8 * std::abs(res.elbo_trace[t - 1]));
  CHECK(res.vstate.zeta(0, 0) == 1.0);
}

TEST_CASE("fit with unwanted variation") {
  const auto toy = fixture::make_toy(100, 6, 12, 0.05, 0.2, 3.5, 2);
  const auto pre = prefit(toy.inputs(), FitConfig{});
  CHECK(pre.params.rho.cols() == 2);
  const auto res = fit(toy.inputs(), fixture::toy_prior(6, 3, 3), pre.params, FitConfig{});
  for (std::size_t t = 1; t < res.elbo_trace.size(); ++t)
    CHECK(res.elbo_trace[t] >= res.elbo_trace[t - 1] - 1e-8 * std::abs(res.elbo_trace[t - 1]));
  CHECK(res.gene_elbo.allFinite());
}

TEST_CASE("latent second moments against dense conditioning") {
  std::mt19937_64 rng(19);
  std::normal_distribution<double> g(0, 1);
  for (int rep = 0; rep < 6; ++rep) {
    const Index n = 2 + rep % 3;
    const double psi2 = 0.05 + 0.1 * rep;
    Vector c(n);
    for (Index r = 0; r < n; ++r) c[r] = g(rng);
    const Matrix u = oracle::random_spd(static_cast<int>(n), rng);
    Vector gamma(n);
    for (Index r = 0; r < n; ++r) gamma[r] = g(rng);
    const Matrix vd = 0.3 * oracle::random_spd(static_cast<int>(n), rng);
    const auto v = GaussianCov::from_dense(vd);
    const Matrix tt = gamma * gamma.transpose() + vd;
    const Matrix I = Matrix::Identity(n, n);
    for (const auto& comp : {CovarianceComponent::full_rank(u, "u"),
                             CovarianceComponent::rank_one(c, "c"),
                             CovarianceComponent::null(n)}) {
      const PriorCovariance pc(comp, 0.8, psi2);
      const Matrix b = comp.kind == CovarianceKind::Null ? Matrix::Zero(n, n) : pc.beta_cov();
      const Matrix S = b + psi2 * I;
      const auto cb = oracle::condition_gaussian(b, b, S);
      const auto ce = oracle::condition_gaussian(psi2 * I, psi2 * I, S);
      const auto lm = latent_second_moments(pc, gamma, v);
      CHECK((lm.e_bb - (cb.cov + cb.gain * tt * cb.gain.transpose())).cwiseAbs().maxCoeff() < 1e-10);
      CHECK(lm.e_eta_sq == doctest::Approx((ce.cov + ce.gain * tt * ce.gain.transpose()).trace()));
      if (comp.kind == CovarianceKind::RankOne) {
        const Vector f = pc.factor();
        const auto cv = oracle::condition_gaussian(Matrix::Ones(1, 1), f.transpose(), S);
        const Vector k = cv.gain.row(0).transpose();
        CHECK(lm.e_v2 == doctest::Approx(cv.cov(0, 0) + k.dot(tt * k)));
        CHECK((lm.e_vtheta - tt * k).cwiseAbs().maxCoeff() < 1e-10);
      }
    }
  }
}
