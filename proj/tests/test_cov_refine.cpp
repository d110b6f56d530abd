#include "doctest.h"

#include "fixtures.hpp"
#include "pmash/cov_refine.hpp"
#include "pmash/prior.hpp"

using namespace pmash;

TEST_CASE("full-rank update is a weighted average") {
  Matrix m(2, 2);
  m << 2, 0.5, 0.5, 1;
  CHECK(update_fullrank(Vector::Ones(1), {m}) == m);
  Matrix a = Matrix::Identity(2, 2), b(2, 2);
  b << 3, 1, 1, 2;
  CHECK((update_fullrank(Vector::Constant(2, 0.4), {a, b}) - (a + b) / 2).norm() < 1e-15);
  CHECK_THROWS_AS(update_fullrank(Vector::Zero(2), {a, b}), Error);
}

TEST_CASE("rank-one update") {
  const Vector u = update_rank1(Vector::Ones(1), Vector::Constant(1, 0.2), Vector::Constant(1, 1.5),
                                {Vector::Constant(3, 0.7 * 1.5)});
  CHECK((u - Vector::Constant(3, 0.7)).cwiseAbs().maxCoeff() < 1e-15);
  try {
    update_rank1(Vector::Zero(1), Vector::Ones(1), Vector::Ones(1), {Vector::Ones(3)});
    FAIL("expected ZeroResponsibility");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroResponsibility);
  }
}

TEST_CASE("refinement keeps canonical patterns and raises the bound") {
  const auto toy = fixture::make_toy(80, 5, 31, 0.05, 0.5);
  const auto pre = prefit(toy.inputs(), FitConfig{});
  auto comps = canonical_covariances(5);
  const auto z = multinomial_gof_zscores(toy.x, toy.s);
  for (auto& c : init_data_driven(z, 2)) comps.push_back(c);
  RefineConfig cfg;
  cfg.max_sweeps = 30;
  const auto res = refine_covariances(toy.inputs(), comps, pre.params, cfg);
  REQUIRE(res.components.size() == comps.size());
  for (std::size_t k = 0; k < comps.size(); ++k) {
    if (!comps[k].data_driven) CHECK(res.components[k].dense() == comps[k].dense());
    CHECK_NOTHROW(res.components[k].check());
  }
  CHECK(res.data_driven().size() == 3);
  for (std::size_t t = 1; t < res.elbo_trace.size(); ++t)
    CHECK(res.elbo_trace[t] >= res.elbo_trace[t - 1] - 1e-8 * std::abs(res.elbo_trace[t - 1]));
  CHECK(res.pi.sum() == doctest::Approx(1.0));
  CHECK(res.params.genes() == 80);
}

TEST_CASE("refinement from a stationary point stops at once") {
  const auto toy = fixture::make_toy(1, 3, 4, 0.05, 1.0, 4.0);
  const auto pre = prefit(toy.inputs(), FitConfig{});
  std::vector<CovarianceComponent> comps{CovarianceComponent::null(3),
                                         CovarianceComponent::full_rank(Matrix::Identity(3, 3), "f")};
  RefineConfig cfg;
  cfg.max_sweeps = 5000;
  cfg.rel_tol = 1e-12;
  const auto first = refine_covariances(toy.inputs(), comps, pre.params, cfg);
  REQUIRE(first.converged);
  RefineConfig again;
  const auto second = refine_covariances(toy.inputs(), first.components, first.params, again);
  CHECK(second.sweeps == 1);
  CHECK(second.converged);
  const double change = second.elbo_trace.back() - second.elbo_trace.front();
  CHECK(std::abs(change) < again.rel_tol * std::abs(second.elbo_trace.back()));
}

TEST_CASE("starved components are frozen") {
  // Strong one-condition signal, plus a pattern orthogonal to it.
  auto toy = fixture::make_toy(60, 4, 6, 0.02, 0.0);
  std::vector<CovarianceComponent> comps{CovarianceComponent::null(4),
                                         CovarianceComponent::rank_one(Vector::Unit(4, 2) * 1e-3, "tiny")};
  RefineConfig cfg;
  cfg.max_sweeps = 10;
  cfg.freeze_floor = 1.0;  // any component short of all genes is starved
  const auto pre = prefit(toy.inputs(), FitConfig{});
  const auto res = refine_covariances(toy.inputs(), comps, pre.params, cfg);
  CHECK(res.frozen[1]);
  CHECK_FALSE(res.frozen[0]);
}
