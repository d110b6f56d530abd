#include "doctest.h"

#include <functional>
#include <random>

#include "oracles.hpp"
#include "pmash/core_model.hpp"

using namespace pmash;

namespace {

CountMatrix make_counts(std::initializer_list<std::initializer_list<std::int64_t>> rows) {
  const Index jn = static_cast<Index>(rows.size());
  const Index rn = static_cast<Index>(rows.begin()->size());
  CountArray a(jn, rn);
  Index j = 0;
  for (const auto& row : rows) {
    Index r = 0;
    for (auto v : row) a(j, r++) = v;
    ++j;
  }
  std::vector<std::string> genes, conds;
  for (Index i = 0; i < jn; ++i) genes.push_back("g" + std::to_string(i));
  for (Index i = 0; i < rn; ++i) conds.push_back("c" + std::to_string(i));
  return CountMatrix(a, genes, conds);
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

TEST_CASE("size factors are column sums") {
  const auto s = compute_size_factors(make_counts({{1, 2}, {3, 4}}));
  CHECK(s.s[0] == 4);
  CHECK(s.s[1] == 6);
  const auto id = compute_size_factors(make_counts({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}));
  CHECK(id.s == Vector::Ones(3));
}

TEST_CASE("empty condition is rejected") {
  CHECK(code_of([] { compute_size_factors(make_counts({{0, 5}})); }) == ErrorCode::ZeroColumn);
}

TEST_CASE("size factors under gene permutation and duplication") {
  const auto a = compute_size_factors(make_counts({{1, 2, 3}, {4, 5, 6}}));
  const auto b = compute_size_factors(make_counts({{4, 5, 6}, {1, 2, 3}}));
  CHECK(a.s == b.s);
  const auto c = compute_size_factors(make_counts({{1, 2, 3}, {4, 5, 6}, {4, 5, 6}}));
  CHECK(c.s == a.s + Vector::LinSpaced(3, 4, 6));
}

TEST_CASE("count matrix validation") {
  CHECK(code_of([] { make_counts({{1, -1}}); }) == ErrorCode::NegativeCount);
  CHECK(code_of([] { make_counts({{1}}); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { check_min_gene_count(make_counts({{10, 10}, {1, 2}}), 25); }) ==
        ErrorCode::LowCountGene);
  CHECK(genes_passing_filter(make_counts({{20, 10}, {1, 2}}), 25) == std::vector<Index>{0});
}

TEST_CASE("pln moments closed form") {
  const auto m0 = pln_moments(0.0, 0.0, 1.0);
  CHECK(m0.mean == doctest::Approx(1.0));
  CHECK(m0.var == doctest::Approx(1.0));
  const auto m1 = pln_moments(0.0, std::log(2.0), 1.0);
  CHECK(m1.mean == doctest::Approx(std::sqrt(2.0)));
  CHECK(m1.var == doctest::Approx(std::sqrt(2.0) * (1.0 + std::sqrt(2.0))));
  for (double mu : {-1.0, 0.5, 2.0}) {
    const auto m = pln_moments(mu, 0.0, 3.0);
    CHECK(m.var == doctest::Approx(m.mean));
    const auto d = pln_moments(mu, 0.3, 3.0);
    CHECK(d.var > d.mean);
  }
}

TEST_CASE("pln moments against Monte Carlo") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> eta(0.0, std::sqrt(std::log(2.0)));
  oracle::Running mean, second;
  for (int i = 0; i < 1000000; ++i) {
    std::poisson_distribution<int> pois(std::exp(eta(rng)));
    const double x = pois(rng);
    mean.add(x);
    second.add(x * x);
  }
  const auto m = pln_moments(0.0, std::log(2.0), 1.0);
  CHECK(std::abs(mean.mean() - m.mean) < 3 * mean.se());
  const double var = second.mean() - mean.mean() * mean.mean();
  CHECK(std::abs(var - m.var) < 3 * second.se() + 2 * m.mean * 3 * mean.se());
}

TEST_CASE("covariance components are checked at construction") {
  Matrix bad(2, 2);
  bad << 1, 2, 2, 1;  // eigenvalue -1
  CHECK(code_of([&] { CovarianceComponent::full_rank(bad, "bad"); }) == ErrorCode::NotPsd);
  Matrix asym(2, 2);
  asym << 1, 0.5, 0, 1;
  CHECK(code_of([&] { CovarianceComponent::full_rank(asym, "asym"); }) == ErrorCode::NotPsd);
  Matrix ok(2, 2);
  ok << 1, 1, 1, 1;
  CHECK_NOTHROW(CovarianceComponent::full_rank(ok, "ok"));
}

TEST_CASE("prior spec invariants") {
  std::vector<CovarianceComponent> comps{CovarianceComponent::null(2),
                                         CovarianceComponent::rank_one(Vector::Unit(2, 0), "e1")};
  PriorSpec p(comps, {0.5, 1.0, 2.0});
  CHECK(p.size() == 4);  // null once, e1 at three scales
  CHECK(p.pi().sum() == doctest::Approx(1.0));
  CHECK(p.entries()[0].grid == -1);
  CHECK(p.scale(0) == 0.0);
  CHECK(p.scale(3) == 2.0);
  CHECK(code_of([&] { PriorSpec(comps, {1.0, 0.5}); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { p.set_pi(Vector::Constant(4, 0.3)); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("unwanted-variation offset") {
  Matrix f(2, 1);
  f << 1, 2;
  Matrix rho(3, 1);
  rho << 0.1, 0.2, 0.3;
  const Matrix u = ruv_offset(FactorLoadings(f), rho, 3);
  CHECK(u(1, 2) == doctest::Approx(0.6));
  CHECK(ruv_offset(FactorLoadings::none(2), Matrix(3, 0), 3).isZero());
}
