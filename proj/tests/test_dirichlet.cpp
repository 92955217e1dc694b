#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "compresid/dirichlet.hpp"
#include "compresid/error.hpp"
#include "compresid/rng.hpp"
#include "compresid/special.hpp"

using namespace compresid;

namespace {
DirichletParams params(std::initializer_list<double> mu, double phi) {
  Eigen::VectorXd m(static_cast<Eigen::Index>(mu.size()));
  Eigen::Index j = 0;
  for (const double v : mu) m[j++] = v;
  return {m, phi};
}

Composition comp(std::initializer_list<double> w) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(w.size()));
  Eigen::Index j = 0;
  for (const double x : w) v[j++] = x;
  return Composition(v);
}
}  // namespace

TEST_CASE("composition validation") {
  CHECK_NOTHROW(comp({0.2, 0.3, 0.5}));
  CHECK_THROWS_AS(comp({0.0, 0.5, 0.5}), DataError);
  CHECK_THROWS_AS(comp({0.2, 0.3, 0.6}), DataError);
  CHECK_THROWS_AS(comp({1.0}), DataError);
  const std::vector<double> loose = {0.2, 0.3, 0.5000004};
  const Composition c = Composition::from_observed(loose);
  CHECK(std::fabs(c.values().sum() - 1.0) <= 1e-15);
  const std::vector<double> bad = {0.2, 0.3, 0.51};
  CHECK_THROWS_AS(Composition::from_observed(bad), DataError);
}

TEST_CASE("Dirichlet(1,1) is uniform") {
  const DirichletParams p = params({0.5, 0.5}, 2.0);
  for (const double w : {0.01, 0.3, 0.77}) {
    CHECK(std::fabs(log_density(comp({w, 1.0 - w}), p)) <= 1e-14);
  }
}

TEST_CASE("k = 2 density equals the beta density") {
  const DirichletParams p = params({0.3, 0.7}, 7.5);
  const double a = 0.3 * 7.5;
  const double b = 0.7 * 7.5;
  for (double w = 0.01; w < 1.0; w += 0.01) {
    const double beta = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                        (a - 1.0) * std::log(w) + (b - 1.0) * std::log1p(-w);
    CHECK(std::fabs(std::exp(log_density(comp({w, 1.0 - w}), p)) - std::exp(beta)) <= 1e-10);
  }
}

TEST_CASE("k = 3 density against a term-by-term reference") {
  const DirichletParams p = params({0.2, 0.3, 0.5}, 10.0);
  CHECK(std::fabs(log_density(comp({0.1, 0.3, 0.6}), p) - 2.1767932724636982801) <= 1e-12);
}

TEST_CASE("density rejects mismatched or invalid parameters") {
  CHECK_THROWS_AS(log_density(comp({0.5, 0.5}), params({0.2, 0.3, 0.5}, 2.0)), DataError);
  CHECK_THROWS_AS(log_density(comp({0.5, 0.5}), params({0.5, 0.5}, 0.0)), DataError);
  CHECK_THROWS_AS(log_density(comp({0.5, 0.5}), params({0.6, 0.5}, 1.0)), DataError);
}

TEST_CASE("sampling moments") {
  const DirichletParams p = params({0.333, 0.333, 0.334}, 20.0);
  RngStream rng(10, 1);
  constexpr int kDraws = 100000;
  Eigen::Vector3d s1 = Eigen::Vector3d::Zero();
  Eigen::Vector3d s2 = Eigen::Vector3d::Zero();
  std::vector<double> first(kDraws);
  for (int i = 0; i < kDraws; ++i) {
    const Composition w = sample(p, rng);
    REQUIRE(std::fabs(w.values().sum() - 1.0) <= 1e-12);
    s1 += w.values();
    s2 += w.values().cwiseAbs2();
    first[static_cast<std::size_t>(i)] = w[0];
  }
  const Eigen::Vector3d mean = s1 / kDraws;
  const Eigen::Vector3d var = s2 / kDraws - mean.cwiseAbs2();
  for (int j = 0; j < 3; ++j) {
    CHECK(std::fabs(mean[j] - p.mu[j]) <= 0.01);
    const double expected = p.mu[j] * (1.0 - p.mu[j]) / (1.0 + p.phi);
    CHECK(std::fabs(var[j] / expected - 1.0) <= 0.15);
  }

  // Kolmogorov-Smirnov distance of the first marginal from its beta CDF.
  std::sort(first.begin(), first.end());
  const BetaParams ab = marginal_beta_params(p, 0);
  double ks = 0.0;
  for (std::size_t i = 0; i < first.size(); ++i) {
    const double f = reg_inc_beta(first[i], ab.a, ab.b);
    ks = std::max({ks, std::fabs(f - static_cast<double>(i) / kDraws),
                   std::fabs(f - static_cast<double>(i + 1) / kDraws)});
  }
  CHECK(ks <= 0.01);
}

TEST_CASE("sampling with tiny concentrations stays on the open simplex") {
  const DirichletParams p = params({0.001, 0.001, 0.998}, 5.0);
  RngStream rng(3, 3);
  for (int i = 0; i < 2000; ++i) {
    const Composition w = sample(p, rng);
    REQUIRE(w.values().minCoeff() > 0.0);
    REQUIRE(w.values().maxCoeff() < 1.0);
    REQUIRE(std::fabs(w.values().sum() - 1.0) <= 1e-12);
  }
}

TEST_CASE("sampling is a pure function of the stream") {
  const DirichletParams p = params({0.2, 0.5, 0.3}, 12.0);
  RngStream a(5, 6);
  RngStream b(5, 6);
  for (int i = 0; i < 20; ++i) CHECK(sample(p, a).values() == sample(p, b).values());
}

TEST_CASE("marginal beta parameters") {
  const BetaParams u = marginal_beta_params(params({0.5, 0.5}, 2.0), 0);
  CHECK(u.a == 1.0);
  CHECK(u.b == 1.0);
  const DirichletParams p = params({0.333, 0.333, 0.334}, 20.0);
  const BetaParams m = marginal_beta_params(p, 1);
  CHECK(m.a == doctest::Approx(6.66));
  CHECK(m.b == doctest::Approx(13.34));
  CHECK(m.a + m.b == doctest::Approx(20.0));
  CHECK_THROWS_AS(marginal_beta_params(p, 3), UsageError);
}
