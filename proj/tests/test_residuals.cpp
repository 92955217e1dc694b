#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "compresid/error.hpp"
#include "compresid/residuals.hpp"
#include "compresid/simstudy.hpp"
#include "compresid/special.hpp"
#include "support.hpp"

using namespace compresid;

namespace {

FittedValues constant_fit(Eigen::Index n, const Eigen::RowVectorXd& mu, double phi) {
  return {mu.replicate(n, 1), Eigen::VectorXd::Constant(n, phi)};
}

RowRef row(const Eigen::RowVectorXd& r) { return RowRef(r); }

Eigen::RowVectorXd rv(std::initializer_list<double> v) {
  Eigen::RowVectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index j = 0;
  for (const double x : v) out[j++] = x;
  return out;
}

// Refitter that ignores the replicate and returns the generating values.
Refitter known_parameters(const FittedValues& truth) {
  return [truth](const Eigen::MatrixXd&) { return truth; };
}

}  // namespace

TEST_CASE("kind names round-trip") {
  for (const auto kind : kAllKinds) CHECK(parse_kind(kind_name(kind)) == kind);
  CHECK_THROWS_AS(parse_kind("q3"), UsageError);
  CHECK(multivariate_function(ResidualKind::a2) == MultivariateFunction::absolute);
  CHECK(multivariate_function(ResidualKind::q1) == MultivariateFunction::quadratic);
  CHECK(sign_rule(ResidualKind::q1) == SignRule::worst_component);
  CHECK(sign_rule(ResidualKind::a2) == SignRule::dominant_mean);
}

TEST_CASE("quantile residuals") {
  Eigen::MatrixXd y(1, 2);
  y << 0.5, 0.5;
  const Eigen::MatrixXd q0 = quantile_residuals(y, constant_fit(1, rv({0.5, 0.5}), 7.0));
  CHECK(std::fabs(q0(0, 0)) <= 1e-14);
  CHECK(std::fabs(q0(0, 1)) <= 1e-14);

  Eigen::MatrixXd y3(1, 3);
  y3 << 0.25, 0.35, 0.40;
  const Eigen::MatrixXd q1 = quantile_residuals(y3, constant_fit(1, rv({0.333, 0.333, 0.334}), 20.0));
  CHECK(std::fabs(q1(0, 0) + 0.76641061240682338451) <= 1e-10);

  // Deep in the tail the CDF is clamped so the residual stays finite.
  Eigen::MatrixXd tail(1, 2);
  tail << 1e-200, 0.5;
  const Eigen::MatrixXd qt = quantile_residuals(tail, constant_fit(1, rv({0.5, 0.5}), 40.0));
  CHECK(std::isfinite(qt(0, 0)));
  CHECK(qt(0, 0) == doctest::Approx(std_normal_quantile(kCdfClamp)));

  Eigen::MatrixXd bad(2, 2);
  bad << 0.5, 0.5, 0.0, 1.0;
  CHECK_THROWS_AS(quantile_residuals(bad, constant_fit(2, rv({0.5, 0.5}), 2.0)), DataError);
}

TEST_CASE("quantile residuals are standard normal under the true model") {
  RngStream rng(40, 0);
  const ScenarioConfig cfg = scenario_config("1a", 10000);
  const Dataset data = generate_scenario_dataset(cfg, rng);
  const Design design(scenario_model_spec(), data);
  const Eigen::MatrixXd q = quantile_residuals(data.responses, design.predict(cfg.coefficients.flatten()));
  for (Eigen::Index j = 0; j < 3; ++j) {
    const Eigen::VectorXd col = q.col(j);
    CHECK(ad_statistic(std::span<const double>(col.data(), static_cast<std::size_t>(col.size()))) <
          kAdCritical5);
  }
}

TEST_CASE("multivariate residual") {
  const Eigen::RowVectorXd zero = rv({0, 0, 0});
  CHECK(multivariate_residual(row(zero), MultivariateFunction::absolute) == 0.0);
  CHECK(multivariate_residual(row(zero), MultivariateFunction::quadratic) == 0.0);
  const Eigen::RowVectorXd q = rv({1, -2, 2});
  CHECK(multivariate_residual(row(q), MultivariateFunction::absolute) == 5.0);
  CHECK(multivariate_residual(row(q), MultivariateFunction::quadratic) == 9.0);
  const Eigen::RowVectorXd perm = rv({2, 1, -2});
  CHECK(multivariate_residual(row(perm), MultivariateFunction::absolute) == 5.0);
  CHECK(multivariate_residual(row(perm), MultivariateFunction::quadratic) == 9.0);
}

TEST_CASE("composite residuals") {
  Eigen::MatrixXd y(2, 3);
  y << 0.5, 0.3, 0.2, 0.4, 0.4, 0.2;
  const FittedValues fv = constant_fit(2, rv({0.4, 0.4, 0.2}), 25.0);
  const Eigen::VectorXd r = composite_pearson(y, fv);
  CHECK(r[0] == doctest::Approx(0.0008).epsilon(1e-12));
  CHECK(r[1] == 0.0);

  Eigen::MatrixXd yp(1, 3);
  yp << 0.2, 0.5, 0.3;
  const FittedValues fp = constant_fit(1, rv({0.2, 0.4, 0.4}), 25.0);
  CHECK(composite_pearson(yp, fp)[0] == doctest::Approx(r[0]).epsilon(1e-12));

  const Eigen::MatrixXd q = quantile_residuals(y, fv);
  CHECK(composite_quantile(q)[0] == doctest::Approx(q.row(0).squaredNorm()));
  CHECK(composite_residuals(y, fv, ResidualKind::composite_quantile) == composite_quantile(q));
  CHECK_THROWS_AS(composite_residuals(y, fv, ResidualKind::a1), UsageError);
}

TEST_CASE("sign functions") {
  CHECK(sign_h1(row(rv({2.0, -0.5, 0.3}))) == 1);
  CHECK(sign_h1(row(rv({-2.0, 0.5}))) == -1);
  CHECK(sign_h1(row(rv({1.5, -1.5}))) == 1);
  CHECK(sign_h1(row(rv({-1.5, 1.5}))) == -1);
  CHECK(sign_h1(row(rv({0.0, 0.0}))) == 1);

  Eigen::MatrixXd y(3, 3);
  y << 0.2, 0.5, 0.3, 0.2, 0.3, 0.5, 0.6, 0.2, 0.2;
  // Column totals 1.0, 1.0, 1.0: tie, lowest index wins.
  CHECK(dominant_component(y) == 0);
  y(2, 1) = 0.25;
  y(2, 2) = 0.15;
  CHECK(dominant_component(y) == 1);
  Eigen::MatrixXd q(3, 3);
  q << 1, -2, 3, -1, 0, 1, 4, 2, -4;
  const Eigen::VectorXi h = sign_h2(q, y);
  CHECK(h[0] == -1);
  CHECK(h[1] == 1);
  CHECK(h[2] == 1);
}

TEST_CASE("bootstrap ranks match a brute-force recount") {
  RngStream rng(41, 0);
  const ScenarioConfig cfg = scenario_config("1a", 10);
  const Dataset data = generate_scenario_dataset(cfg, rng);
  const FittedModel fit = fit_mle(scenario_model_spec(), data);
  REQUIRE(fit.converged);
  BootstrapConfig boot;
  boot.B = 50;
  boot.seed = 123;
  boot.keep_replicates = true;
  const auto results = class_residuals(fit, data, kClassKinds, boot);
  REQUIRE(results.size() == 4);
  for (const auto& r : results) {
    REQUIRE(r.replicate_l.rows() == 50);
    for (Eigen::Index i = 0; i < 10; ++i) {
      int count = 0;
      for (Eigen::Index b = 0; b < 50; ++b) count += r.replicate_l(b, i) < r.l[i] ? 1 : 0;
      CHECK(r.a[i] == count);
      CHECK(r.a[i] >= 0);
      CHECK(r.a[i] <= 50);
      CHECK(r.u[i] > r.a[i] / 51.0);
      CHECK(r.u[i] < (r.a[i] + 1) / 51.0);
      CHECK(r.s[i] == std_normal_quantile(r.u[i]));
    }
  }
  // The four kinds reuse one set of simulated replicates.
  for (std::size_t c = 0; c < 4; ++c) {
    const ClassResidualResult single = class_residual(fit, data, kClassKinds[c], boot);
    CHECK(single.s == results[c].s);
  }
}

TEST_CASE("extreme observations get extreme ranks") {
  Eigen::MatrixXd y = Eigen::MatrixXd::Constant(6, 3, 1.0 / 3.0);
  y.row(0) << 0.90, 0.05, 0.05;
  y.row(1) << 0.02, 0.49, 0.49;
  const FittedValues truth = constant_fit(6, rv({1.0 / 3, 1.0 / 3, 1.0 / 3}), 50.0);
  BootstrapConfig boot;
  boot.B = 99;
  boot.seed = 5;
  const std::array<ResidualKind, 1> kinds = {ResidualKind::a1};
  const auto r = bootstrap_class_residuals(y, truth, known_parameters(truth), kinds, boot).front();
  CHECK(r.a[0] == 99);
  CHECK(r.s[0] > std_normal_quantile(99.0 / 100.0));
  CHECK(r.a[1] == 0);
  CHECK(r.u[1] > 0.0);
  CHECK(r.u[1] < 1.0 / 100.0);
  CHECK(r.s[1] < std_normal_quantile(1.0 / 100.0));
}

TEST_CASE("class residuals do not depend on the thread count") {
  RngStream rng(42, 0);
  const Dataset data = generate_scenario_dataset(scenario_config("2a", 20), rng);
  const FittedModel fit = fit_mle(scenario_model_spec(), data);
  BootstrapConfig one;
  one.B = 60;
  one.seed = 77;
  BootstrapConfig many = one;
  many.threads = 4;
  const auto a = class_residuals(fit, data, kClassKinds, one);
  const auto b = class_residuals(fit, data, kClassKinds, many);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(a[c].s == b[c].s);
    CHECK(a[c].a == b[c].a);
  }
  BootstrapConfig other = one;
  other.seed = 78;
  CHECK(class_residuals(fit, data, kClassKinds, other)[0].s != a[0].s);
}

TEST_CASE("failed refits are redrawn and counted") {
  const Eigen::MatrixXd y = Eigen::MatrixXd::Constant(5, 3, 1.0 / 3.0);
  const FittedValues truth = constant_fit(5, rv({0.2, 0.3, 0.5}), 30.0);
  const Refitter flaky = [truth](const Eigen::MatrixXd& yb) {
    if (yb(0, 0) < 0.2) throw FitError("synthetic failure");
    return truth;
  };
  BootstrapConfig boot;
  boot.B = 40;
  boot.seed = 9;
  const std::array<ResidualKind, 2> kinds = {ResidualKind::q1, ResidualKind::a2};
  const auto r = bootstrap_class_residuals(y, truth, flaky, kinds, boot);
  CHECK(r[0].replicate_failures > 0);
  CHECK(r[0].replicate_failures == r[1].replicate_failures);
  CHECK(r[0].s.allFinite());

  const Refitter broken = [](const Eigen::MatrixXd&) -> FittedValues { throw FitError("always"); };
  CHECK_THROWS_AS(bootstrap_class_residuals(y, truth, broken, kinds, boot), ReplicateFailureError);

  const std::array<ResidualKind, 1> composite = {ResidualKind::composite_pearson};
  CHECK_THROWS_AS(bootstrap_class_residuals(y, truth, flaky, composite, boot), UsageError);
  boot.B = 0;
  CHECK_THROWS_AS(bootstrap_class_residuals(y, truth, flaky, kinds, boot), UsageError);
}

TEST_CASE("with known parameters the class residuals are standard normal") {
  const ScenarioConfig cfg = scenario_config("1a", 10);
  RngStream cov(43, 0);
  const Dataset design = generate_scenario_dataset(cfg, cov);
  const Design d(scenario_model_spec(), design);
  const FittedValues truth = d.predict(cfg.coefficients.flatten());
  std::array<std::vector<double>, 4> pooled;
  for (std::uint64_t rep = 0; rep < 300; ++rep) {
    RngStream rng(44, rep);
    const Eigen::MatrixXd y = sample_rows(truth.mu, truth.phi, rng);
    BootstrapConfig boot;
    boot.B = 99;
    boot.seed = derive_seed(45, rep);
    const auto r = bootstrap_class_residuals(y, truth, known_parameters(truth), kClassKinds, boot);
    for (std::size_t c = 0; c < 4; ++c) {
      pooled[c].insert(pooled[c].end(), r[c].s.data(), r[c].s.data() + r[c].s.size());
    }
  }
  for (std::size_t c = 0; c < 4; ++c) {
    CAPTURE(kind_name(kClassKinds[c]));
    CHECK(ad_statistic(pooled[c]) < kAdCritical1);
  }
}
