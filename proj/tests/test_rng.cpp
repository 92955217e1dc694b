#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "compresid/error.hpp"
#include "compresid/rng.hpp"

using namespace compresid;

TEST_CASE("streams are reproducible") {
  RngStream a(2024, 17);
  RngStream b(2024, 17);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());

  RngStream c(2024, 18);
  RngStream d(2024, 17);
  int equal = 0;
  for (int i = 0; i < 100; ++i) equal += c.next_u64() == d.next_u64();
  CHECK(equal == 0);
}

TEST_CASE("substreams differ from their parent and from each other") {
  const RngStream parent(5, 9);
  RngStream s1 = parent.substream(1);
  RngStream s2 = parent.substream(2);
  RngStream p = parent;
  CHECK(s1.next_u64() != s2.next_u64());
  CHECK(parent.substream(1).next_u64() == RngStream(5, 9).substream(1).next_u64());
  CHECK(p.next_u64() != parent.substream(1).next_u64());
}

TEST_CASE("uniform draws are equidistributed") {
  RngStream rng(1, 2);
  constexpr int kDraws = 1000000;
  std::array<int, 10> bins{};
  double sum = 0.0;
  for (int i = 0; i < kDraws; ++i) {
    const double u = sample_uniform(0.0, 1.0, rng);
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    ++bins[static_cast<std::size_t>(u * 10.0)];
  }
  CHECK(std::fabs(sum / kDraws - 0.5) <= 0.002);
  double chi2 = 0.0;
  for (const int count : bins) chi2 += std::pow(count - kDraws / 10.0, 2) / (kDraws / 10.0);
  CHECK(chi2 < 27.88);  // chi-square(9) upper 0.1% point

  CHECK_THROWS_AS(sample_uniform(1.0, 1.0, rng), DomainError);
}

TEST_CASE("independent streams are uncorrelated") {
  constexpr int kDraws = 200000;
  double sxy = 0.0;
  for (int i = 0; i < kDraws / 1000; ++i) {
    RngStream x(77, 2 * i + 1);
    RngStream y(77, 2 * i + 2);
    for (int j = 0; j < 1000; ++j) sxy += (x.next_uniform() - 0.5) * (y.next_uniform() - 0.5);
  }
  const double corr = sxy / kDraws * 12.0;
  CHECK(std::fabs(corr) < 4.0 / std::sqrt(kDraws));
}

TEST_CASE("gamma sampler moments") {
  for (const double shape : {3.0, 0.4, 25.0}) {
    RngStream rng(31, static_cast<std::uint64_t>(shape * 10));
    constexpr int kDraws = 1000000;
    double s1 = 0.0;
    double s2 = 0.0;
    for (int i = 0; i < kDraws; ++i) {
      const double g = sample_gamma(shape, rng);
      REQUIRE(g > 0.0);
      s1 += g;
      s2 += g * g;
    }
    const double mean = s1 / kDraws;
    const double var = s2 / kDraws - mean * mean;
    CAPTURE(shape);
    CHECK(std::fabs(mean - shape) <= 0.01 * std::max(1.0, shape / 3.0));
    CHECK(std::fabs(var - shape) <= 0.05 * std::max(1.0, shape / 3.0));
  }
  RngStream rng(1, 1);
  CHECK_THROWS_AS(sample_gamma(0.0, rng), DomainError);
}

TEST_CASE("log-gamma sampler consumes the same draws") {
  RngStream a(8, 8);
  RngStream b(8, 8);
  for (int i = 0; i < 50; ++i) {
    const double shape = 0.05 + 0.1 * i;
    CHECK(std::log(sample_gamma(shape, a)) == doctest::Approx(sample_log_gamma(shape, b)));
  }
  CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("standard normal sampler") {
  RngStream rng(3, 3);
  constexpr int kDraws = 400000;
  double s1 = 0.0;
  double s2 = 0.0;
  for (int i = 0; i < kDraws; ++i) {
    const double z = sample_std_normal(rng);
    s1 += z;
    s2 += z * z;
  }
  CHECK(std::fabs(s1 / kDraws) < 0.01);
  CHECK(std::fabs(s2 / kDraws - 1.0) < 0.01);
}
