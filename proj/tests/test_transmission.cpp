#include <random>

#include "doctest.h"

#include "bcm/transmission.hpp"

using namespace bcm;

TEST_CASE("IDD curve") {
  const IddCurve c{3.0, 0.7, 10};
  CHECK(idd_weight(3, c) == 0.5);
  CHECK(idd_weight(7, IddCurve{5.0, 1.0, 14}) == doctest::Approx(1.0 / (1.0 + std::exp(2.0))).epsilon(1e-14));
  CHECK(idd_weight(7, IddCurve{5.0, 1.0, 14}) == doctest::Approx(0.11920).epsilon(1e-4));
  CHECK_THROWS_AS(idd_weight(0, c), std::domain_error);
  CHECK_THROWS_AS(idd_weight(11, c), std::domain_error);
  const auto w = idd_weights(c);
  REQUIRE(w.size() == 10);
  for (int a = 1; a <= 10; ++a) CHECK(w[static_cast<std::size_t>(a) - 1] == idd_weight(a, c));
}

TEST_CASE("weighted infectious count") {
  const IddCurve c{2.0, 1.0, 5};
  CHECK(weighted_infectious(std::vector<Count>(5, 0), c) == 0.0);
  CHECK(weighted_infectious(std::vector<Count>{0, 0, 0, 6, 0}, c) == doctest::Approx(6 * idd_weight(4, c)));
  const std::vector<Count> cohorts{10, 0, 5, 0, 0};
  const double expected = 10.0 / (1.0 + std::exp(-1.0)) + 5.0 / (1.0 + std::exp(1.0));
  CHECK(weighted_infectious(cohorts, c) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(expected == doctest::Approx(8.6553).epsilon(1e-4));
}

TEST_CASE("infection probability") {
  CHECK(infection_prob(0.8, 1.0, 50.0, 1e4) == 0.0);
  CHECK(infection_prob(0.8, 0.3, 0.0, 1e4) == 0.0);
  CHECK(infection_prob(0.3, 0.5, 100.0, 1e4) == doctest::Approx(-std::expm1(-0.0015)).epsilon(1e-14));
  CHECK(infection_prob(0.3, 0.5, 100.0, 1e4) == doctest::Approx(0.0014989).epsilon(1e-4));
  CHECK(infection_prob(0.3f, 0.5f, 100.0f, 1e4f) == doctest::Approx(0.0014989).epsilon(1e-4));

  std::mt19937 g(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const double b = 3 * u(g), a = u(g), inf = 100 * u(g);
    const double p = infection_prob(b, a, inf, 1000.0);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    CHECK(infection_prob(b + 0.1, a, inf, 1000.0) >= p);
  }
}

TEST_CASE("rate to probability") {
  CHECK(rate_to_prob(0.0) == 0.0);
  CHECK(rate_to_prob(50.0) >= 1.0 - 1e-15);
  CHECK(rate_to_prob(std::log(2.0)) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(rate_to_prob(-0.1), std::domain_error);
}

TEST_CASE("log probabilities from pressure") {
  const auto lp = log_prob_from_pressure(0.2);
  CHECK(std::exp(lp.log_p) == doctest::Approx(1.0 - std::exp(-0.2)));
  CHECK(lp.log_1mp == -0.2);
  const auto zero = log_prob_from_pressure(0.0);
  CHECK(std::isinf(zero.log_p));
  CHECK(zero.log_1mp == 0.0);
  // Tiny pressures keep full relative precision.
  CHECK(std::exp(log_prob_from_pressure(1e-12).log_p) == doctest::Approx(1e-12).epsilon(1e-9));
}
