#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <vector>

#include "treegrpo/window.hpp"

using namespace treegrpo;

TEST_CASE("window start masses sum to one") {
  for (double r : {0.1, 0.3, 0.5, 0.9}) {
    for (int w : {1, 3, 7}) {
      const std::vector<double> pmf = window::window_start_pmf(10, w, r);
      CHECK(pmf.size() == static_cast<size_t>(10 - w));
      double total = 0.0;
      for (double p : pmf) total += p;
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("Pr[0] matches the closed form at (T=10, w=3, r=0.5)") {
  const std::vector<double> pmf = window::window_start_pmf(10, 3, 0.5);
  const double expected = 0.5 / (1.0 - std::pow(0.5, 7));
  CHECK(std::abs(pmf[0] - expected) < 1e-15);
  CHECK(pmf[0] == doctest::Approx(0.503937).epsilon(1e-6));
}

TEST_CASE("empirical draw frequencies match the analytic masses") {
  const int draws = 100000;
  const std::vector<double> pmf = window::window_start_pmf(10, 3, 0.5);
  std::vector<int> counts(pmf.size(), 0);
  rng::Stream stream(314159);
  for (int i = 0; i < draws; ++i) {
    const int start = window::sample_window_start(10, 3, 0.5, stream);
    REQUIRE(start >= 0);
    REQUIRE(start < static_cast<int>(pmf.size()));
    ++counts[start];
  }
  double max_dev = 0.0;
  for (size_t i = 0; i < pmf.size(); ++i) {
    const double freq = static_cast<double>(counts[i]) / draws;
    max_dev = std::max(max_dev, std::abs(freq - pmf[i]));
  }
  MESSAGE("max abs deviation: ", max_dev);
  CHECK(max_dev < 0.005);
}

TEST_CASE("r near 1 approaches the uniform law") {
  const std::vector<double> pmf = window::window_start_pmf(10, 3, 0.999999);
  for (double p : pmf) CHECK(p == doctest::Approx(1.0 / 7.0).epsilon(1e-4));
}

TEST_CASE("smaller r puts more mass on early starts") {
  const double early = window::window_start_pmf(10, 3, 0.3)[0];
  const double late = window::window_start_pmf(10, 3, 0.7)[0];
  CHECK(early > late);
}

TEST_CASE("window parameters are validated") {
  rng::Stream stream(1);
  CHECK_THROWS_AS(window::window_start_pmf(10, 3, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(window::window_start_pmf(10, 3, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(window::window_start_pmf(10, 0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(window::window_start_pmf(10, 10, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(window::sample_window_start(10, 3, -0.1, stream),
                  std::invalid_argument);
}

TEST_CASE("shifting strategy walks cyclically") {
  CHECK(window::shifting_window(0, 10, 3, 1).start == 0);
  CHECK(window::shifting_window(7, 10, 3, 1).start == 0);  // wraps at T-w = 7
  CHECK(window::shifting_window(3, 10, 3, 2).start == 6);
  for (int epoch = 0; epoch < 30; ++epoch) {
    const window::WindowPlan plan = window::shifting_window(epoch, 10, 3, 1);
    CHECK(plan.start >= 0);
    CHECK(plan.start <= 6);
    CHECK(plan.steps().back() <= 8);  // never the final step
  }
}

TEST_CASE("random plans stay inside the legal start range") {
  rng::Stream stream(8);
  for (int epoch = 0; epoch < 200; ++epoch) {
    const window::WindowPlan plan =
        window::random_window(epoch, 10, 3, 0.5, stream);
    CHECK(plan.start >= 0);
    CHECK(plan.start <= 6);
    const std::vector<int> steps = plan.steps();
    CHECK(steps.size() == 3);
    CHECK(steps.front() == plan.start);
    CHECK(steps.back() == plan.start + 2);
  }
}

TEST_CASE("fixed strategy validates its start") {
  CHECK(window::fixed_window(5, 10, 3, 4).start == 4);
  CHECK_THROWS_AS(window::fixed_window(0, 10, 3, 7), std::invalid_argument);
}
