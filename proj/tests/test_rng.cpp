#include <doctest.h>

#include <cmath>
#include <vector>

#include "drivestyle/rng.hpp"

using drivestyle::Rng;

TEST_SUITE_BEGIN("rng");

TEST_CASE("substreams with different names are decorrelated, same name identical") {
  Rng a = Rng::substream(42, "init");
  Rng b = Rng::substream(42, "init");
  Rng c = Rng::substream(42, "sweeps");
  CHECK(a.next_u64() == b.next_u64());
  CHECK(a.next_u64() == b.next_u64());
  Rng a2 = Rng::substream(42, "init");
  CHECK(a2.next_u64() != c.next_u64());
}

TEST_CASE("uniform01 stays strictly inside (0,1) and has mean 1/2") {
  Rng rng(1);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform01();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("normal moments") {
  Rng rng(2);
  double sum = 0.0, sum2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum2 += z * z;
  }
  CHECK(sum / n == doctest::Approx(0.0).epsilon(1).scale(0.01));
  CHECK(sum2 / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("gamma mean and variance match shape") {
  Rng rng(3);
  for (double shape : {0.3, 1.0, 2.5, 10.0}) {
    double sum = 0.0, sum2 = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const double g = rng.gamma(shape);
      sum += g;
      sum2 += g * g;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    CHECK(mean == doctest::Approx(shape).epsilon(0.03));
    CHECK(var == doctest::Approx(shape).epsilon(0.08));
  }
}

TEST_CASE("beta(1,1) is uniform, beta(2,6) has mean 1/4") {
  Rng rng(4);
  double s11 = 0.0, s26 = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) s11 += rng.beta(1.0, 1.0);
  for (int i = 0; i < n; ++i) s26 += rng.beta(2.0, 6.0);
  CHECK(s11 / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(s26 / n == doctest::Approx(0.25).epsilon(0.02));
}

TEST_CASE("dirichlet draws live on the simplex with the right mean") {
  Rng rng(5);
  const std::vector<double> conc = {1.0, 2.0, 7.0};
  std::vector<double> mean(3, 0.0);
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const auto d = rng.dirichlet(conc);
    double total = 0.0;
    for (int k = 0; k < 3; ++k) {
      total += d[k];
      mean[k] += d[k];
    }
    REQUIRE(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(mean[0] / n == doctest::Approx(0.1).epsilon(0.05));
  CHECK(mean[1] / n == doctest::Approx(0.2).epsilon(0.05));
  CHECK(mean[2] / n == doctest::Approx(0.7).epsilon(0.05));
}

TEST_CASE("categorical respects weights") {
  Rng rng(6);
  const std::vector<double> w = {1.0, 3.0};
  int ones = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ones += rng.categorical(w);
  CHECK(static_cast<double>(ones) / n == doctest::Approx(0.75).epsilon(0.01));
}

TEST_CASE("uniform_int covers [0,n) uniformly") {
  Rng rng(7);
  std::vector<int> counts(5, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[rng.uniform_int(5)];
  for (int k = 0; k < 5; ++k) {
    CHECK(static_cast<double>(counts[k]) / n == doctest::Approx(0.2).epsilon(0.05));
  }
}

TEST_SUITE_END();
