#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "batchrl/rng.hpp"

using batchrl::Rng;

TEST_CASE("same seed reproduces the sequence, different seeds do not") {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 1000; ++i) {
    const double x = a.uniform();
    all_equal &= (x == b.uniform());
    any_diff |= (x != c.uniform());
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("uniform stays in [0, 1)") {
  Rng rng(7);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("normal has standard moments") {
  Rng rng(11);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum2 += z * z;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("uniform_index covers [0, n) roughly uniformly") {
  Rng rng(5);
  int counts[4] = {0, 0, 0, 0};
  const int n = 40000;
  for (int i = 0; i < n; ++i) counts[rng.uniform_index(4)]++;
  for (int k = 0; k < 4; ++k) {
    CHECK(counts[k] > 9500);
    CHECK(counts[k] < 10500);
  }
}

TEST_CASE("derive gives decorrelated, reproducible children") {
  Rng parent(123);
  Rng c1 = parent.derive(0);
  parent.uniform();  // consuming the parent must not change derivation
  Rng c2 = Rng(123).derive(0);
  for (int i = 0; i < 100; ++i) CHECK(c1.uniform() == c2.uniform());

  Rng d1 = Rng(123).derive(1);
  bool differs = false;
  Rng c3 = Rng(123).derive(0);
  for (int i = 0; i < 100; ++i) differs |= (c3.uniform() != d1.uniform());
  CHECK(differs);
}
