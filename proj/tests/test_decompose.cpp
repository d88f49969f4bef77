#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fedst/decompose.hpp"
#include "fedst/rng.hpp"
#include "oracles.hpp"

using namespace fedst;

TEST_CASE("constant series has flat trend and zero seasonal") {
  Vector x = Vector::Constant(5, 3.25);
  const DecomposedWindow d = decompose(x, 5);
  CHECK((d.trend.array() - 3.25).abs().maxCoeff() < 1e-12);
  CHECK(d.seasonal.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("window of one is the identity split") {
  Vector x(4);
  x << 1, -2, 3, 7;
  const DecomposedWindow d = decompose(x, 1);
  CHECK(d.trend == x);
  CHECK(d.seasonal.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ramp with window three matches the hand convolution") {
  Vector x(5);
  x << 0, 1, 2, 3, 4;
  const DecomposedWindow d = decompose(x, 3);
  Vector expect(5);
  expect << 1.0 / 3, 1, 2, 3, 11.0 / 3;
  CHECK((d.trend - expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((d.seasonal - (x - expect)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("invalid windows are configuration errors") {
  Vector x = Vector::Zero(6);
  CHECK_THROWS_AS(decompose(x, 4), ConfigError);
  CHECK_THROWS_AS(decompose(x, 7), ConfigError);
  CHECK_THROWS_AS(decompose(x, 0), ConfigError);
}

TEST_CASE("additivity and shift equivariance hold on random series") {
  Rng rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = 8 + static_cast<Index>(rng() % 40);
    Vector x(n);
    for (Index i = 0; i < n; ++i) x[i] = 10.0 * uniform01(rng) - 5.0;
    const Index window = 1 + 2 * static_cast<Index>(rng() % static_cast<std::uint64_t>(n / 2));

    const DecomposedWindow d = decompose(x, window);
    CHECK((d.trend + d.seasonal - x).cwiseAbs().maxCoeff() < 1e-12);

    const double c = 4.0 * uniform01(rng) - 2.0;
    const DecomposedWindow shifted = decompose((x.array() + c).matrix(), window);
    CHECK((shifted.trend - (d.trend.array() + c).matrix()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((shifted.seasonal - d.seasonal).cwiseAbs().maxCoeff() < 1e-12);
  }
}
