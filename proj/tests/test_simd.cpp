#include <doctest.h>

#include <cmath>
#include <vector>

#include "cezsl/common.hpp"
#include "cezsl/simd/kernels.hpp"
#include "oracles.hpp"

using namespace cezsl;

TEST_SUITE("simd") {
  TEST_CASE("scalar kernels match long-double references") {
    Rng rng(11);
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 33u, 100u}) {
      Vector a(n), b(n);
      for (auto& x : a) x = rng.normal();
      for (auto& x : b) x = rng.normal();
      CHECK(simd::scalar::dot(a.data(), b.data(), n) == doctest::Approx(oracle::dot(a, b)).epsilon(1e-12));
      const double d = oracle::dist(a, b);
      CHECK(simd::scalar::squared_distance(a.data(), b.data(), n) == doctest::Approx(d * d).epsilon(1e-12));
    }
  }

  TEST_CASE("avx2 kernels agree with scalar") {
    if (!simd::avx2_available()) {
      MESSAGE("avx2 not available; skipped");
      return;
    }
    Rng rng(12);
    for (std::size_t n = 0; n < 70; ++n) {
      Vector a(n), b(n), y1(n), y2;
      for (auto& x : a) x = rng.uniform(-3, 3);
      for (auto& x : b) x = rng.uniform(-3, 3);
      for (auto& x : y1) x = rng.normal();
      y2 = y1;
      const double sd = simd::scalar::dot(a.data(), b.data(), n);
      const double vd = simd::avx2::dot(a.data(), b.data(), n);
      CHECK(std::abs(sd - vd) <= 1e-12 * (1.0 + std::abs(sd)));
      const double ss = simd::scalar::squared_distance(a.data(), b.data(), n);
      const double vs = simd::avx2::squared_distance(a.data(), b.data(), n);
      CHECK(std::abs(ss - vs) <= 1e-12 * (1.0 + ss));
      simd::scalar::axpy(0.37, a.data(), y1.data(), n);
      simd::avx2::axpy(0.37, a.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-14));
    }
  }

  TEST_CASE("backend switch and dispatch") {
    Vector a{1, 2, 3, 4, 5}, b{5, 4, 3, 2, 1};
    {
      simd::ScopedBackend guard(simd::Backend::scalar);
      CHECK(simd::active_backend() == simd::Backend::scalar);
      CHECK(simd::dot(a, b) == 35.0);
      CHECK(simd::squared_distance(a, b) == 40.0);
      CHECK(simd::distance(a, b) == doctest::Approx(std::sqrt(40.0)));
    }
    if (simd::avx2_available()) {
      simd::ScopedBackend guard(simd::Backend::avx2);
      CHECK(simd::active_backend() == simd::Backend::avx2);
      CHECK(simd::dot(a, b) == 35.0);
      CHECK(simd::squared_distance(a, b) == 40.0);
    } else {
      CHECK_THROWS(simd::set_backend(simd::Backend::avx2));
    }
    CHECK(simd::to_string(simd::Backend::scalar) == "scalar");
  }
}
