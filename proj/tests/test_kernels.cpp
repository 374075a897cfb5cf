#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "cffe/kernels.hpp"

using namespace cffe;

namespace {

std::vector<double> random_vec(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 3.0);
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

}  // namespace

TEST_CASE("scalar reductions match hand values") {
  std::vector<double> a{1.0, 2.0, 3.0, 4.0};
  std::vector<double> b{2.0, -1.0, 0.5, 3.0};
  CHECK(kernels::scalar::sum(a.data(), a.size()) == doctest::Approx(10.0).epsilon(1e-15));
  CHECK(kernels::scalar::dot(a.data(), b.data(), a.size()) ==
        doctest::Approx(2.0 - 2.0 + 1.5 + 12.0).epsilon(1e-15));
  CHECK(kernels::scalar::sumsq(a.data(), a.size()) ==
        doctest::Approx(30.0).epsilon(1e-15));
}

TEST_CASE("axpy and shift mutate in place") {
  std::vector<double> y{1.0, 1.0, 1.0};
  std::vector<double> x{1.0, 2.0, 3.0};
  kernels::scalar::axpy(2.0, x.data(), y.data(), y.size());
  CHECK(y[0] == doctest::Approx(3.0));
  CHECK(y[2] == doctest::Approx(7.0));
  kernels::scalar::shift(-1.0, y.data(), y.size());
  CHECK(y[0] == doctest::Approx(2.0));
}

TEST_CASE("dispatch agrees with scalar reference across sizes") {
  // odd lengths exercise the vector tails
  for (std::size_t n : {0u, 1u, 3u, 7u, 8u, 9u, 31u, 64u, 257u, 4096u, 4097u}) {
    auto a = random_vec(n, 11u + static_cast<unsigned>(n));
    auto b = random_vec(n, 97u + static_cast<unsigned>(n));
    const double rs = kernels::scalar::sum(a.data(), n);
    const double rd = kernels::scalar::dot(a.data(), b.data(), n);
    const double rq = kernels::scalar::sumsq(a.data(), n);
    const double tol = 1e-12 * (1.0 + static_cast<double>(n));
    CHECK(std::abs(kernels::sum(a) - rs) <= tol * (1.0 + std::abs(rs)));
    CHECK(std::abs(kernels::dot(a, b) - rd) <= tol * (1.0 + std::abs(rd)));
    CHECK(std::abs(kernels::sumsq(a) - rq) <= tol * (1.0 + std::abs(rq)));

    auto y1 = random_vec(n, 313u);
    auto y2 = y1;
    kernels::scalar::axpy(1.75, a.data(), y1.data(), n);
    kernels::axpy(1.75, a, y2);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(std::abs(y1[i] - y2[i]) <= 1e-12 * (1.0 + std::abs(y1[i])));

    auto z1 = random_vec(n, 99u);
    auto z2 = z1;
    kernels::scalar::shift(-0.625, z1.data(), n);
    kernels::shift(-0.625, z2);
    for (std::size_t i = 0; i < n; ++i) CHECK(z1[i] == z2[i]);
  }
}

#if CFFE_KERNELS_HAVE_AVX2
TEST_CASE("avx2 lane agrees with scalar when the cpu supports it") {
  if (!kernels::avx2_active()) return;
  for (std::size_t n : {5u, 16u, 33u, 1000u}) {
    auto a = random_vec(n, 7u);
    auto b = random_vec(n, 8u);
    const double tol = 1e-12 * (1.0 + static_cast<double>(n));
    CHECK(std::abs(kernels::avx2::sum(a.data(), n) -
                   kernels::scalar::sum(a.data(), n)) <= tol);
    CHECK(std::abs(kernels::avx2::dot(a.data(), b.data(), n) -
                   kernels::scalar::dot(a.data(), b.data(), n)) <= tol);
    CHECK(std::abs(kernels::avx2::sumsq(a.data(), n) -
                   kernels::scalar::sumsq(a.data(), n)) <= tol);
  }
}
#endif
