#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "upr/kernels.hpp"
#include "upr/rng.hpp"

using namespace upr;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

}  // namespace

TEST_CASE("scalar kernels: hand values") {
  const double a[] = {1.0, 2.0, 3.0};
  const double b[] = {4.0, -1.0, 0.5};
  CHECK(kernels::scalar::dot(a, b, 3) == doctest::Approx(1.0 * 4 - 2 + 1.5));
  CHECK(kernels::scalar::sum(a, 3) == doctest::Approx(6.0));
  CHECK(kernels::scalar::max(b, 3) == doctest::Approx(4.0));
  CHECK(kernels::scalar::sq_diff_sum(a, b, 3) == doctest::Approx(9.0 + 9.0 + 6.25));

  double y[] = {1.0, 1.0, 1.0};
  kernels::scalar::axpy(2.0, a, y, 3);
  CHECK(y[0] == doctest::Approx(3.0));
  CHECK(y[2] == doctest::Approx(7.0));

  const double iv[] = {1.0, 0.5, 2.0};
  CHECK(kernels::scalar::weighted_sq_dist(a, b, iv, 3) == doctest::Approx(9.0 + 4.5 + 12.5));
}

TEST_CASE("dispatched backend equals scalar reference on random inputs") {
  Rng rng(20240811);
  INFO("active backend: ", kernels::active().name);
  // odd sizes exercise the vector remainder paths
  for (std::size_t n : {1u, 3u, 4u, 7u, 8u, 17u, 64u, 129u, 1000u}) {
    auto a = random_vec(rng, n);
    auto b = random_vec(rng, n);
    auto iv = random_vec(rng, n);
    for (double& x : iv) x = std::abs(x) + 0.1;

    CHECK(kernels::dot(a.data(), b.data(), n) ==
          doctest::Approx(kernels::scalar::dot(a.data(), b.data(), n)).epsilon(1e-12));
    CHECK(kernels::sum(a.data(), n) ==
          doctest::Approx(kernels::scalar::sum(a.data(), n)).epsilon(1e-12));
    CHECK(kernels::max(a.data(), n) == kernels::scalar::max(a.data(), n));
    CHECK(kernels::sq_diff_sum(a.data(), b.data(), n) ==
          doctest::Approx(kernels::scalar::sq_diff_sum(a.data(), b.data(), n)).epsilon(1e-12));
    CHECK(kernels::weighted_sq_dist(a.data(), b.data(), iv.data(), n) ==
          doctest::Approx(kernels::scalar::weighted_sq_dist(a.data(), b.data(), iv.data(), n))
              .epsilon(1e-12));

    std::vector<double> out1(n), out2(n);
    kernels::add(a.data(), b.data(), out1.data(), n);
    kernels::scalar::add(a.data(), b.data(), out2.data(), n);
    CHECK(out1 == out2);
    kernels::sub(a.data(), b.data(), out1.data(), n);
    kernels::scalar::sub(a.data(), b.data(), out2.data(), n);
    CHECK(out1 == out2);
    kernels::mul(a.data(), b.data(), out1.data(), n);
    kernels::scalar::mul(a.data(), b.data(), out2.data(), n);
    CHECK(out1 == out2);
    kernels::scale(a.data(), 1.7, out1.data(), n);
    kernels::scalar::scale(a.data(), 1.7, out2.data(), n);
    CHECK(out1 == out2);

    auto y1 = random_vec(rng, n);
    auto y2 = y1;
    kernels::axpy(-0.3, a.data(), y1.data(), n);
    kernels::scalar::axpy(-0.3, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-12));
  }
}

#if defined(UPR_HAVE_AVX2_BUILD)
TEST_CASE("avx2 variants equal scalar reference directly") {
  if (!kernels::avx2_selected()) return;  // cpu without avx2
  Rng rng(7);
  for (std::size_t n : {5u, 12u, 33u, 256u}) {
    auto a = random_vec(rng, n);
    auto b = random_vec(rng, n);
    CHECK(kernels::avx2::dot(a.data(), b.data(), n) ==
          doctest::Approx(kernels::scalar::dot(a.data(), b.data(), n)).epsilon(1e-12));
    CHECK(kernels::avx2::max(a.data(), n) == kernels::scalar::max(a.data(), n));
    CHECK(kernels::avx2::sum(a.data(), n) ==
          doctest::Approx(kernels::scalar::sum(a.data(), n)).epsilon(1e-12));
  }
}
#endif

TEST_CASE("rng determinism and fixed mappings") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng c(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const int k = c.uniform_int(3, 7);
    CHECK(k >= 3);
    CHECK(k <= 7);
  }

  // g = -log(-log(u)); u = e^-1 is the fixed point g = 0
  CHECK(Rng::gumbel_from_uniform(std::exp(-1.0)) == doctest::Approx(0.0).epsilon(1e-15));

  // Box-Muller moments
  Rng d(99);
  double mean = 0.0, var = 0.0;
  const int n = 200000;
  std::vector<double> xs(n);
  for (int i = 0; i < n; ++i) {
    xs[i] = d.normal();
    mean += xs[i];
  }
  mean /= n;
  for (int i = 0; i < n; ++i) var += (xs[i] - mean) * (xs[i] - mean);
  var /= n;
  CHECK(mean == doctest::Approx(0.0).epsilon(0.01));
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}
