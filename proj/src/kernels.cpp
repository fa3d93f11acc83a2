#include "upr/kernels.hpp"

#include <cstdlib>
#include <limits>

namespace upr::kernels {

namespace scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void add(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(const double* a, double c, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * c;
}

double sum(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

double max(const double* a, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    if (a[i] > m) m = a[i];
  return m;
}

double sq_diff_sum(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double weighted_sq_dist(const double* x, const double* mean, const double* inv_var, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - mean[i];
    acc += inv_var[i] * d * d;
  }
  return acc;
}

}  // namespace scalar

namespace {

constexpr Backend kScalarBackend = {
    "scalar",    scalar::dot, scalar::axpy,        scalar::add,
    scalar::sub, scalar::mul, scalar::scale,       scalar::sum,
    scalar::max, scalar::sq_diff_sum, scalar::weighted_sq_dist,
};

#if defined(UPR_HAVE_AVX2_BUILD)
constexpr Backend kAvx2Backend = {
    "avx2",        avx2::dot, avx2::axpy, avx2::add,
    avx2::sub,     avx2::mul, avx2::scale, avx2::sum,
    avx2::max,     avx2::sq_diff_sum, avx2::weighted_sq_dist,
};
#endif

const Backend& select_backend() {
#if defined(UPR_HAVE_AVX2_BUILD)
  if (std::getenv("UPR_FORCE_SCALAR") == nullptr && __builtin_cpu_supports("avx2") &&
      __builtin_cpu_supports("fma")) {
    return kAvx2Backend;
  }
#endif
  return kScalarBackend;
}

}  // namespace

const Backend& active() {
  static const Backend& backend = select_backend();
  return backend;
}

bool avx2_selected() { return active().name[0] == 'a'; }

}  // namespace upr::kernels
