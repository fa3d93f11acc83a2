#pragma once

#include <cstddef>

// Data-parallel inner loops used by the autodiff engine and the HMM
// emission scoring. Every kernel has a scalar reference implementation
// and (on x86-64) an AVX2+FMA variant; the active backend is selected
// once at startup. Set UPR_FORCE_SCALAR=1 in the environment to pin the
// scalar backend.
namespace upr::kernels {

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void scale(const double* a, double c, double* out, std::size_t n);
double sum(const double* a, std::size_t n);
double max(const double* a, std::size_t n);
double sq_diff_sum(const double* a, const double* b, std::size_t n);
// sum_i inv_var[i] * (x[i] - mean[i])^2
double weighted_sq_dist(const double* x, const double* mean, const double* inv_var, std::size_t n);
}  // namespace scalar

#if defined(UPR_HAVE_AVX2_BUILD)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void scale(const double* a, double c, double* out, std::size_t n);
double sum(const double* a, std::size_t n);
double max(const double* a, std::size_t n);
double sq_diff_sum(const double* a, const double* b, std::size_t n);
double weighted_sq_dist(const double* x, const double* mean, const double* inv_var, std::size_t n);
}  // namespace avx2
#endif

struct Backend {
  const char* name;
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*add)(const double*, const double*, double*, std::size_t);
  void (*sub)(const double*, const double*, double*, std::size_t);
  void (*mul)(const double*, const double*, double*, std::size_t);
  void (*scale)(const double*, double, double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  double (*max)(const double*, std::size_t);
  double (*sq_diff_sum)(const double*, const double*, std::size_t);
  double (*weighted_sq_dist)(const double*, const double*, const double*, std::size_t);
};

const Backend& active();
bool avx2_selected();

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline void add(const double* a, const double* b, double* out, std::size_t n) { active().add(a, b, out, n); }
inline void sub(const double* a, const double* b, double* out, std::size_t n) { active().sub(a, b, out, n); }
inline void mul(const double* a, const double* b, double* out, std::size_t n) { active().mul(a, b, out, n); }
inline void scale(const double* a, double c, double* out, std::size_t n) { active().scale(a, c, out, n); }
inline double sum(const double* a, std::size_t n) { return active().sum(a, n); }
inline double max(const double* a, std::size_t n) { return active().max(a, n); }
inline double sq_diff_sum(const double* a, const double* b, std::size_t n) { return active().sq_diff_sum(a, b, n); }
inline double weighted_sq_dist(const double* x, const double* mean, const double* inv_var, std::size_t n) {
  return active().weighted_sq_dist(x, mean, inv_var, n);
}

}  // namespace upr::kernels
