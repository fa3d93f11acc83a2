#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "upr/diff.hpp"
#include "upr/rng.hpp"

// Shared test oracles. These stay independent of the library code paths
// they check.
namespace uprtest {

// Central finite differences of a scalar function of a flat vector.
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// |a-b| / max(1, |a|, |b|): relative for large values, absolute near zero.
inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, rel_err(a[i], b[i]));
  return m;
}

inline upr::diff::Tensor random_tensor(upr::Rng& rng, int r, int c, double lo = -1.0,
                                       double hi = 1.0) {
  upr::diff::Tensor t(r, c);
  for (double& x : t.v) x = rng.uniform(lo, hi);
  return t;
}

}  // namespace uprtest
