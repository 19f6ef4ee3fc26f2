#pragma once

#include <cstddef>
#include <vector>

// Fixed-step classic Runge–Kutta for the linear scalar equations that every
// reserve characteristic reduces to, W' = a(t)·W + g(t), integrated backward
// over one interval: coefficients are supplied at the closing node (end),
// the midpoint and the opening node (start).
namespace nmr::detail {

struct LinearCoef {
  double a = 0.0;
  double g = 0.0;
};

inline double rk4_back(double w_end, double h, LinearCoef end, LinearCoef mid, LinearCoef start) {
  const double k1 = end.a * w_end + end.g;
  const double k2 = mid.a * (w_end - 0.5 * h * k1) + mid.g;
  const double k3 = mid.a * (w_end - 0.5 * h * k2) + mid.g;
  const double k4 = start.a * (w_end - h * k3) + start.g;
  return w_end - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Scratch space for rk4_forward on vectors of length n.
struct Rk4Work {
  explicit Rk4Work(std::size_t n) : k1(n), k2(n), k3(n), k4(n), tmp(n) {}
  std::vector<double> k1, k2, k3, k4, tmp;
};

/// One forward step of y' = f(stage, y) on a dense vector; `f(stage, y, dy)`
/// with stage 0 = start, 1 = midpoint, 2 = end.
template <class F>
void rk4_forward(std::vector<double>& y, double h, Rk4Work& w, const F& f) {
  const std::size_t n = y.size();
  f(0, y, w.k1);
  for (std::size_t a = 0; a < n; ++a) w.tmp[a] = y[a] + 0.5 * h * w.k1[a];
  f(1, w.tmp, w.k2);
  for (std::size_t a = 0; a < n; ++a) w.tmp[a] = y[a] + 0.5 * h * w.k2[a];
  f(1, w.tmp, w.k3);
  for (std::size_t a = 0; a < n; ++a) w.tmp[a] = y[a] + h * w.k3[a];
  f(2, w.tmp, w.k4);
  for (std::size_t a = 0; a < n; ++a) y[a] += h / 6.0 * (w.k1[a] + 2.0 * w.k2[a] + 2.0 * w.k3[a] + w.k4[a]);
}

/// Backward counterpart for coupled systems: integrates y' = f(stage, y)
/// from the closing node to the opening node; stage 0 = end, 1 = midpoint,
/// 2 = start.
template <class F>
void rk4_backward(std::vector<double>& y, double h, Rk4Work& w, const F& f) {
  const std::size_t n = y.size();
  f(0, y, w.k1);
  for (std::size_t a = 0; a < n; ++a) w.tmp[a] = y[a] - 0.5 * h * w.k1[a];
  f(1, w.tmp, w.k2);
  for (std::size_t a = 0; a < n; ++a) w.tmp[a] = y[a] - 0.5 * h * w.k2[a];
  f(1, w.tmp, w.k3);
  for (std::size_t a = 0; a < n; ++a) w.tmp[a] = y[a] - h * w.k3[a];
  f(2, w.tmp, w.k4);
  for (std::size_t a = 0; a < n; ++a) y[a] -= h / 6.0 * (w.k1[a] + 2.0 * w.k2[a] + 2.0 * w.k3[a] + w.k4[a]);
}

}  // namespace nmr::detail
