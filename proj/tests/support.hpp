#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "nmr/model.hpp"
#include "nmr/model_io.hpp"

namespace nmr::test {

inline ModelSpec load_scenario(const std::string& name) {
  return load_model(std::string(NMR_SCENARIO_DIR) + "/" + name + ".json");
}

/// σ = 1: pre state 1 (extended 0), retired health state 2 (extended 1), d.
/// Retirement at rate a, pre-retirement death at m, retired death at c.
inline ModelSpec exponential_model(double a, double m, double c, double horizon, double rho = 0.0) {
  IntensitySpec mu(1, 10.0);
  const auto& s = mu.space();
  if (a != 0.0) mu.set(0, 1, RateFunction::constant(a));
  if (m != 0.0) mu.set(0, s.dead(), RateFunction::constant(m));
  if (c != 0.0) mu.set(1, s.dead(), RateFunction::constant(c));
  return ModelSpec{std::move(mu), PaymentSpec(1, horizon), DiscountCurve::constant_rate(rho), {}};
}

/// Term insurance: 1 → d at λ, benefit b on death, short rate ρ.
inline ModelSpec term_insurance(double lambda, double rho, double b, double horizon) {
  ModelSpec spec = exponential_model(0.0, lambda, 0.0, horizon, rho);
  const auto& s = spec.space();
  spec.payments.set_transition(0, s.lumped_dead(), TimeFunction::constant(b));
  return spec;
}

/// Disability-retirement shape (two pre states, two retired health states) with constant
/// rates. Retired mortality may differ by health state.
inline ModelSpec constant_disability(double horizon, double c3 = 0.03, double c4 = 0.06) {
  IntensitySpec mu(2, 10.0);
  const int d = mu.space().dead();
  mu.set(0, 1, RateFunction::constant(0.05));
  mu.set(1, 0, RateFunction::constant(0.1));
  mu.set(0, d, RateFunction::constant(0.01));
  mu.set(1, d, RateFunction::constant(0.04));
  mu.set(0, 2, RateFunction::constant(0.2));
  mu.set(1, 3, RateFunction::constant(0.3));
  mu.set(2, 3, RateFunction::constant(0.02));
  mu.set(3, 2, RateFunction::constant(0.05));
  mu.set(2, d, RateFunction::constant(c3));
  mu.set(3, d, RateFunction::constant(c4));
  ModelSpec spec{std::move(mu), PaymentSpec(2, horizon), DiscountCurve::constant_rate(0.03), {}};
  const auto& s = spec.space();
  spec.payments.set_sojourn(0, TimeFunction::constant(-1.0));
  spec.payments.set_sojourn(s.lumped_retired(), TimeFunction::constant(1.0));
  spec.payments.set_transition(0, s.lumped_dead(), TimeFunction::constant(3.0));
  spec.payments.set_transition(s.lumped_retired(), s.lumped_dead(), TimeFunction::constant(2.0));
  return spec;
}

/// Generator of a time-homogeneous extended chain (constant rates only).
inline Eigen::MatrixXd generator(const ModelSpec& spec) {
  const int n = spec.space().extended_count();
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      if (x != y) {
        q(x, y) = spec.intensities.rate(x, y, 0.0, 0.0);
        q(x, x) -= q(x, y);
      }
  return q;
}

/// Row vector p(0)·exp(Q t).
inline Eigen::RowVectorXd occupation_oracle(const ModelSpec& spec, double t) {
  const Eigen::MatrixXd q = generator(spec);
  Eigen::RowVectorXd p0 = Eigen::RowVectorXd::Zero(q.rows());
  const auto init = spec.initial_distribution();
  for (std::size_t j = 0; j < init.size(); ++j) p0(static_cast<Eigen::Index>(j)) = init[j];
  const Eigen::MatrixXd e = (q * t).exp();
  return p0 * e;
}

/// Composite Simpson on [a, b] with n (even) panels.
template <class F>
double simpson(const F& f, double a, double b, int n = 2000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace nmr::test
