#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "nmr/distributions.hpp"
#include "nmr/errors.hpp"
#include "support.hpp"

using namespace nmr;

TEST_CASE("composite_weight integrates cubics exactly") {
  const Breaks breaks(std::vector<int>{3, 9});  // pieces of 2..11 intervals
  for (int lo : {0, 1}) {
    const int hi = 20;
    const auto cubic = [](double x) { return 1.0 - 2.0 * x + 0.5 * x * x - 0.1 * x * x * x; };
    double sum = 0.0, weights = 0.0;
    for (int j = lo; j <= hi; ++j) {
      sum += composite_weight(breaks, lo, hi, j) * cubic(j);
      weights += composite_weight(breaks, lo, hi, j);
    }
    const double exact = [&] {
      const auto prim = [](double x) { return x - x * x + x * x * x / 6.0 - 0.025 * x * x * x * x; };
      return prim(hi) - prim(lo);
    }();
    CHECK(weights == doctest::Approx(hi - lo).epsilon(1e-14));
    CHECK(sum == doctest::Approx(exact).epsilon(1e-12));
  }
}

TEST_CASE("solve_occupation: frozen chain stays put") {
  ModelSpec spec{IntensitySpec(2, 1.0), PaymentSpec(2, 10.0), DiscountCurve::constant_rate(0.0), {}};
  const auto occ = solve_occupation(spec, TimeGrid::uniform(10.0, 0.1));
  for (int i = 0; i <= occ.grid().steps(); ++i) CHECK(occ.extended(i, 0) == 1.0);
}

TEST_CASE("solve_occupation: constant hazard closed form") {
  const double lambda = 0.3;
  const auto spec = test::exponential_model(0.0, lambda, 0.0, 10.0);
  const auto grid = TimeGrid::uniform(10.0, 1e-3);
  const auto occ = solve_occupation(spec, grid);
  double worst = 0.0;
  for (int i = 0; i <= grid.steps(); ++i)
    worst = std::max(worst, std::abs(occ.extended(i, 0) - std::exp(-lambda * grid.node(i))));
  CHECK(worst < 1e-8);
}

TEST_CASE("solve_occupation matches the matrix exponential and stays stochastic") {
  const auto spec = test::constant_disability(20.0);
  const auto grid = TimeGrid::uniform(20.0, 0.01);
  const auto occ = solve_occupation(spec, grid);
  for (double t : {0.5, 3.0, 11.0, 20.0}) {
    const int i = *grid.index_of(t);
    const auto p = test::occupation_oracle(spec, t);
    for (int x = 0; x < spec.space().extended_count(); ++x) CHECK(std::abs(occ.extended(i, x) - p(x)) < 1e-9);
    CHECK(occ.lumped(i, spec.space().lumped_retired()) == doctest::Approx(p(2) + p(3)).epsilon(1e-12));
  }
  const auto dis = test::load_scenario("disability_markov");
  const auto occ2 = solve_occupation(dis, TimeGrid::uniform(40.0, 0.01));
  for (int i = 0; i <= occ2.grid().steps(); ++i) {
    double s = 0.0;
    for (double v : occ2.row(i)) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-8);
  }
}

TEST_CASE("solve_occupation rejects duration-dependent pre-retirement rates") {
  auto spec = test::exponential_model(0.1, 0.0, 0.0, 5.0);
  spec.intensities.set(0, spec.space().dead(), RateFunction::linear({{0, 0.01}, {5, 0.02}}, RateFunction::Axis::Duration));
  CHECK_THROWS_AS(solve_occupation(spec, TimeGrid::uniform(5.0, 0.1)), ModelError);
}

TEST_CASE("joint_law without retirement transitions") {
  const auto spec = test::exponential_model(0.0, 0.02, 0.05, 10.0);
  const auto grid = TimeGrid::uniform(10.0, 0.05);
  const auto law = joint_law(spec, grid);
  const auto occ = solve_occupation(spec, grid);
  const auto tab = intensity_tables(spec, law, occ);
  for (int i = 0; i <= grid.steps(); ++i) {
    CHECK(law.f_eta[i] == 0.0);
    CHECK(law.tail[i] == 0.0);
    CHECK(tab.mu2[i] == 0.0);
    CHECK(tab.mu_bar[i] == 0.0);
  }
  CHECK(mu1(law, 5.0, 2.0) == 0.0);  // 0/0
  CHECK(mu2(law, 5.0) == 0.0);
  CHECK(mu_bar(law, 5.0) == 0.0);
}

TEST_CASE("joint_law: exponential composition") {
  const double a = 0.4, c = 0.07;
  const auto spec = test::exponential_model(a, 0.0, c, 10.0);
  const auto grid = TimeGrid::uniform(10.0, 0.01);
  const auto law = joint_law(spec, grid);
  double wf = 0.0, ws = 0.0, wm = 0.0;
  for (int r = 0; r <= grid.steps(); r += 7) {
    wf = std::max(wf, std::abs(law.f_eta[r] - a * std::exp(-a * grid.node(r))));
    for (int i = r; i <= grid.steps(); i += 11) {
      ws = std::max(ws, std::abs(law.cond_surv.at(r, i) - std::exp(-c * (grid.node(i) - grid.node(r)))));
      wm = std::max(wm, std::abs(law.mu1_node(i, r) - c));
    }
  }
  CHECK(wf < 1e-8);
  CHECK(ws < 1e-8);
  CHECK(wm < 1e-10);
  // Constant hazard: μ⁽¹⁾ ≡ c and μ⁽²⁾ ≡ c wherever the tail is positive.
  CHECK(mu1(law, 7.3, 2.1) == doctest::Approx(c).epsilon(1e-9));
  CHECK(mu2(law, 6.0) == doctest::Approx(c).epsilon(1e-9));
  CHECK(mu2(law, 0.0) == 0.0);  // P(η < 0 ≤ δ) = 0
}

TEST_CASE("mu_bar: exponential closed form") {
  const auto spec = test::exponential_model(0.5, 0.0, 0.0, 4.0);
  const auto law = joint_law(spec, TimeGrid::uniform(4.0, 0.01));
  CHECK(mu_bar(law, 1.0) == doctest::Approx(0.5 * std::exp(-0.5) / (1.0 - std::exp(-0.5))).epsilon(1e-8));
}

TEST_CASE("mu1 recovers a duration-dependent hazard") {
  auto spec = test::exponential_model(0.3, 0.01, 0.0, 10.0);
  spec.intensities.set(1, spec.space().dead(),
                       RateFunction::linear({{0.0, 0.02}, {10.0, 0.07}}, RateFunction::Axis::Duration));
  const auto grid = TimeGrid::uniform(10.0, 0.02);
  const auto law = joint_law(spec, grid);
  double worst = 0.0;
  for (int r = 0; r <= grid.steps(); r += 13)
    for (int i = r; i <= grid.steps(); i += 17)
      worst = std::max(worst, std::abs(law.mu1_node(i, r) - (0.02 + 0.005 * (grid.node(i) - grid.node(r)))));
  CHECK(worst < 1e-8);
  CHECK(mu1(law, 8.0, 3.0) == doctest::Approx(0.02 + 0.005 * 5.0).epsilon(1e-8));
}

TEST_CASE("mu2 is the occupation-weighted mix of retired hazards") {
  const auto spec = test::constant_disability(20.0, 0.03, 0.09);
  const auto grid = TimeGrid::uniform(20.0, 0.01);
  const auto law = joint_law(spec, grid);
  for (double t : {0.5, 2.0, 7.5, 19.0}) {
    const auto p = test::occupation_oracle(spec, t);
    const double oracle = (0.03 * p(2) + 0.09 * p(3)) / (p(2) + p(3));
    CHECK(mu2(law, t) == doctest::Approx(oracle).epsilon(1e-7));
  }
}

TEST_CASE("f_eta integrates to P(eta <= n)") {
  // Augmented chain: split death by whether retirement happened first.
  const double n = 20.0;
  const auto spec = test::constant_disability(n);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(6, 6);  // 1, 2, 3, 4, d_pre, d_post
  const auto base = test::generator(spec);
  for (int x = 0; x < 4; ++x)
    for (int y = 0; y < 5; ++y) {
      const int to = (y == 4) ? (x < 2 ? 4 : 5) : y;
      if (x != y) q(x, to) += base(x, y);
    }
  for (int x = 0; x < 6; ++x) q(x, x) = -(q.row(x).sum() - q(x, x));
  const Eigen::MatrixXd e = (q * n).exp();
  const double retired_by_n = e(0, 2) + e(0, 3) + e(0, 5);

  const auto grid = TimeGrid::uniform(n, 0.02);
  const auto law = joint_law(spec, grid);
  double integral = 0.0;
  for (int r = 0; r <= grid.steps(); ++r)
    integral += composite_weight(law.breaks, 0, grid.steps(), r) * grid.step() * law.f_eta[r];
  CHECK(integral <= 1.0);
  CHECK(integral == doctest::Approx(retired_by_n).epsilon(1e-8));
}

TEST_CASE("law invariants on the duration-dependent scenario") {
  const auto spec = test::load_scenario("disability_duration");
  const auto grid = TimeGrid::uniform(40.0, 0.1);
  const auto law = joint_law(spec, grid);
  const auto occ = solve_occupation(spec, grid);
  const auto tab = intensity_tables(spec, law, occ);
  for (int r = 0; r <= grid.steps(); ++r) {
    if (law.f_eta[r] == 0.0) continue;  // no cohort retires at r
    CHECK(law.cond_surv.at(r, r) == doctest::Approx(1.0).epsilon(1e-14));
    for (int i = r + 1; i <= grid.steps(); ++i) CHECK(law.cond_surv.at(r, i) <= law.cond_surv.at(r, i - 1));
  }
  for (int i = 0; i <= grid.steps(); ++i) {
    CHECK(std::isfinite(tab.mu2[i]));
    CHECK(tab.mu2[i] >= 0.0);
    CHECK(tab.mu_bar[i] >= 0.0);
    // Convex combination of the μ⁽¹⁾ hazards of the contributing cohorts
    // (every cohort of an interval touching the support of f_η).
    if (law.tail[i] > 1e-6) {
      double lo = INFINITY, hi = 0.0;
      for (int r = 0; r <= i; ++r)
        if (law.f_eta[r] > 0.0 || (r < i && law.f_eta[r + 1] > 0.0)) {
          lo = std::min(lo, law.mu1_node(i, r));
          hi = std::max(hi, law.mu1_node(i, r));
        }
      CHECK(tab.mu2[i] >= lo - 1e-9);
      CHECK(tab.mu2[i] <= hi + 1e-9);
    }
  }
  for (double v : tab.lumped_forward) CHECK((std::isfinite(v) && v >= 0.0));
  for (double v : tab.backward_law) CHECK((std::isfinite(v) && v >= 0.0));
}

TEST_CASE("equal duration-free retired hazards: mu1 collapses to mu2") {
  const auto spec = test::load_scenario("collapse");
  const auto grid = TimeGrid::uniform(spec.horizon(), 0.01);
  const auto law = joint_law(spec, grid);
  double worst = 0.0;
  for (int i = 1; i <= grid.steps(); ++i)
    for (int r = 0; r <= i; ++r) worst = std::max(worst, std::abs(law.mu1_node(i, r) - law.mu2_node(i)));
  CHECK(worst < 1e-8);
}

TEST_CASE("backward_identity_check") {
  ModelSpec frozen{IntensitySpec(2, 1.0), PaymentSpec(2, 10.0), DiscountCurve::constant_rate(0.0), {}};
  const auto g0 = TimeGrid::uniform(10.0, 0.1);
  const auto id0 = backward_identity_check(frozen, joint_law(frozen, g0), solve_occupation(frozen, g0));
  CHECK(id0.nodes_checked == 0);
  CHECK(id0.max_relative_discrepancy == 0.0);

  const auto expo = test::exponential_model(0.3, 0.02, 0.05, 10.0);
  const auto g1 = TimeGrid::uniform(10.0, 0.01);
  const auto id1 = backward_identity_check(expo, joint_law(expo, g1), solve_occupation(expo, g1));
  CHECK(id1.nodes_checked > 0);
  CHECK(id1.max_relative_discrepancy < 1e-6);

  const auto dis = test::load_scenario("disability_markov");
  const auto g2 = TimeGrid::uniform(40.0, 0.01);
  const auto id2 = backward_identity_check(dis, joint_law(dis, g2), solve_occupation(dis, g2));
  CHECK(id2.max_relative_discrepancy < 1e-4);
  CHECK(id2.max_sum_discrepancy < 1e-10);
}

TEST_CASE("smoothed_backward_intensity tends to mu_bar") {
  const auto spec = test::exponential_model(0.5, 0.0, 0.1, 6.0);
  const auto grid = TimeGrid::uniform(6.0, 0.01);
  const auto law = joint_law(spec, grid);
  const double t = 3.0;
  // Exact window average: ∫_{t−b}^t a e^{−ar} e^{−c(t−r)} dr / (b · tail).
  const double b = 0.25;
  const double tail = test::simpson([&](double r) { return 0.5 * std::exp(-0.5 * r) * std::exp(-0.1 * (t - r)); }, 0, t);
  const double num = test::simpson([&](double r) { return 0.5 * std::exp(-0.5 * r) * std::exp(-0.1 * (t - r)); }, t - b, t);
  CHECK(smoothed_backward_intensity(spec, law, -1, t, b) == doctest::Approx(num / (b * tail)).epsilon(1e-7));
  CHECK(smoothed_backward_intensity(spec, law, 0, t, b) == doctest::Approx(num / (b * tail)).epsilon(1e-7));
  const double narrow = smoothed_backward_intensity(spec, law, -1, t, 0.02);
  CHECK(std::abs(narrow - mu_bar(law, t)) < std::abs(num / (b * tail) - mu_bar(law, t)));
  CHECK_THROWS_AS(smoothed_backward_intensity(spec, law, -1, t, 0.015), ModelError);
}
