#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nmr/errors.hpp"
#include "nmr/mc.hpp"
#include "nmr/thiele.hpp"
#include "support.hpp"

using namespace nmr;

namespace {

// Share of paths with a property, with its binomial standard error.
struct Share {
  double p, se;
};

template <class Pred>
Share share(const std::vector<PathSample>& paths, const Pred& pred) {
  double k = 0.0;
  for (const auto& p : paths) k += pred(p) ? 1.0 : 0.0;
  const double n = static_cast<double>(paths.size());
  const double q = k / n;
  return {q, std::sqrt(q * (1.0 - q) / n)};
}

bool within(double estimate, double se, double truth, double slack = 0.0) {
  return std::abs(estimate - truth) <= 3.0 * se + slack;
}

// Share against a hypothesised probability, SE taken under the hypothesis
// (the plug-in SE vanishes for empty cells).
bool share_matches(const Share& s, double truth, double n) {
  return within(s.p, std::sqrt(std::max(truth * (1.0 - truth), 0.0) / n), truth, 1e-12);
}

PathSample make_path(int initial, std::vector<JumpRecord> jumps, const StateSpace& s) {
  PathSample p;
  p.initial = initial;
  p.jumps = std::move(jumps);
  double since = 0.0;
  int prev = initial;
  for (const auto& j : p.jumps) {
    if (s.is_retired(j.state) && p.eta == kNever) {
      p.eta = j.time;
      p.h_state = prev;
      p.u_h = j.time - since;
    }
    if (s.is_dead(j.state)) p.delta = j.time;
    if (s.lump(j.state) != s.lump(prev)) since = j.time;
    prev = j.state;
  }
  return p;
}

}  // namespace

TEST_CASE("simulate_paths: frozen chain and bound violations") {
  ModelSpec frozen{IntensitySpec(2, 1.0), PaymentSpec(2, 10.0), DiscountCurve::constant_rate(0.0), {}};
  for (const auto& p : simulate_paths(frozen, 1000, 3)) {
    CHECK(p.jumps.empty());
    CHECK(p.eta == kNever);
  }
  auto spec = test::exponential_model(0.1, 0.5, 0.0, 10.0);
  spec.intensities.set_sup_bound(0.3);
  CHECK_THROWS_AS(simulate_paths(spec, 1000, 3), ModelError);
  spec.intensities.set_sup_bound(INFINITY);
  CHECK_THROWS_AS(simulate_paths(spec, 10, 3), ModelError);
}

TEST_CASE("simulate_paths: exponential waiting times") {
  const double lambda = 0.2;
  const auto spec = test::exponential_model(0.0, lambda, 0.0, 10.0);
  const auto paths = simulate_paths(spec, 100000, 11);
  for (double t : {0.5, 2.0, 5.0, 9.0}) {
    const auto s = share(paths, [&](const PathSample& p) { return p.delta > t; });
    CHECK(share_matches(s, std::exp(-lambda * t), 100000.0));
  }
  for (const auto& p : paths) {
    for (std::size_t j = 1; j < p.jumps.size(); ++j) CHECK(p.jumps[j].time > p.jumps[j - 1].time);
    if (!p.jumps.empty()) CHECK(p.jumps.back().time <= 10.0);
  }
}

TEST_CASE("simulate_paths: occupation and law of (eta, delta) on the disability-retirement model") {
  const auto spec = test::load_scenario("disability_duration");
  const auto& s = spec.space();
  const auto paths = simulate_paths(spec, 200000, 5);
  const auto grid = TimeGrid::uniform(40.0, 0.02);
  const auto occ = solve_occupation(spec, grid);
  int bad = 0, total = 0;
  for (double t : {5.0, 12.0, 20.0, 30.0, 40.0})
    for (int x = 0; x < s.extended_count(); ++x) {
      const auto sh = share(paths, [&](const PathSample& p) { return p.state_at(t) == x; });
      ++total;
      if (!share_matches(sh, occ.extended(*grid.index_of(t), x), 200000.0)) ++bad;
    }
  CHECK(bad == 0);
  CHECK(total == 25);

  // P(η ∈ bin) and P(δ > t | η ∈ bin) against the joint law.
  const auto law = joint_law(spec, grid);
  for (double lo : {12.0, 15.0, 20.0}) {
    const double hi = lo + 1.0, t = hi + 5.0;
    const int a = *grid.index_of(lo), b = *grid.index_of(hi), it = *grid.index_of(t);
    double mass = 0.0, surv = 0.0;
    for (int r = a; r <= b; ++r) {
      const double w = composite_weight(law.breaks, a, b, r) * grid.step();
      mass += w * law.f_eta[r];
      surv += w * law.f_eta[r] * law.cond_surv.at(r, it);
    }
    const auto sh = share(paths, [&](const PathSample& p) { return p.eta >= lo && p.eta < hi; });
    CHECK(share_matches(sh, mass, 200000.0));
    double n_bin = 0.0, alive = 0.0;
    for (const auto& p : paths)
      if (p.eta >= lo && p.eta < hi) {
        n_bin += 1.0;
        alive += p.delta > t ? 1.0 : 0.0;
      }
    CHECK(share_matches({alive / n_bin, 0.0}, surv / mass, n_bin));
  }
}

TEST_CASE("simulate_paths is reproducible and independent of the thread count") {
  const auto spec = test::load_scenario("disability_markov");
  const auto a = simulate_paths(spec, 5000, 42, {1});
  const auto b = simulate_paths(spec, 5000, 42, {3});
  REQUIRE(a.size() == b.size());
  bool same = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same = same && a[i].initial == b[i].initial && a[i].jumps.size() == b[i].jumps.size();
    for (std::size_t j = 0; same && j < a[i].jumps.size(); ++j)
      same = a[i].jumps[j].time == b[i].jumps[j].time && a[i].jumps[j].state == b[i].jumps[j].state;
  }
  CHECK(same);
  const auto ea = estimate_reserve(a, ConditioningSpec::lumped(20.0, spec.space().lumped_retired()), spec);
  const auto eb = estimate_reserve(b, ConditioningSpec::lumped(20.0, spec.space().lumped_retired()), spec);
  CHECK(ea.mean == eb.mean);
  CHECK(ea.standard_error == eb.standard_error);
  const auto c = simulate_paths(spec, 5000, 43, {1});
  CHECK(estimate_reserve(c, ConditioningSpec::lumped(20.0, spec.space().lumped_retired()), spec).mean != ea.mean);
}

TEST_CASE("discounted_outflow on hand-made paths") {
  auto spec = test::exponential_model(0.3, 0.02, 0.05, 10.0, 0.0);
  const auto& s = spec.space();
  const int p = s.lumped_retired(), d = s.lumped_dead();
  const PathSample retire_die = make_path(0, {{2.0, 1}, {5.0, s.dead()}}, s);
  const PathSample die = make_path(0, {{5.0, s.dead()}}, s);
  const PathSample stay = make_path(0, {}, s);

  CHECK(discounted_outflow(retire_die, spec, 1.0) == 0.0);  // zero payments

  spec.payments.set_transition(p, d, TimeFunction::constant(1.0));
  CHECK(discounted_outflow(retire_die, spec, 1.0) == 1.0);
  CHECK(discounted_outflow(retire_die, spec, 5.0) == 0.0);  // payment at t itself is not future
  CHECK(discounted_outflow(die, spec, 1.0) == 0.0);

  spec.payments.set_sojourn(0, TimeFunction::constant(2.5));
  CHECK(discounted_outflow(stay, spec, 3.0) == doctest::Approx(2.5 * 7.0).epsilon(1e-12));

  spec.discount = DiscountCurve::constant_rate(0.04);
  spec.payments.add_discrete(6.0, p, 10.0);
  const double expect = 2.5 * (1.0 - std::exp(-0.04 * 1.0)) / 0.04 + std::exp(-0.04 * 4.0);
  CHECK(discounted_outflow(retire_die, spec, 1.0) == doctest::Approx(expect).epsilon(1e-10));
  const PathSample long_retired = make_path(0, {{2.0, 1}}, s);
  CHECK(discounted_outflow(long_retired, spec, 1.0) ==
        doctest::Approx(2.5 * (1.0 - std::exp(-0.04)) / 0.04 + 10.0 * std::exp(-0.2)).epsilon(1e-10));
}

TEST_CASE("estimate_reserve: degenerate cases and the dead reserve") {
  const auto zero = test::load_scenario("zero_payments");
  const auto paths = simulate_paths(zero, 2000, 1);
  const auto e = estimate_reserve(paths, ConditioningSpec::lumped(10.0, 0), zero);
  CHECK(e.mean == 0.0);
  CHECK(e.standard_error == 0.0);
  CHECK_THROWS_AS(estimate_reserve(paths, ConditioningSpec::lumped(0.0, 1), zero), ModelError);

  auto spec = test::exponential_model(0.2, 0.1, 0.1, 10.0, 0.03);
  const int d = spec.space().lumped_dead();
  spec.payments.set_sojourn(d, TimeFunction::constant(1.5));
  const auto sim = simulate_paths(spec, 5000, 2);
  const auto grid = TimeGrid::uniform(10.0, 0.01);
  const auto w = solve_dead_reserve(spec, grid);
  const auto est = estimate_reserve(sim, ConditioningSpec::lumped(4.0, d), spec);
  CHECK(est.n_effective > 200);
  CHECK(est.reliable);
  CHECK(std::abs(est.mean - w.at(*grid.index_of(4.0))) <= 3.0 * est.standard_error + 1e-9);
}

TEST_CASE("estimate_reserve against the extended Markov and G2 solvers") {
  const auto spec = test::load_scenario("disability_markov");
  const auto& s = spec.space();
  const auto paths = simulate_paths(spec, 100000, 9);
  const auto grid = TimeGrid::uniform(40.0, 0.02);
  const auto ext = solve_extended_markov(spec, grid);
  const auto e0 = estimate_reserve(paths, ConditioningSpec::lumped(0.0, 0), spec);
  CHECK(within(e0.mean, e0.standard_error, ext[0].at(0)));

  const auto law = joint_law(spec, grid);
  const auto g1 = solve_G1(spec, law, grid);
  const auto g2 = solve_G2(spec, law, g1, grid);
  for (double t : {15.0, 25.0, 35.0}) {
    const auto e = estimate_reserve(paths, ConditioningSpec::lumped(t, s.lumped_retired()), spec);
    CHECK(within(e.mean, e.standard_error, g2.reserve.at(*grid.index_of(t))));
  }
}

TEST_CASE("estimator identities: tower and lumping") {
  const auto spec = test::load_scenario("disability_duration");
  const auto& s = spec.space();
  const auto paths = simulate_paths(spec, 20000, 4);
  const OutflowEvaluator y(spec, 0.02);
  const double t = 25.0;
  const auto all = estimate_reserve(paths, ConditioningSpec::lumped(t, s.lumped_retired()), y, s, 1);

  // η-bins partitioning [0, t]: weighted average equals the pooled mean.
  double weighted = 0.0;
  std::size_t count = 0;
  for (double lo = 0.0; lo < t; lo += 0.5) {
    const auto cond = ConditioningSpec::retired_eta(t, lo, std::min(t + 1e-9, lo + 0.5));
    try {
      const auto e = estimate_reserve(paths, cond, y, s, 1);
      weighted += e.mean * static_cast<double>(e.n_effective);
      count += e.n_effective;
    } catch (const ModelError& err) {
      CHECK(err.code() == ErrorCode::EmptyConditioning);
    }
  }
  CHECK(count == all.n_effective);
  CHECK(weighted / static_cast<double>(count) == doctest::Approx(all.mean).epsilon(1e-12));

  // {Z_t = p} is the union of the retired extended states.
  std::vector<double> values;
  for (const auto& p : paths)
    if (s.is_retired(p.state_at(t))) values.push_back(y(p, t));
  CHECK(values.size() == all.n_effective);
  CHECK(pairwise_sum(values) / static_cast<double>(values.size()) == all.mean);
}

TEST_CASE("Markov extended chain: pre-retirement history adds nothing") {
  const auto spec = test::load_scenario("disability_markov");
  const auto& s = spec.space();
  const auto paths = simulate_paths(spec, 200000, 8);
  const OutflowEvaluator y(spec, 0.02);
  const double t = 25.0;
  const auto cond = ConditioningSpec::retired_full(t, 15.0, 20.0, 0, 0.0, 100.0);
  std::vector<double> visited, never;
  for (const auto& p : paths) {
    if (!cond.holds(p, s)) continue;
    bool was_disabled = false;
    for (const auto& j : p.jumps)
      if (j.time < p.eta && j.state == 1) was_disabled = true;
    (was_disabled ? visited : never).push_back(y(p, t));
  }
  REQUIRE(visited.size() > 200);
  REQUIRE(never.size() > 200);
  auto moments = [](const std::vector<double>& v) {
    double m = 0.0, q = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    for (double x : v) q += (x - m) * (x - m);
    return std::pair{m, q / static_cast<double>(v.size() - 1) / static_cast<double>(v.size())};
  };
  const auto [ma, va] = moments(visited);
  const auto [mb, vb] = moments(never);
  CHECK(std::abs(ma - mb) <= 3.0 * std::sqrt(va + vb));
}

TEST_CASE("forward intensity estimator") {
  const double lambda = 0.15;
  const auto two = test::exponential_model(0.0, lambda, 0.0, 10.0);
  const auto& s2 = two.space();
  const auto p2 = simulate_paths(two, 100000, 21);
  const auto f = estimate_forward_intensity(p2, ConditioningSpec::lumped(2.0, 0), 0, s2.lumped_dead(), 1.0, s2);
  CHECK(within(f.rate, f.standard_error, lambda));
  const auto z = estimate_forward_intensity(p2, ConditioningSpec::lumped(2.0, 0), 0, s2.lumped_retired(), 1.0, s2);
  CHECK(z.rate == 0.0);
  CHECK(z.events == 0);

  // p → d on the disability-retirement model against μ⁽²⁾ averaged over the window.
  const auto spec = test::load_scenario("disability_duration");
  const auto& s = spec.space();
  const auto paths = simulate_paths(spec, 200000, 22);
  const auto grid = TimeGrid::uniform(40.0, 0.01);
  const auto law = joint_law(spec, grid);
  for (double t : {15.0, 25.0, 35.0}) {
    const auto e = estimate_forward_intensity(paths, ConditioningSpec::lumped(t, s.lumped_retired()),
                                              s.lumped_retired(), s.lumped_dead(), 0.5, s);
    const int i = *grid.index_of(t);
    const double avg = trapezoid([&](int j) { return law.mu2_node(j); }, i, i + 50, grid.step()) / 0.5;
    CHECK(within(e.rate, std::sqrt(avg / e.exposure), avg));
  }
}

TEST_CASE("backward intensity estimator") {
  // Retirement only before t = 2.5: nobody enters p in (4, 5].
  auto stop = test::exponential_model(0.0, 0.0, 0.05, 10.0);
  stop.intensities.set(0, 1, RateFunction::linear({{0.0, 0.5}, {2.0, 0.5}, {2.5, 0.0}}));
  const auto& s = stop.space();
  const auto ps = simulate_paths(stop, 5000, 2);
  const auto none = estimate_backward_intensity(ps, -1, s.lumped_retired(), 5.0, 1.0, s);
  CHECK(none.n_effective > 0);
  CHECK(none.rate == 0.0);

  const auto expo = test::exponential_model(0.5, 0.0, 0.0, 4.0);
  const auto pe = simulate_paths(expo, 100000, 3);
  const double t = 1.0, bw = 0.1;
  const auto e = estimate_backward_intensity(pe, -1, s.lumped_retired(), t, bw, s);
  const double window = (std::exp(-0.5 * (t - bw)) - std::exp(-0.5 * t)) / (bw * (1.0 - std::exp(-0.5 * t)));
  CHECK(within(e.rate, e.standard_error, window));
  const double closed = 0.5 * std::exp(-0.5) / (1.0 - std::exp(-0.5));
  CHECK(std::abs(e.rate - closed) <= 3.0 * e.standard_error + std::abs(window - closed));

  // Disability-retirement model, per pre-state k, against the law-side window average.
  const auto spec = test::load_scenario("disability_markov");
  const auto& sf = spec.space();
  const auto paths = simulate_paths(spec, 200000, 4);
  const auto grid = TimeGrid::uniform(40.0, 0.01);
  const auto law = joint_law(spec, grid);
  for (double tt : {14.0, 20.0, 30.0})
    for (int k = -1; k < 2; ++k) {
      const auto b = estimate_backward_intensity(paths, k, sf.lumped_retired(), tt, 0.25, sf);
      const double an = smoothed_backward_intensity(spec, law, k, tt, 0.25);
      const double q = an * 0.25;
      CHECK(within(b.rate, std::sqrt(q * (1.0 - q) / static_cast<double>(b.n_effective)) / 0.25, an));
    }
}

TEST_CASE("conditioning validation and path dump") {
  CHECK_THROWS_AS(ConditioningSpec::retired_eta(5.0, 2.0, 2.0).validate(10.0), ModelError);
  CHECK_THROWS_AS(ConditioningSpec::transition(5.0, 0, 1, 0.0).validate(10.0), ModelError);
  CHECK_THROWS_AS(ConditioningSpec::lumped(11.0, 0).validate(10.0), ModelError);

  const auto spec = test::exponential_model(0.3, 0.02, 0.05, 10.0);
  const auto& s = spec.space();
  std::vector<PathSample> paths{make_path(0, {{2.0, 1}, {5.5, s.dead()}}, s), make_path(0, {}, s)};
  std::ostringstream out;
  write_path_dump(out, paths, s);
  CHECK(out.str() == "path_id,jump_time,new_state\n0,0,1\n0,2,2\n0,5.5,d\n1,0,1\n");

  // Transition conditioning: entered p from 1 within the last unit.
  CHECK(ConditioningSpec::transition(2.5, 0, s.lumped_retired(), 1.0).holds(paths[0], s));
  CHECK_FALSE(ConditioningSpec::transition(3.5, 0, s.lumped_retired(), 1.0).holds(paths[0], s));
}
