#include <doctest.h>

#include <cmath>

#include "nmr/errors.hpp"
#include "nmr/grid.hpp"
#include "nmr/model.hpp"
#include "nmr/model_io.hpp"
#include "support.hpp"

using namespace nmr;

namespace {

ErrorCode code_of(const auto& f) {
  try {
    f();
  } catch (const ModelError& e) {
    return e.code();
  }
  FAIL("no ModelError thrown");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("validate_model rejects a retired-to-pre transition") {
  ModelSpec spec = test::exponential_model(0.1, 0.01, 0.02, 10.0);
  spec.intensities.set(1, 0, RateFunction::constant(0.1));  // state ς+1 → 1
  CHECK(code_of([&] { validate_model(spec); }) == ErrorCode::StructuralViolation);
}

TEST_CASE("validate_model accepts the frozen chain and a plain exponential discount") {
  ModelSpec frozen{IntensitySpec(2, 1.0), PaymentSpec(2, 10.0), DiscountCurve::constant_rate(0.0), {}};
  CHECK_NOTHROW(validate_model(frozen));
  ModelSpec spec = test::exponential_model(0.1, 0.01, 0.02, 10.0, 0.03);
  CHECK_NOTHROW(validate_model(spec));
}

TEST_CASE("validate_model enforces the declared bound and the discount curve") {
  ModelSpec spec = test::exponential_model(0.1, 0.01, 0.02, 10.0);
  spec.intensities.set_sup_bound(0.05);
  CHECK(code_of([&] { validate_model(spec); }) == ErrorCode::UnboundedIntensity);

  ModelSpec bad = test::exponential_model(0.1, 0.01, 0.02, 10.0);
  bad.discount = DiscountCurve::custom([](double t) { return 2.0 + t; }, [](double t) { return 1.0 / (2.0 + t); });
  CHECK(code_of([&] { validate_model(bad); }) == ErrorCode::BadDiscount);
}

TEST_CASE("lump_state") {
  CHECK(lump_state(StateId::pre(3), 4) == StateId::pre(3));
  CHECK(lump_state(StateId::retired(2), 1) == StateId::lumped_retired());
  CHECK(lump_state(StateId::retired(6), 4) == StateId::lumped_retired());
  CHECK(lump_state(StateId::dead(), 4) == StateId::dead());

  // Surjective onto {1..σ, p, d}, identity off the retired block.
  const StateSpace s(3);
  std::vector<int> hit(static_cast<std::size_t>(s.lumped_count()), 0);
  for (int x = 0; x < s.extended_count(); ++x) {
    const int j = s.lump(x);
    ++hit[static_cast<std::size_t>(j)];
    if (!s.is_retired(x)) CHECK(s.lumped_label(j) == s.extended_label(x));
  }
  for (int c : hit) CHECK(c > 0);
  CHECK(s.parse_lumped("p") == s.lumped_retired());
  CHECK(s.parse_extended("d") == s.dead());
}

TEST_CASE("discount_factor") {
  const auto flat = DiscountCurve::constant_rate(0.03);
  CHECK(discount_factor(0.0, 1.0, flat, 10.0) == doctest::Approx(std::exp(-0.03)).epsilon(1e-14));
  CHECK(discount_factor(4.0, 4.0, flat, 10.0) == 1.0);
  CHECK(code_of([&] { discount_factor(0.0, 11.0, flat, 10.0); }) == ErrorCode::OutOfHorizon);
  CHECK(code_of([&] { discount_factor(3.0, 2.0, flat, 10.0); }) == ErrorCode::OutOfHorizon);

  const Knots knots{{0.0, 0.01}, {2.0, 0.05}, {5.0, 0.02}};
  const auto table = DiscountCurve::short_rate_table(knots);
  const double oracle =
      std::exp(-test::simpson([&](double s) { return interpolate_linear(knots, s); }, 1.0, 2.0, 200) -
               test::simpson([&](double s) { return interpolate_linear(knots, s); }, 2.0, 3.0, 200));
  CHECK(discount_factor(1.0, 3.0, table, 10.0) == doctest::Approx(oracle).epsilon(1e-12));

  // Multiplicativity.
  for (double u : {1.5, 2.0, 2.7}) {
    const double lhs = discount_factor(1.0, u, table, 10.0) * discount_factor(u, 3.0, table, 10.0);
    CHECK(std::abs(lhs / discount_factor(1.0, 3.0, table, 10.0) - 1.0) < 1e-12);
  }
}

TEST_CASE("parse_model round trip and diagnostics") {
  const ModelSpec spec = test::load_scenario("disability_markov");
  CHECK(spec.sigma() == 2);
  CHECK(spec.horizon() == 40.0);
  CHECK(spec.intensities.rate(1, 0, 3.0, 0.0) == doctest::Approx(0.08));
  CHECK(spec.intensities.rate(0, 1, 10.0, 0.0) == doctest::Approx(0.003 + 0.0015 * std::exp(0.6)));
  CHECK(spec.intensities.rate(0, 2, 12.5, 0.0) == doctest::Approx(0.075));
  CHECK_NOTHROW(validate_model(spec));

  const ModelSpec dur = test::load_scenario("disability_duration");
  CHECK_FALSE(dur.intensities.retired_markov());
  CHECK(dur.intensities.rate(2, dur.space().dead(), 30.0, 10.0) == doctest::Approx(0.01 + 0.002 * 10.0));

  CHECK(code_of([] { parse_model("{ not json"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { parse_model(R"({"sigma": 1, "horizon": 5, "intensities": [{"from": "1", "to": "q",
      "kind": "constant", "params": {"rate": 1}}]})"); }) == ErrorCode::ParseError);
}

TEST_CASE("discrete payments must sit on the grid") {
  const ModelSpec spec = test::load_scenario("collapse");  // atom at 2.5
  CHECK_NOTHROW(TimeGrid::uniform(spec.horizon(), 0.5).require_aligned(spec.payments));
  CHECK(code_of([&] { TimeGrid::uniform(spec.horizon(), 5.0 / 3.0).require_aligned(spec.payments); }) ==
        ErrorCode::GridMisaligned);
  CHECK(code_of([] { TimeGrid::uniform(10.0, 0.0); }) == ErrorCode::InvalidArgument);
}
