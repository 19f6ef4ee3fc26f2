#include "nmr/functions.hpp"

#include <algorithm>
#include <cmath>

#include "nmr/errors.hpp"

namespace nmr {

namespace {

void check_knots(const Knots& knots) {
  if (knots.empty()) throw ModelError(ErrorCode::InvalidArgument, "empty knot list");
  for (std::size_t i = 1; i < knots.size(); ++i)
    if (!(knots[i].first > knots[i - 1].first))
      throw ModelError(ErrorCode::InvalidArgument, "knot abscissae must be strictly increasing");
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

double interpolate_linear(const Knots& knots, double x) {
  if (x <= knots.front().first) return knots.front().second;
  if (x >= knots.back().first) return knots.back().second;
  auto it = std::upper_bound(knots.begin(), knots.end(), x,
                             [](double v, const auto& k) { return v < k.first; });
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  double w = (x - lo.first) / (hi.first - lo.first);
  return lo.second + w * (hi.second - lo.second);
}

TimeFunction TimeFunction::constant(double value) { return TimeFunction(Constant{value}); }

TimeFunction TimeFunction::step(Knots knots) {
  check_knots(knots);
  return TimeFunction(Step{std::move(knots)});
}

TimeFunction TimeFunction::linear(Knots knots) {
  check_knots(knots);
  return TimeFunction(Linear{std::move(knots)});
}

TimeFunction TimeFunction::custom(Callable f) { return TimeFunction(Custom{std::move(f)}); }

double TimeFunction::operator()(double t) const {
  return std::visit(Overloaded{
                        [](const Constant& c) { return c.value; },
                        [t](const Step& s) {
                          auto it = std::upper_bound(
                              s.knots.begin(), s.knots.end(), t,
                              [](double v, const auto& k) { return v < k.first; });
                          if (it == s.knots.begin()) return 0.0;
                          return (it - 1)->second;
                        },
                        [t](const Linear& l) { return interpolate_linear(l.knots, t); },
                        [t](const Custom& c) { return c.f(t); },
                    },
                    impl_);
}

double TimeFunction::left(double t) const {
  if (const auto* s = std::get_if<Step>(&impl_)) {
    auto it = std::lower_bound(s->knots.begin(), s->knots.end(), t,
                               [](const auto& k, double v) { return k.first < v; });
    if (it == s->knots.begin()) return 0.0;
    return (it - 1)->second;
  }
  return (*this)(t);
}

bool TimeFunction::is_zero() const {
  return std::visit(Overloaded{
                        [](const Constant& c) { return c.value == 0.0; },
                        [](const Step& s) {
                          return std::all_of(s.knots.begin(), s.knots.end(),
                                             [](const auto& k) { return k.second == 0.0; });
                        },
                        [](const Linear& l) {
                          return std::all_of(l.knots.begin(), l.knots.end(),
                                             [](const auto& k) { return k.second == 0.0; });
                        },
                        [](const Custom&) { return false; },
                    },
                    impl_);
}

std::vector<double> TimeFunction::breakpoints() const {
  std::vector<double> out;
  if (const auto* s = std::get_if<Step>(&impl_))
    for (const auto& k : s->knots) out.push_back(k.first);
  return out;
}

TimeFunction TimeFunction::scaled(double factor) const {
  return std::visit(Overloaded{
                        [factor](const Constant& c) { return TimeFunction(Constant{c.value * factor}); },
                        [factor](const Step& s) {
                          Knots k = s.knots;
                          for (auto& p : k) p.second *= factor;
                          return TimeFunction(Step{std::move(k)});
                        },
                        [factor](const Linear& l) {
                          Knots k = l.knots;
                          for (auto& p : k) p.second *= factor;
                          return TimeFunction(Linear{std::move(k)});
                        },
                        [factor](const Custom& c) {
                          return TimeFunction(Custom{[f = c.f, factor](double t) { return factor * f(t); }});
                        },
                    },
                    impl_);
}

RateFunction RateFunction::constant(double rate) { return RateFunction(Constant{rate}, Axis::Time, false); }

RateFunction RateFunction::gompertz(double a, double b, double c, Axis axis) {
  return RateFunction(Gompertz{a, b, c}, axis, axis == Axis::Duration);
}

RateFunction RateFunction::linear(Knots knots, Axis axis) {
  check_knots(knots);
  return RateFunction(Linear{std::move(knots)}, axis, axis == Axis::Duration);
}

RateFunction RateFunction::custom(Callable f, bool duration_dependent) {
  return RateFunction(Custom{std::move(f)}, Axis::Time, duration_dependent);
}

double RateFunction::operator()(double t, double u) const {
  const double x = axis_ == Axis::Time ? t : u;
  return std::visit(Overloaded{
                        [](const Constant& c) { return c.rate; },
                        [x](const Gompertz& g) { return g.a + g.b * std::exp(g.c * x); },
                        [x](const Linear& l) { return interpolate_linear(l.knots, x); },
                        [t, u](const Custom& c) { return c.f(t, u); },
                    },
                    impl_);
}

std::vector<double> RateFunction::breakpoints() const {
  std::vector<double> out;
  if (const auto* l = std::get_if<Linear>(&impl_))
    for (const auto& k : l->knots) out.push_back(k.first);
  return out;
}

}  // namespace nmr
