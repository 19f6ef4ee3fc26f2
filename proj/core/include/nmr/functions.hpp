#pragma once

#include <functional>
#include <utility>
#include <variant>
#include <vector>

namespace nmr {

/// (abscissa, value) knots, strictly increasing in the abscissa.
using Knots = std::vector<std::pair<double, double>>;

/// Deterministic function of time used for payment rates and short rates.
/// Step functions are right-continuous; left() gives the left limit so that
/// integrators can evaluate an interval's closing endpoint from inside.
class TimeFunction {
 public:
  using Callable = std::function<double(double)>;

  TimeFunction() : impl_(Constant{0.0}) {}

  static TimeFunction zero() { return {}; }
  static TimeFunction constant(double value);
  /// Value knots[i].second on [knots[i].first, knots[i+1].first); zero
  /// before the first knot, last value thereafter.
  static TimeFunction step(Knots knots);
  /// Linear interpolation between knots, constant extrapolation.
  static TimeFunction linear(Knots knots);
  static TimeFunction custom(Callable f);

  double operator()(double t) const;
  double left(double t) const;
  bool is_zero() const;
  /// Abscissae where the function may be discontinuous (step knots only).
  std::vector<double> breakpoints() const;

  TimeFunction scaled(double factor) const;

 private:
  struct Constant { double value; };
  struct Step { Knots knots; };
  struct Linear { Knots knots; };
  struct Custom { Callable f; };
  using Impl = std::variant<Constant, Step, Linear, Custom>;

  explicit TimeFunction(Impl impl) : impl_(std::move(impl)) {}

  Impl impl_;
};

/// Transition intensity μ(t, u) in events per year at calendar time t and
/// duration u. A rate built on the duration axis ignores t, one built on the
/// time axis ignores u.
class RateFunction {
 public:
  enum class Axis { Time, Duration };
  using Callable = std::function<double(double, double)>;

  RateFunction() : impl_(Constant{0.0}) {}

  static RateFunction constant(double rate);
  /// a + b·exp(c·x), x the selected axis.
  static RateFunction gompertz(double a, double b, double c, Axis axis = Axis::Time);
  static RateFunction linear(Knots knots, Axis axis = Axis::Time);
  static RateFunction custom(Callable f, bool duration_dependent);

  double operator()(double t, double u) const;
  bool duration_dependent() const { return duration_dependent_; }
  Axis axis() const { return axis_; }
  /// Kinks of a piecewise-linear rate on its own axis (knot abscissae).
  std::vector<double> breakpoints() const;

 private:
  struct Constant { double rate; };
  struct Gompertz { double a, b, c; };
  struct Linear { Knots knots; };
  struct Custom { Callable f; };
  using Impl = std::variant<Constant, Gompertz, Linear, Custom>;

  RateFunction(Impl impl, Axis axis, bool duration_dependent)
      : impl_(std::move(impl)), axis_(axis), duration_dependent_(duration_dependent) {}

  Impl impl_;
  Axis axis_ = Axis::Time;
  bool duration_dependent_ = false;
};

double interpolate_linear(const Knots& knots, double x);

}  // namespace nmr
