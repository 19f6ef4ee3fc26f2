#include "nmr/model.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>

#include "nmr/errors.hpp"

namespace nmr {

IntensitySpec::IntensitySpec(int sigma, double sup_bound)
    : space_(sigma),
      sup_bound_(sup_bound),
      rates_(static_cast<std::size_t>(space_.extended_count() * space_.extended_count())),
      destinations_(static_cast<std::size_t>(space_.extended_count())) {}

void IntensitySpec::set(int from, int to, RateFunction rate) {
  const int n = space_.extended_count();
  if (from < 0 || from >= n || to < 0 || to >= n || from == to)
    throw ModelError(ErrorCode::InvalidArgument, "bad transition pair");
  auto& slot = rates_[static_cast<std::size_t>(from * n + to)];
  if (!slot) {
    auto& d = destinations_[from];
    d.insert(std::upper_bound(d.begin(), d.end(), to), to);
  }
  slot = std::move(rate);
}

const RateFunction* IntensitySpec::find(int from, int to) const {
  const auto& slot = rates_[static_cast<std::size_t>(from * space_.extended_count() + to)];
  return slot ? &*slot : nullptr;
}

double IntensitySpec::rate(int from, int to, double t, double u) const {
  const auto* f = find(from, to);
  return f ? (*f)(t, u) : 0.0;
}

double IntensitySpec::exit_rate(int from, double t, double u) const {
  double total = 0.0;
  for (int to : destinations_[from]) total += (*find(from, to))(t, u);
  return total;
}

bool IntensitySpec::pre_retirement_markov() const {
  for (int j = 0; j < space_.sigma(); ++j)
    for (int k : destinations_[j])
      if (find(j, k)->duration_dependent()) return false;
  return true;
}

bool IntensitySpec::retired_markov() const {
  for (int j = space_.sigma(); j < 2 * space_.sigma(); ++j)
    for (int k : destinations_[j])
      if (find(j, k)->duration_dependent()) return false;
  return true;
}

PaymentSpec::PaymentSpec(int sigma, double horizon)
    : space_(sigma),
      horizon_(horizon),
      sojourn_(static_cast<std::size_t>(space_.lumped_count())),
      transition_(static_cast<std::size_t>(space_.lumped_count() * space_.lumped_count())) {
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw ModelError(ErrorCode::InvalidArgument, "horizon must be positive and finite");
}

void PaymentSpec::set_sojourn(int state, TimeFunction rate) {
  if (state < 0 || state >= space_.lumped_count())
    throw ModelError(ErrorCode::InvalidArgument, "bad lumped state");
  sojourn_[state] = std::move(rate);
}

void PaymentSpec::set_transition(int from, int to, TimeFunction payment) {
  const int n = space_.lumped_count();
  if (from < 0 || from >= n || to < 0 || to >= n || from == to)
    throw ModelError(ErrorCode::InvalidArgument, "bad lumped transition pair");
  transition_[static_cast<std::size_t>(from * n + to)] = std::move(payment);
}

const TimeFunction& PaymentSpec::transition(int from, int to) const {
  return transition_[static_cast<std::size_t>(from * space_.lumped_count() + to)];
}

void PaymentSpec::add_discrete(double time, int state, double amount) {
  if (state < 0 || state >= space_.lumped_count())
    throw ModelError(ErrorCode::InvalidArgument, "bad lumped state for discrete payment");
  if (!discrete_.empty() && !(time > discrete_.back().time))
    throw ModelError(ErrorCode::BadPayment, "discrete payment times must be strictly increasing");
  discrete_.push_back({time, state, amount});
}

double PaymentSpec::atom(int state, double time, double tol) const {
  for (const auto& d : discrete_)
    if (d.state == state && std::abs(d.time - time) <= tol) return d.amount;
  return 0.0;
}

std::vector<double> PaymentSpec::breakpoints() const {
  std::vector<double> out;
  for (const auto& f : sojourn_) {
    auto b = f.breakpoints();
    out.insert(out.end(), b.begin(), b.end());
  }
  for (const auto& f : transition_) {
    auto b = f.breakpoints();
    out.insert(out.end(), b.begin(), b.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

PaymentSpec PaymentSpec::scaled(double factor) const {
  PaymentSpec out = *this;
  for (auto& f : out.sojourn_) f = f.scaled(factor);
  for (auto& f : out.transition_) f = f.scaled(factor);
  for (auto& d : out.discrete_) d.amount *= factor;
  return out;
}

DiscountCurve DiscountCurve::constant_rate(double rate) {
  return DiscountCurve([rate](double t) { return rate * t; }, [rate](double) { return rate; });
}

DiscountCurve DiscountCurve::short_rate_table(Knots knots) {
  if (knots.empty()) throw ModelError(ErrorCode::InvalidArgument, "empty short-rate table");
  for (std::size_t i = 1; i < knots.size(); ++i)
    if (!(knots[i].first > knots[i - 1].first))
      throw ModelError(ErrorCode::InvalidArgument, "short-rate abscissae must increase");
  // Cumulative exact integral of the piecewise-linear rate at every knot,
  // with constant extrapolation on both sides.
  auto table = std::make_shared<Knots>(std::move(knots));
  auto cumulative = std::make_shared<std::vector<double>>(table->size(), 0.0);
  for (std::size_t i = 1; i < table->size(); ++i) {
    const auto& a = (*table)[i - 1];
    const auto& b = (*table)[i];
    (*cumulative)[i] = (*cumulative)[i - 1] + 0.5 * (a.second + b.second) * (b.first - a.first);
  }
  auto integral_to = [table, cumulative](double x) {
    const auto& k = *table;
    if (x <= k.front().first) return (x - k.front().first) * k.front().second;
    if (x >= k.back().first)
      return cumulative->back() + (x - k.back().first) * k.back().second;
    auto it = std::upper_bound(k.begin(), k.end(), x,
                               [](double v, const auto& kn) { return v < kn.first; });
    std::size_t i = static_cast<std::size_t>(it - k.begin()) - 1;
    double rx = interpolate_linear(k, x);
    return (*cumulative)[i] + 0.5 * (k[i].second + rx) * (x - k[i].first);
  };
  double origin = integral_to(0.0);
  return DiscountCurve([integral_to, origin](double t) { return integral_to(t) - origin; },
                       [table](double t) { return interpolate_linear(*table, t); });
}

DiscountCurve DiscountCurve::custom(std::function<double(double)> kappa,
                                    std::function<double(double)> short_rate) {
  return DiscountCurve([kappa = std::move(kappa)](double t) { return std::log(kappa(t)); },
                       std::move(short_rate));
}

double DiscountCurve::kappa(double t) const { return std::exp(log_kappa_(t)); }
double DiscountCurve::v(double t) const { return std::exp(-log_kappa_(t)); }

std::vector<double> ModelSpec::initial_distribution() const {
  if (initial.empty()) {
    std::vector<double> out(static_cast<std::size_t>(sigma()), 0.0);
    out[0] = 1.0;
    return out;
  }
  return initial;
}

namespace {

void validate_intensities(const IntensitySpec& spec, double horizon, int samples) {
  const auto& space = spec.space();
  const int per_axis = std::max(2, static_cast<int>(std::lround(std::sqrt(static_cast<double>(samples)))));
  const int n = space.extended_count();
  if (!(spec.sup_bound() >= 0.0) || !std::isfinite(spec.sup_bound()))
    throw ModelError(ErrorCode::UnboundedIntensity, "sup_bound must be finite and non-negative");

  auto sample = [&](int a) { return horizon * a / (per_axis - 1); };

  for (int j = 0; j < n; ++j) {
    for (int k : spec.destinations(j)) {
      const bool forbidden = space.is_dead(j) || (space.is_retired(j) && space.is_pre(k));
      const auto& f = *spec.find(j, k);
      for (int a = 0; a < per_axis; ++a) {
        for (int b = 0; b < per_axis; ++b) {
          double value = f(sample(a), sample(b));
          std::string where = space.extended_label(j) + "->" + space.extended_label(k) +
                              " at (t,u)=(" + std::to_string(sample(a)) + "," +
                              std::to_string(sample(b)) + ")";
          if (forbidden && value != 0.0)
            throw ModelError(ErrorCode::StructuralViolation, "forbidden transition has rate " +
                                                                 std::to_string(value) + " " + where);
          if (!std::isfinite(value))
            throw ModelError(ErrorCode::UnboundedIntensity, "non-finite rate " + where);
          if (value < 0.0)
            throw ModelError(ErrorCode::StructuralViolation, "negative rate " + where);
        }
      }
    }
    for (int a = 0; a < per_axis; ++a) {
      for (int b = 0; b < per_axis; ++b) {
        double total = spec.exit_rate(j, sample(a), sample(b));
        if (total > spec.sup_bound())
          throw ModelError(ErrorCode::UnboundedIntensity,
                           "exit rate " + std::to_string(total) + " of state " +
                               space.extended_label(j) + " exceeds sup_bound " +
                               std::to_string(spec.sup_bound()));
      }
    }
  }
}

void validate_discount(const DiscountCurve& curve, double horizon, int samples) {
  if (std::abs(curve.kappa(0.0) - 1.0) > 1e-12)
    throw ModelError(ErrorCode::BadDiscount, "kappa(0) must equal 1");
  for (int a = 0; a <= samples; ++a) {
    double t = horizon * a / samples;
    double k = curve.kappa(t);
    if (!(k > 0.0) || !std::isfinite(k))
      throw ModelError(ErrorCode::BadDiscount, "kappa not positive at t=" + std::to_string(t));
    if (!std::isfinite(curve.short_rate(t)))
      throw ModelError(ErrorCode::BadDiscount, "short rate not finite at t=" + std::to_string(t));
  }
}

void validate_payments(const PaymentSpec& payments, int samples) {
  const double n = payments.horizon();
  const auto& space = payments.space();
  for (const auto& d : payments.discrete()) {
    if (d.time < 0.0 || d.time > n)
      throw ModelError(ErrorCode::BadPayment, "discrete payment outside [0, n]");
    if (!std::isfinite(d.amount)) throw ModelError(ErrorCode::BadPayment, "non-finite amount");
  }
  for (int a = 0; a <= samples; ++a) {
    double t = n * a / samples;
    for (int j = 0; j < space.lumped_count(); ++j) {
      if (!std::isfinite(payments.sojourn(j)(t)))
        throw ModelError(ErrorCode::BadPayment, "unbounded sojourn payment");
      for (int k = 0; k < space.lumped_count(); ++k)
        if (j != k && !std::isfinite(payments.transition(j, k)(t)))
          throw ModelError(ErrorCode::BadPayment, "unbounded transition payment");
    }
  }
}

}  // namespace

const ModelSpec& validate_model(const ModelSpec& spec, const ValidationOptions& options) {
  if (spec.payments.space().sigma() != spec.sigma())
    throw ModelError(ErrorCode::InvalidArgument, "payment and intensity state spaces differ");
  validate_intensities(spec.intensities, spec.horizon(), options.samples_per_pair);
  validate_discount(spec.discount, spec.horizon(), options.samples_per_pair);
  validate_payments(spec.payments, 1000);

  auto init = spec.initial_distribution();
  if (static_cast<int>(init.size()) != spec.sigma())
    throw ModelError(ErrorCode::InvalidArgument, "initial distribution must cover states 1..sigma");
  double total = std::accumulate(init.begin(), init.end(), 0.0);
  if (std::any_of(init.begin(), init.end(), [](double p) { return p < 0.0; }) ||
      std::abs(total - 1.0) > 1e-12)
    throw ModelError(ErrorCode::InvalidArgument, "initial distribution must be a probability vector");
  return spec;
}

double discount_factor(double t, double s, const DiscountCurve& curve, double horizon) {
  if (t < 0.0 || t > s || s > horizon)
    throw ModelError(ErrorCode::OutOfHorizon, "need 0 <= t <= s <= n");
  if (t == s) return 1.0;
  return std::exp(curve.log_kappa(t) - curve.log_kappa(s));
}

}  // namespace nmr
