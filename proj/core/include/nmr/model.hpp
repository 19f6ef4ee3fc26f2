#pragma once

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "nmr/functions.hpp"
#include "nmr/state.hpp"

namespace nmr {

/// Transition intensities of the extended chain, indexed by dense extended
/// states (see StateSpace). The duration argument u passed to a rate is the
/// time since entering the current state for pre-retirement states, and the
/// time since retirement for retired health states.
class IntensitySpec {
 public:
  explicit IntensitySpec(int sigma, double sup_bound = std::numeric_limits<double>::infinity());

  const StateSpace& space() const { return space_; }
  int sigma() const { return space_.sigma(); }

  void set(int from, int to, RateFunction rate);
  const RateFunction* find(int from, int to) const;
  const std::vector<int>& destinations(int from) const { return destinations_[from]; }

  double rate(int from, int to, double t, double u) const;
  double exit_rate(int from, double t, double u) const;

  double sup_bound() const { return sup_bound_; }
  void set_sup_bound(double bound) { sup_bound_ = bound; }

  /// True when no transition out of a pre-retirement state depends on duration.
  bool pre_retirement_markov() const;
  /// True when no transition out of a retired health state depends on duration.
  bool retired_markov() const;

 private:
  StateSpace space_;
  double sup_bound_;
  std::vector<std::optional<RateFunction>> rates_;  // extended_count² row-major
  std::vector<std::vector<int>> destinations_;
};

struct DiscretePayment {
  double time;
  int state;  // dense lumped index
  double amount;
};

/// Deterministic contractual payments on the lumped alphabet: sojourn rates
/// b_j, transition payments b_jk and finitely many discrete payments.
class PaymentSpec {
 public:
  PaymentSpec(int sigma, double horizon);

  const StateSpace& space() const { return space_; }
  double horizon() const { return horizon_; }

  void set_sojourn(int state, TimeFunction rate);
  const TimeFunction& sojourn(int state) const { return sojourn_[state]; }

  void set_transition(int from, int to, TimeFunction payment);
  const TimeFunction& transition(int from, int to) const;

  /// Appends a discrete payment; times must be strictly increasing.
  void add_discrete(double time, int state, double amount);
  const std::vector<DiscretePayment>& discrete() const { return discrete_; }
  /// Discrete payment due in `state` at exactly `time` (0 if none), compared
  /// to within `tol`.
  double atom(int state, double time, double tol = 1e-9) const;

  /// Every step-function breakpoint among sojourn and transition payments.
  std::vector<double> breakpoints() const;

  PaymentSpec scaled(double factor) const;

 private:
  StateSpace space_;
  double horizon_;
  std::vector<TimeFunction> sojourn_;
  std::vector<TimeFunction> transition_;  // lumped_count² row-major
  std::vector<DiscretePayment> discrete_;
};

/// Continuous deterministic bank account κ with κ(0) = 1, stored through
/// log κ so that ratios are exactly multiplicative.
class DiscountCurve {
 public:
  DiscountCurve() : DiscountCurve(constant_rate(0.0)) {}

  static DiscountCurve constant_rate(double rate);
  /// Piecewise-linear short rate r(t) through the knots; κ(t) = exp ∫₀ᵗ r.
  static DiscountCurve short_rate_table(Knots knots);
  static DiscountCurve custom(std::function<double(double)> kappa,
                              std::function<double(double)> short_rate);

  double kappa(double t) const;
  double log_kappa(double t) const { return log_kappa_(t); }
  double v(double t) const;
  /// κ'(t)/κ(t).
  double short_rate(double t) const { return short_rate_(t); }

 private:
  DiscountCurve(std::function<double(double)> log_kappa, std::function<double(double)> rate)
      : log_kappa_(std::move(log_kappa)), short_rate_(std::move(rate)) {}

  std::function<double(double)> log_kappa_;
  std::function<double(double)> short_rate_;
};

struct ModelSpec {
  IntensitySpec intensities;
  PaymentSpec payments;
  DiscountCurve discount;
  /// Initial distribution over pre-retirement states; empty means state 1.
  std::vector<double> initial;

  int sigma() const { return intensities.sigma(); }
  double horizon() const { return payments.horizon(); }
  const StateSpace& space() const { return intensities.space(); }
  std::vector<double> initial_distribution() const;
};

struct ValidationOptions {
  int samples_per_pair = 10000;
};

/// Checks structural zeros, the declared intensity bound, the discount curve
/// and the payment schedule. Returns the spec unchanged or throws ModelError.
const ModelSpec& validate_model(const ModelSpec& spec, const ValidationOptions& options = {});

/// κ(t)/κ(s) for 0 ≤ t ≤ s ≤ horizon.
double discount_factor(double t, double s, const DiscountCurve& curve, double horizon);

}  // namespace nmr
