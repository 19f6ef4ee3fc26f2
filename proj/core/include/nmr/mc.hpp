#pragma once

#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

#include "nmr/model.hpp"

namespace nmr {

inline constexpr double kNever = std::numeric_limits<double>::infinity();

struct JumpRecord {
  double time;
  int state;  // dense extended index entered
};

/// One simulated trajectory of the extended chain with the derived retirement
/// marks. States are dense extended indices unless stated otherwise.
struct PathSample {
  int initial = 0;
  std::vector<JumpRecord> jumps;
  double eta = kNever;    // first entry into the retired block
  double delta = kNever;  // entry into d
  int h_state = -1;       // pre-retirement state left at η (0-based), -1 if never retired
  double u_h = 0.0;       // length of the last pre-retirement sojourn, valid if retired

  /// Z̃_t, càdlàg: the post-jump state when a jump happens exactly at t.
  int state_at(double t) const;
  /// Z̃_{t−}.
  int state_before(double t) const;
  /// Time at which the current sojourn of Z̃_t started.
  double sojourn_start(double t) const;
  /// Time at which the lumped chain entered its state at t, and the lumped
  /// state it left then (-1 if it is the initial state).
  std::pair<double, int> lumped_entry(double t, const StateSpace& space) const;
  bool retired_by(double t) const { return eta <= t && !(delta <= t); }
};

struct SimulationOptions {
  /// Worker threads; 0 picks the hardware concurrency. Results do not
  /// depend on it.
  unsigned threads = 0;
};

/// Samples paths by thinning a rate-sup_bound Poisson stream; path i uses
/// its own stream derived from (seed, i). Throws BadBound if the declared
/// bound is not finite or an exit rate exceeds it.
std::vector<PathSample> simulate_paths(const ModelSpec& spec, std::size_t n_paths, std::uint64_t seed,
                                       const SimulationOptions& options = {});

/// Pathwise discounted future payments Y(t) = Σ of payments strictly after t,
/// discounted to t. Cumulative discounted sojourn-rate integrals are
/// tabulated once on a grid of the given step (Simpson per interval), so
/// evaluating a path costs O(#jumps + #atoms).
class OutflowEvaluator {
 public:
  OutflowEvaluator(const ModelSpec& spec, double step);

  double operator()(const PathSample& path, double t) const;

 private:
  // ∫₀ˢ v(x) b_j(x) dx for lumped state j.
  double cumulative(int j, double s) const;

  const ModelSpec* spec_;
  double step_;
  int steps_;
  std::vector<std::vector<double>> cumulative_;  // [lumped state][node]
  std::vector<std::vector<double>> breaks_;      // sorted sojourn-rate breakpoints
};

double discounted_outflow(const PathSample& path, const ModelSpec& spec, double t, double step = 1e-3);

/// Events conditioned on at time t. State indices are lumped unless the
/// kind says extended; bins are half-open [lo, hi).
struct ConditioningSpec {
  enum class Kind {
    LumpedState,    // {Z_t = j}
    ExtendedState,  // {Z̃_t = x}
    RetiredEtaBin,  // {Z_t = p, η ∈ bin}
    RetiredFull,    // {Z_t = p, η ∈ bin, H = k, Uʰ ∈ bin}
    Transition,     // {Z_{s−} = j, Z_s = k for some s ∈ (t − window, t], Z_t = k}
  };

  Kind kind = Kind::LumpedState;
  double t = 0.0;
  int state = 0;  // j (lumped), x (extended) or k for Transition
  int from = -1;  // Transition origin (lumped); RetiredFull: H
  double lo = 0.0, hi = 0.0;      // η bin
  double u_lo = 0.0, u_hi = 0.0;  // Uʰ bin
  double window = 0.0;

  static ConditioningSpec lumped(double t, int j);
  static ConditioningSpec extended(double t, int x);
  static ConditioningSpec retired_eta(double t, double lo, double hi);
  static ConditioningSpec retired_full(double t, double lo, double hi, int k, double u_lo, double u_hi);
  static ConditioningSpec transition(double t, int j, int k, double window);

  /// Throws InvalidArgument on empty bins or a non-positive window.
  void validate(double horizon) const;
  bool holds(const PathSample& path, const StateSpace& space) const;
};

struct McEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t n_effective = 0;
  bool reliable = false;  // n_effective ≥ the configured minimum
  /// Widths of the bins/windows averaged over: the estimate targets the
  /// conditional mean over the bin, not the point value.
  double eta_bin_width = 0.0;
  double duration_bin_width = 0.0;
  double window = 0.0;
};

inline constexpr std::size_t kDefaultMinEffective = 200;

/// Mean of Y(t) over paths satisfying the event, with SE = sd/√n. Sums are
/// pairwise in path order. Throws EmptyConditioning when no path qualifies.
McEstimate estimate_reserve(std::span<const PathSample> paths, const ConditioningSpec& cond,
                            const OutflowEvaluator& outflow, const StateSpace& space,
                            std::size_t min_effective = kDefaultMinEffective);
McEstimate estimate_reserve(std::span<const PathSample> paths, const ConditioningSpec& cond, const ModelSpec& spec,
                            std::size_t min_effective = kDefaultMinEffective);

struct IntensityEstimate {
  double rate = 0.0;
  double standard_error = 0.0;
  std::size_t events = 0;
  double exposure = 0.0;       // forward: time at risk; backward: bandwidth × at-risk count
  std::size_t n_effective = 0;  // paths in the at-risk set
  double bandwidth = 0.0;
};

/// Occurrence/exposure rate of lumped moves from → to over [t, t + bw) among
/// paths satisfying `at_risk` (evaluated at t) and in `from` at t. Poisson
/// standard error √events / exposure.
IntensityEstimate estimate_forward_intensity(std::span<const PathSample> paths, const ConditioningSpec& at_risk,
                                             int from, int to, double bandwidth, const StateSpace& space);

/// Paths in lumped `to` at t that entered it from `from` (any other state if
/// from < 0) during (t − bw, t], divided by bw·#paths in `to` at t. Binomial
/// standard error.
IntensityEstimate estimate_backward_intensity(std::span<const PathSample> paths, int from, int to, double t,
                                              double bandwidth, const StateSpace& space);

/// CSV (path_id,jump_time,new_state) with extended labels; the initial state
/// is written as a row at time 0.
void write_path_dump(std::ostream& out, std::span<const PathSample> paths, const StateSpace& space);

/// Sum by recursive halving; fixed association for a given length.
double pairwise_sum(std::span<const double> values);

}  // namespace nmr
