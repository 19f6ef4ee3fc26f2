#include "nmr/mc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <string>
#include <thread>

#include "nmr/errors.hpp"

namespace nmr {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Independent stream per (seed, path): the path index is hashed into the
// starting counter, so a path's draws do not depend on how paths are split
// between threads.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t path) {
    std::uint64_t s = seed;
    std::uint64_t a = splitmix64(s);
    std::uint64_t p = path ^ 0x5851f42d4c957f2dULL;
    state_ = a ^ splitmix64(p);
  }
  double uniform() { return static_cast<double>(splitmix64(state_) >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

PathSample simulate_one(const ModelSpec& spec, Stream& rng) {
  const auto& intens = spec.intensities;
  const auto& space = spec.space();
  const double sup = intens.sup_bound();
  const double horizon = spec.horizon();

  PathSample path;
  const auto init = spec.initial_distribution();
  double u0 = rng.uniform();
  path.initial = static_cast<int>(init.size()) - 1;
  for (std::size_t j = 0; j < init.size(); ++j) {
    if (u0 < init[j]) {
      path.initial = static_cast<int>(j);
      break;
    }
    u0 -= init[j];
  }
  if (sup == 0.0) return path;

  int x = path.initial;
  double t = 0.0;
  double entered = 0.0;
  double pre_entered = 0.0;
  while (!space.is_dead(x)) {
    t += -std::log1p(-rng.uniform()) / sup;
    if (t > horizon) break;
    const double u = space.is_retired(x) ? t - path.eta : t - entered;
    const double total = intens.exit_rate(x, t, u);
    if (total > sup * (1.0 + 1e-9))
      throw ModelError(ErrorCode::BadBound, "exit rate " + std::to_string(total) + " of state " +
                                                space.extended_label(x) + " at t=" + std::to_string(t) +
                                                " exceeds sup_bound " + std::to_string(sup));
    // Conditional on acceptance the same draw is uniform on [0, total) and
    // selects the destination.
    const double v = rng.uniform() * sup;
    if (v >= total) continue;
    double acc = 0.0;
    int dest = -1;
    for (int k : intens.destinations(x)) {
      acc += intens.rate(x, k, t, u);
      if (v < acc) {
        dest = k;
        break;
      }
    }
    if (dest < 0) dest = intens.destinations(x).back();  // rounding at the top of [0, total)
    if (space.is_pre(x) && space.is_retired(dest)) {
      path.eta = t;
      path.h_state = x;
      path.u_h = t - pre_entered;
    }
    if (space.is_dead(dest)) path.delta = t;
    path.jumps.push_back({t, dest});
    x = dest;
    entered = t;
    if (space.is_pre(x)) pre_entered = t;
  }
  return path;
}

}  // namespace

int PathSample::state_at(double t) const {
  int x = initial;
  for (const auto& j : jumps) {
    if (j.time > t) break;
    x = j.state;
  }
  return x;
}

int PathSample::state_before(double t) const {
  int x = initial;
  for (const auto& j : jumps) {
    if (j.time >= t) break;
    x = j.state;
  }
  return x;
}

double PathSample::sojourn_start(double t) const {
  double s = 0.0;
  for (const auto& j : jumps) {
    if (j.time > t) break;
    s = j.time;
  }
  return s;
}

std::pair<double, int> PathSample::lumped_entry(double t, const StateSpace& space) const {
  int cur = space.lump(initial);
  double since = 0.0;
  int prev = -1;
  for (const auto& j : jumps) {
    if (j.time > t) break;
    const int next = space.lump(j.state);
    if (next != cur) {
      prev = cur;
      cur = next;
      since = j.time;
    }
  }
  return {since, prev};
}

std::vector<PathSample> simulate_paths(const ModelSpec& spec, std::size_t n_paths, std::uint64_t seed,
                                       const SimulationOptions& options) {
  const double sup = spec.intensities.sup_bound();
  if (!std::isfinite(sup) || sup < 0.0)
    throw ModelError(ErrorCode::BadBound, "thinning needs a finite nonnegative sup_bound");
  std::vector<PathSample> paths(n_paths);
  unsigned threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n_paths, 1)));
  std::vector<std::exception_ptr> errors(threads);
  auto work = [&](unsigned w) {
    try {
      const std::size_t lo = n_paths * w / threads;
      const std::size_t hi = n_paths * (w + 1) / threads;
      for (std::size_t i = lo; i < hi; ++i) {
        Stream rng(seed, i);
        paths[i] = simulate_one(spec, rng);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return paths;
}

// ---------------------------------------------------------------------------

namespace {

// Simpson on [a, b] of v·f, splitting at the function's breakpoints; the
// closing endpoint of each piece is read as a left limit.
double discounted_integral(const TimeFunction& f, const std::vector<double>& breaks, const DiscountCurve& disc,
                           double a, double b) {
  if (!(b > a)) return 0.0;
  double s = 0.0;
  double lo = a;
  auto piece = [&](double x0, double x1) {
    const double m = 0.5 * (x0 + x1);
    return (x1 - x0) / 6.0 *
           (disc.v(x0) * f(x0) + 4.0 * disc.v(m) * f(m) + disc.v(x1) * f.left(x1));
  };
  for (double br : breaks) {
    if (br <= lo) continue;
    if (br >= b) break;
    s += piece(lo, br);
    lo = br;
  }
  return s + piece(lo, b);
}

}  // namespace

OutflowEvaluator::OutflowEvaluator(const ModelSpec& spec, double step) : spec_(&spec) {
  if (!(step > 0.0)) throw ModelError(ErrorCode::InvalidArgument, "outflow grid step must be positive");
  const double horizon = spec.horizon();
  steps_ = std::max(1, static_cast<int>(std::ceil(horizon / step - 1e-9)));
  step_ = horizon / steps_;
  const auto& pay = spec.payments;
  const int lumped = spec.space().lumped_count();
  cumulative_.assign(static_cast<std::size_t>(lumped), {});
  breaks_.assign(static_cast<std::size_t>(lumped), {});
  for (int j = 0; j < lumped; ++j) {
    const auto& f = pay.sojourn(j);
    auto& c = cumulative_[static_cast<std::size_t>(j)];
    c.assign(static_cast<std::size_t>(steps_ + 1), 0.0);
    if (f.is_zero()) continue;
    auto& br = breaks_[static_cast<std::size_t>(j)];
    br = f.breakpoints();
    std::sort(br.begin(), br.end());
    for (int i = 0; i < steps_; ++i)
      c[static_cast<std::size_t>(i + 1)] =
          c[static_cast<std::size_t>(i)] + discounted_integral(f, br, spec.discount, i * step_, (i + 1) * step_);
  }
}

double OutflowEvaluator::cumulative(int j, double s) const {
  const auto& f = spec_->payments.sojourn(j);
  if (f.is_zero()) return 0.0;
  const int i = std::clamp(static_cast<int>(std::floor(s / step_)), 0, steps_);
  const double base = cumulative_[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
  const double node = i * step_;
  if (!(s > node)) return base;
  return base + discounted_integral(f, breaks_[static_cast<std::size_t>(j)], spec_->discount, node, s);
}

double OutflowEvaluator::operator()(const PathSample& path, double t) const {
  const auto& space = spec_->space();
  const auto& pay = spec_->payments;
  const auto& disc = spec_->discount;
  const double horizon = spec_->horizon();
  if (t >= horizon) return 0.0;
  double total = 0.0;

  // Sojourn payments over the lumped trajectory clipped to (t, n].
  auto sojourn = [&](int x, double a, double b) {
    a = std::max(a, t);
    b = std::min(b, horizon);
    if (b > a) {
      const int j = space.lump(x);
      total += cumulative(j, b) - cumulative(j, a);
    }
  };
  int x = path.initial;
  double start = 0.0;
  for (const auto& jump : path.jumps) {
    sojourn(x, start, jump.time);
    if (jump.time > t) {
      const int from = space.lump(x);
      const int to = space.lump(jump.state);
      if (from != to) total += disc.v(jump.time) * pay.transition(from, to)(jump.time);
    }
    x = jump.state;
    start = jump.time;
  }
  sojourn(x, start, horizon);

  for (const auto& d : pay.discrete()) {
    if (!(d.time > t) || d.time > horizon) continue;
    if (space.lump(path.state_before(d.time)) == d.state) total += disc.v(d.time) * d.amount;
  }
  return disc.kappa(t) * total;
}

double discounted_outflow(const PathSample& path, const ModelSpec& spec, double t, double step) {
  return OutflowEvaluator(spec, step)(path, t);
}

// ---------------------------------------------------------------------------

ConditioningSpec ConditioningSpec::lumped(double t, int j) {
  ConditioningSpec c;
  c.kind = Kind::LumpedState;
  c.t = t;
  c.state = j;
  return c;
}

ConditioningSpec ConditioningSpec::extended(double t, int x) {
  ConditioningSpec c;
  c.kind = Kind::ExtendedState;
  c.t = t;
  c.state = x;
  return c;
}

ConditioningSpec ConditioningSpec::retired_eta(double t, double lo, double hi) {
  ConditioningSpec c;
  c.kind = Kind::RetiredEtaBin;
  c.t = t;
  c.lo = lo;
  c.hi = hi;
  return c;
}

ConditioningSpec ConditioningSpec::retired_full(double t, double lo, double hi, int k, double u_lo, double u_hi) {
  ConditioningSpec c = retired_eta(t, lo, hi);
  c.kind = Kind::RetiredFull;
  c.from = k;
  c.u_lo = u_lo;
  c.u_hi = u_hi;
  return c;
}

ConditioningSpec ConditioningSpec::transition(double t, int j, int k, double window) {
  ConditioningSpec c;
  c.kind = Kind::Transition;
  c.t = t;
  c.from = j;
  c.state = k;
  c.window = window;
  return c;
}

void ConditioningSpec::validate(double horizon) const {
  if (t < 0.0 || t > horizon) throw ModelError(ErrorCode::OutOfHorizon, "conditioning time outside [0, n]");
  if ((kind == Kind::RetiredEtaBin || kind == Kind::RetiredFull) && !(hi > lo))
    throw ModelError(ErrorCode::InvalidArgument, "retirement-time bin must have positive width");
  if (kind == Kind::RetiredFull && !(u_hi > u_lo))
    throw ModelError(ErrorCode::InvalidArgument, "duration bin must have positive width");
  if (kind == Kind::Transition && !(window > 0.0))
    throw ModelError(ErrorCode::InvalidArgument, "transition window must be positive");
}

bool ConditioningSpec::holds(const PathSample& path, const StateSpace& space) const {
  switch (kind) {
    case Kind::LumpedState: return space.lump(path.state_at(t)) == state;
    case Kind::ExtendedState: return path.state_at(t) == state;
    case Kind::RetiredEtaBin:
      return path.retired_by(t) && path.eta >= lo && path.eta < hi;
    case Kind::RetiredFull:
      return path.retired_by(t) && path.eta >= lo && path.eta < hi && path.h_state == from &&
             path.u_h >= u_lo && path.u_h < u_hi;
    case Kind::Transition: {
      if (space.lump(path.state_at(t)) != state) return false;
      auto [since, prev] = path.lumped_entry(t, space);
      return prev == from && since > t - window;
    }
  }
  return false;
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

McEstimate estimate_reserve(std::span<const PathSample> paths, const ConditioningSpec& cond,
                            const OutflowEvaluator& outflow, const StateSpace& space, std::size_t min_effective) {
  if (paths.empty()) throw ModelError(ErrorCode::InvalidArgument, "no paths");
  std::vector<double> y;
  for (const auto& p : paths)
    if (cond.holds(p, space)) y.push_back(outflow(p, cond.t));
  if (y.empty()) throw ModelError(ErrorCode::EmptyConditioning, "no path satisfies the conditioning event");
  McEstimate est;
  est.n_effective = y.size();
  const double n = static_cast<double>(y.size());
  est.mean = pairwise_sum(y) / n;
  if (y.size() > 1) {
    for (auto& v : y) v = (v - est.mean) * (v - est.mean);
    est.standard_error = std::sqrt(pairwise_sum(y) / (n - 1.0) / n);
  }
  est.reliable = est.n_effective >= min_effective;
  if (cond.kind == ConditioningSpec::Kind::RetiredEtaBin || cond.kind == ConditioningSpec::Kind::RetiredFull)
    est.eta_bin_width = cond.hi - cond.lo;
  if (cond.kind == ConditioningSpec::Kind::RetiredFull) est.duration_bin_width = cond.u_hi - cond.u_lo;
  if (cond.kind == ConditioningSpec::Kind::Transition) est.window = cond.window;
  return est;
}

McEstimate estimate_reserve(std::span<const PathSample> paths, const ConditioningSpec& cond, const ModelSpec& spec,
                            std::size_t min_effective) {
  cond.validate(spec.horizon());
  return estimate_reserve(paths, cond, OutflowEvaluator(spec, 1e-3), spec.space(), min_effective);
}

IntensityEstimate estimate_forward_intensity(std::span<const PathSample> paths, const ConditioningSpec& at_risk,
                                             int from, int to, double bandwidth, const StateSpace& space) {
  if (!(bandwidth > 0.0)) throw ModelError(ErrorCode::InvalidArgument, "bandwidth must be positive");
  const double t = at_risk.t;
  const double end = t + bandwidth;
  IntensityEstimate est;
  est.bandwidth = bandwidth;
  std::vector<double> exposure;
  for (const auto& p : paths) {
    if (space.lump(p.state_at(t)) != from || !at_risk.holds(p, space)) continue;
    ++est.n_effective;
    // First lumped change after t.
    double leave = end;
    int next = from;
    for (const auto& j : p.jumps) {
      if (j.time <= t) continue;
      if (j.time >= end) break;
      if (space.lump(j.state) != from) {
        leave = j.time;
        next = space.lump(j.state);
        break;
      }
    }
    exposure.push_back(leave - t);
    if (leave < end && next == to) ++est.events;
  }
  if (est.n_effective == 0) throw ModelError(ErrorCode::EmptyConditioning, "no path at risk");
  est.exposure = pairwise_sum(exposure);
  if (est.exposure > 0.0) {
    est.rate = static_cast<double>(est.events) / est.exposure;
    est.standard_error = std::sqrt(static_cast<double>(est.events)) / est.exposure;
  }
  return est;
}

IntensityEstimate estimate_backward_intensity(std::span<const PathSample> paths, int from, int to, double t,
                                              double bandwidth, const StateSpace& space) {
  if (!(bandwidth > 0.0)) throw ModelError(ErrorCode::InvalidArgument, "bandwidth must be positive");
  if (t < bandwidth) throw ModelError(ErrorCode::InvalidArgument, "backward window must lie in [0, t]");
  IntensityEstimate est;
  est.bandwidth = bandwidth;
  for (const auto& p : paths) {
    if (space.lump(p.state_at(t)) != to) continue;
    ++est.n_effective;
    auto [since, prev] = p.lumped_entry(t, space);
    if (prev >= 0 && since > t - bandwidth && (from < 0 || prev == from)) ++est.events;
  }
  if (est.n_effective == 0) throw ModelError(ErrorCode::EmptyConditioning, "no path in the target state");
  const double n = static_cast<double>(est.n_effective);
  const double share = static_cast<double>(est.events) / n;
  est.exposure = bandwidth * n;
  est.rate = share / bandwidth;
  est.standard_error = std::sqrt(share * (1.0 - share) / n) / bandwidth;
  return est;
}

void write_path_dump(std::ostream& out, std::span<const PathSample> paths, const StateSpace& space) {
  out << "path_id,jump_time,new_state\n";
  char buf[64];
  for (std::size_t i = 0; i < paths.size(); ++i) {
    out << i << ",0," << space.extended_label(paths[i].initial) << '\n';
    for (const auto& j : paths[i].jumps) {
      std::snprintf(buf, sizeof buf, "%.17g", j.time);
      out << i << ',' << buf << ',' << space.extended_label(j.state) << '\n';
    }
  }
}

}  // namespace nmr
