#include "nmr/distributions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "nmr/errors.hpp"
#include "rk4.hpp"

namespace nmr {

Breaks model_breaks(const ModelSpec& spec, const TimeGrid& grid) {
  std::vector<double> times;
  const auto& space = spec.space();
  for (int j = 0; j < space.extended_count(); ++j)
    for (int k : spec.intensities.destinations(j)) {
      const auto& f = *spec.intensities.find(j, k);
      if (f.axis() == RateFunction::Axis::Time) {
        auto b = f.breakpoints();
        times.insert(times.end(), b.begin(), b.end());
      }
    }
  auto b = spec.payments.breakpoints();
  times.insert(times.end(), b.begin(), b.end());
  for (const auto& d : spec.payments.discrete()) times.push_back(d.time);

  std::vector<int> nodes;
  for (double t : times) {
    if (t <= 0.0 || t >= grid.horizon()) continue;
    if (auto i = grid.index_of(t)) nodes.push_back(*i);
  }
  return Breaks(std::move(nodes));
}

OccupationTable::OccupationTable(const TimeGrid& grid, int sigma)
    : grid_(grid),
      space_(sigma),
      p_(static_cast<std::size_t>(grid.size()) * static_cast<std::size_t>(space_.extended_count()), 0.0) {}

double OccupationTable::lumped(int i, int j) const {
  if (j == space_.lumped_retired()) {
    double s = 0.0;
    for (int m = space_.sigma(); m < 2 * space_.sigma(); ++m) s += extended(i, m);
    return s;
  }
  if (j == space_.lumped_dead()) return extended(i, space_.dead());
  return extended(i, j);
}

namespace {

void require_markov_pre(const ModelSpec& spec) {
  if (!spec.intensities.pre_retirement_markov())
    throw ModelError(ErrorCode::NonMarkovPreRetirement,
                     "pre-retirement intensities depend on duration; use the Monte Carlo oracle");
}

// Renormalizes row i when its mass drifted by more than 1e-10 and clamps to
// [0, 1]; returns the drift seen.
double settle_row(OccupationTable& occ, int i) {
  const int n = occ.space().extended_count();
  double total = 0.0;
  for (int x = 0; x < n; ++x) total += occ.extended(i, x);
  const double drift = std::abs(total - 1.0);
  for (int x = 0; x < n; ++x) {
    double& v = occ.extended(i, x);
    if (drift > 1e-10 && total > 0.0) v /= total;
    v = std::clamp(v, 0.0, 1.0);
  }
  return drift;
}

// Generator rows of the given extended states at time t (duration argument
// unused: every state involved is duration-free).
void fill_generator(const IntensitySpec& spec, double t, int states, std::vector<double>& q) {
  std::fill(q.begin(), q.end(), 0.0);
  const int n = spec.space().extended_count();
  for (int j = 0; j < states; ++j)
    for (int k : spec.destinations(j)) {
      double r = spec.rate(j, k, t, 0.0);
      q[static_cast<std::size_t>(j * n + k)] += r;
      q[static_cast<std::size_t>(j * n + j)] -= r;
    }
}

}  // namespace

OccupationTable solve_occupation(const ModelSpec& spec, const TimeGrid& grid) {
  require_markov_pre(spec);
  const auto& space = spec.space();
  const int sigma = space.sigma();
  const int n = space.extended_count();
  const int steps = grid.steps();
  const double h = grid.step();
  const bool retired_markov = spec.intensities.retired_markov();
  // Duration-free retired block: solve the whole extended chain; otherwise
  // only the pre-retirement block, whose exits are then tracked by the law.
  const int active = retired_markov ? n : sigma;

  OccupationTable occ(grid, sigma);
  auto init = spec.initial_distribution();
  for (int j = 0; j < sigma; ++j) occ.extended(0, j) = init[static_cast<std::size_t>(j)];

  std::vector<double> y(static_cast<std::size_t>(active));
  std::array<std::vector<double>, 3> gen;
  for (auto& g : gen) g.assign(static_cast<std::size_t>(n * n), 0.0);
  detail::Rk4Work work(static_cast<std::size_t>(active));
  double max_drift = 0.0;

  for (int i = 0; i < steps; ++i) {
    fill_generator(spec.intensities, grid.node(i), active, gen[0]);
    fill_generator(spec.intensities, grid.midpoint(i), active, gen[1]);
    fill_generator(spec.intensities, grid.node(i + 1), active, gen[2]);
    for (int x = 0; x < active; ++x) y[static_cast<std::size_t>(x)] = occ.extended(i, x);
    detail::rk4_forward(y, h, work, [&](int stage, const std::vector<double>& p, std::vector<double>& dp) {
      const auto& q = gen[static_cast<std::size_t>(stage)];
      for (int k = 0; k < active; ++k) {
        double s = 0.0;
        for (int j = 0; j < active; ++j) s += p[static_cast<std::size_t>(j)] * q[static_cast<std::size_t>(j * n + k)];
        dp[static_cast<std::size_t>(k)] = s;
      }
    });
    for (int x = 0; x < active; ++x) occ.extended(i + 1, x) = y[static_cast<std::size_t>(x)];
    if (retired_markov) max_drift = std::max(max_drift, settle_row(occ, i + 1));
  }
  if (retired_markov) {
    occ.set_max_drift(max_drift);
    return occ;
  }

  // Retired block from the conditional flows; dead from the cumulated
  // pre-retirement and post-retirement death flows.
  JointLaw law = joint_law(spec, occ, {.store_conditionals = false});
  auto death_flow = [&](int i) {
    double s = law.death_slice[i];
    for (int j = 0; j < sigma; ++j) s += occ.extended(i, j) * spec.intensities.rate(j, space.dead(), grid.node(i), 0.0);
    return s;
  };
  double dead = 0.0;
  for (int i = 0; i <= steps; ++i) {
    if (i > 0) dead += 0.5 * h * (death_flow(i - 1) + death_flow(i));
    for (int m = 0; m < sigma; ++m)
      occ.extended(i, sigma + m) = law.retired_occupation[static_cast<std::size_t>(i * sigma + m)];
    occ.extended(i, space.dead()) = dead;
    max_drift = std::max(max_drift, settle_row(occ, i));
  }
  occ.set_max_drift(max_drift);
  return occ;
}

RetiredFlow::RetiredFlow(const ModelSpec& spec, const TimeGrid& grid)
    : spec_(&spec), grid_(grid), sigma_(spec.sigma()), markov_(spec.intensities.retired_markov()) {
  if (!markov_) return;
  const int halves = 2 * grid_.steps() + 1;
  table_.resize(static_cast<std::size_t>(sigma_ * (sigma_ + 1)));
  for (int m = 0; m < sigma_; ++m)
    for (int to = 0; to <= sigma_; ++to) {
      auto& col = table_[static_cast<std::size_t>(m * (sigma_ + 1) + to)];
      col.assign(static_cast<std::size_t>(halves), 0.0);
      if (to == m) continue;
      const int from_x = sigma_ + m;
      const int to_x = to == sigma_ ? 2 * sigma_ : sigma_ + to;
      if (!spec.intensities.find(from_x, to_x)) continue;
      for (int ht = 0; ht < halves; ++ht)
        col[static_cast<std::size_t>(ht)] =
            spec.intensities.rate(from_x, to_x, grid_.horizon() * ht / (2.0 * grid_.steps()), 0.0);
    }
  // The RK4 step is linear in q and, without duration effects, the same for
  // every retirement node: tabulate it once as a σ×σ matrix per interval.
  const int s = sigma_;
  const double h = grid_.step();
  step_.assign(static_cast<std::size_t>(grid_.steps() * s * s), 0.0);
  std::vector<double> q(static_cast<std::size_t>(s));
  detail::Rk4Work work(static_cast<std::size_t>(s));
  for (int i = 0; i < grid_.steps(); ++i)
    for (int l = 0; l < s; ++l) {
      std::fill(q.begin(), q.end(), 0.0);
      q[static_cast<std::size_t>(l)] = 1.0;
      detail::rk4_forward(q, h, work, [&](int stage, const std::vector<double>& y, std::vector<double>& dy) {
        std::fill(dy.begin(), dy.end(), 0.0);
        for (int m = 0; m < s; ++m)
          for (int to = 0; to <= s; ++to) {
            const double flow = y[static_cast<std::size_t>(m)] * rate(m, to, 2 * i + stage, 0);
            dy[static_cast<std::size_t>(m)] -= flow;
            if (to < s) dy[static_cast<std::size_t>(to)] += flow;
          }
      });
      for (int m = 0; m < s; ++m) step_[static_cast<std::size_t>((i * s + m) * s + l)] = q[static_cast<std::size_t>(m)];
    }
}

double RetiredFlow::rate(int m, int to, int ht, int r) const {
  if (to == m) return 0.0;
  if (markov_) return table_[static_cast<std::size_t>(m * (sigma_ + 1) + to)][static_cast<std::size_t>(ht)];
  const int from_x = sigma_ + m;
  const int to_x = to == sigma_ ? 2 * sigma_ : sigma_ + to;
  const double scale = grid_.horizon() / (2.0 * grid_.steps());
  return spec_->intensities.rate(from_x, to_x, scale * ht, scale * (ht - 2 * r));
}

void RetiredFlow::propagate(int r, std::span<const double> q0,
                            const std::function<void(int, std::span<const double>)>& visit) const {
  const int s = sigma_;
  const int steps = grid_.steps();
  const double h = grid_.step();
  std::vector<double> q(q0.begin(), q0.end());
  detail::Rk4Work work(static_cast<std::size_t>(s));
  // Rates at the three stage times of the current step: [stage][m][to].
  std::vector<double> g(static_cast<std::size_t>(3 * s * (s + 1)));
  auto at = [&](int stage, int m, int to) -> double& {
    return g[static_cast<std::size_t>((stage * s + m) * (s + 1) + to)];
  };
  visit(r, q);
  if (markov_) {
    std::vector<double> next(static_cast<std::size_t>(s));
    for (int i = r; i < steps; ++i) {
      const double* a = step_.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(s * s);
      for (int m = 0; m < s; ++m) {
        double v = 0.0;
        for (int l = 0; l < s; ++l) v += a[m * s + l] * q[static_cast<std::size_t>(l)];
        next[static_cast<std::size_t>(m)] = v;
      }
      q.swap(next);
      visit(i + 1, q);
    }
    return;
  }
  for (int i = r; i < steps; ++i) {
    for (int stage = 0; stage < 3; ++stage)
      for (int m = 0; m < s; ++m)
        for (int to = 0; to <= s; ++to) at(stage, m, to) = rate(m, to, 2 * i + stage, r);
    detail::rk4_forward(q, h, work, [&](int stage, const std::vector<double>& y, std::vector<double>& dy) {
      for (int m = 0; m < s; ++m) dy[static_cast<std::size_t>(m)] = 0.0;
      for (int m = 0; m < s; ++m) {
        const double ym = y[static_cast<std::size_t>(m)];
        for (int to = 0; to <= s; ++to) {
          const double flow = ym * at(stage, m, to);
          dy[static_cast<std::size_t>(m)] -= flow;
          if (to < s) dy[static_cast<std::size_t>(to)] += flow;
        }
      }
    });
    visit(i + 1, q);
  }
}

std::optional<std::vector<double>> RetiredFlow::entry_mixture(int r, std::span<const double> w) const {
  const auto& intens = spec_->intensities;
  auto mixture_at = [&](double t) {
    std::vector<double> pi(static_cast<std::size_t>(sigma_), 0.0);
    double total = 0.0;
    for (int k = 0; k < sigma_; ++k) {
      if (w[static_cast<std::size_t>(k)] == 0.0) continue;
      for (int m = 0; m < sigma_; ++m) {
        double v = w[static_cast<std::size_t>(k)] * intens.rate(k, sigma_ + m, t, 0.0);
        pi[static_cast<std::size_t>(m)] += v;
        total += v;
      }
    }
    if (!(total > 0.0)) return std::optional<std::vector<double>>{};
    for (auto& p : pi) p /= total;
    return std::optional<std::vector<double>>{std::move(pi)};
  };
  const double t = grid_.node(r);
  if (auto pi = mixture_at(t)) return pi;
  if (r < grid_.steps()) return mixture_at(t + 1e-6 * grid_.step());
  return std::nullopt;
}

JointLaw joint_law(const ModelSpec& spec, const TimeGrid& grid, const JointLawOptions& options) {
  return joint_law(spec, solve_occupation(spec, grid), options);
}

JointLaw joint_law(const ModelSpec& spec, const OccupationTable& occ, const JointLawOptions& options) {
  require_markov_pre(spec);
  const TimeGrid& grid = occ.grid();
  const int sigma = spec.sigma();
  const int steps = grid.steps();

  JointLaw law;
  law.grid = grid;
  law.sigma = sigma;
  law.breaks = model_breaks(spec, grid);
  law.entry_density.assign(static_cast<std::size_t>(grid.size() * sigma * sigma), 0.0);
  law.f_eta = GridCurve(grid);
  law.tail = GridCurve(grid);
  law.death_slice = GridCurve(grid);
  law.f_eta.set_breaks(law.breaks);
  law.tail.set_breaks(law.breaks);
  law.death_slice.set_breaks(law.breaks);
  law.retired_occupation.assign(static_cast<std::size_t>(grid.size() * sigma), 0.0);
  if (options.store_conditionals) {
    law.cond_surv = TriangleTable(steps);
    law.cond_death = TriangleTable(steps);
  }

  for (int r = 0; r <= steps; ++r) {
    double total = 0.0;
    for (int k = 0; k < sigma; ++k)
      for (int m = 0; m < sigma; ++m) {
        double v = occ.extended(r, k) * spec.intensities.rate(k, sigma + m, grid.node(r), 0.0);
        law.entry_density[(static_cast<std::size_t>(r) * sigma + k) * sigma + m] = v;
        total += v;
      }
    law.f_eta[r] = total;
  }

  RetiredFlow flow(spec, grid);
  std::vector<double> w(static_cast<std::size_t>(sigma));
  for (int r = 0; r <= steps; ++r) {
    // A row carries mass if f_η is nonzero at r or just after it.
    const bool massless = law.f_eta[r] == 0.0 && (r == steps || law.f_eta.mid(r) == 0.0);
    if (massless && !options.store_conditionals) continue;
    for (int k = 0; k < sigma; ++k) w[static_cast<std::size_t>(k)] = occ.extended(r, k);
    auto mix = flow.entry_mixture(r, w);
    if (!mix) continue;
    flow.propagate(r, *mix, [&](int i, std::span<const double> q) {
      double surv = 0.0;
      double death = 0.0;
      for (int m = 0; m < sigma; ++m) {
        surv += q[static_cast<std::size_t>(m)];
        death += q[static_cast<std::size_t>(m)] * flow.death_rate(m, i, r);
      }
      if (options.store_conditionals) {
        law.cond_surv.at(r, i) = surv;
        law.cond_death.at(r, i) = death;
      }
      if (i == 0 || massless) return;
      const double c = law.retirement_mass(r, i);
      law.tail[i] += c * surv;
      law.death_slice[i] += c * death;
      for (int m = 0; m < sigma; ++m)
        law.retired_occupation[static_cast<std::size_t>(i * sigma + m)] += c * q[static_cast<std::size_t>(m)];
    });
  }
  return law;
}

double JointLaw::retirement_mass(int r, int i) const {
  const double h = grid.step();
  double c = h * composite_weight(breaks, 0, i, r) * f_eta[r];
  // Just after a break the piece has two nodes and the trapezoid would be
  // only second order relative to the O(h²) tail where retirement starts.
  if (i >= 1 && r >= i - 1 && (i == 1 || breaks.contains(i - 1)))
    c += h * ((f_eta[r] + 2.0 * f_eta.mid(i - 1)) / 6.0 - 0.5 * f_eta[r]);
  return c;
}

double smoothed_backward_intensity(const ModelSpec& spec, const JointLaw& law, int k, double t, double bandwidth) {
  const auto& grid = law.grid;
  auto hi = grid.index_of(t);
  auto lo = grid.index_of(t - bandwidth);
  if (!hi || !lo || *lo >= *hi) throw ModelError(ErrorCode::GridMisaligned, "window ends must be grid nodes");
  if (!(law.tail[*hi] > kDenominatorFloor)) return 0.0;
  RetiredFlow flow(spec, grid);
  const int sigma = law.sigma;
  std::vector<double> q0(static_cast<std::size_t>(sigma));
  double mass = 0.0;
  for (int r = *lo; r <= *hi; ++r) {
    const double w = grid.step() * composite_weight(law.breaks, *lo, *hi, r);
    if (w == 0.0) continue;
    std::fill(q0.begin(), q0.end(), 0.0);
    for (int j = 0; j < sigma; ++j) {
      if (k >= 0 && j != k) continue;
      for (int m = 0; m < sigma; ++m) q0[static_cast<std::size_t>(m)] += law.entry(r, j, m);
    }
    double surv = 0.0;
    flow.propagate(r, q0, [&](int i, std::span<const double> q) {
      if (i != *hi) return;
      for (double v : q) surv += v;
    });
    mass += w * surv;
  }
  return mass / (bandwidth * law.tail[*hi]);
}

double JointLaw::entry_from(int r, int k) const {
  double s = 0.0;
  for (int m = 0; m < sigma; ++m) s += entry(r, k, m);
  return s;
}

double JointLaw::mu1_node(int i, int r) const {
  if (!has_conditionals()) throw ModelError(ErrorCode::InvalidArgument, "law was built without conditionals");
  return safe_ratio(cond_death.at(r, i), cond_surv.at(r, i));
}

double JointLaw::mu2_right(int i) const {
  if (tail[i] > kDenominatorFloor || !has_conditionals() || i == grid.steps()) return mu2_node(i);
  if (!(tail[i + 1] > kDenominatorFloor)) return mu2_node(i);
  return mu1_node(i, i);
}

double JointLaw::mu1_mid(int i, int r) const {
  if (!has_conditionals()) throw ModelError(ErrorCode::InvalidArgument, "law was built without conditionals");
  const int last = grid.steps();
  auto num = mid_value(breaks, r, last, i, [&](int j) { return cond_death.at(r, j); },
                       [&](int j) { return cond_death.at(r, j); });
  auto den = mid_value(breaks, r, last, i, [&](int j) { return cond_surv.at(r, j); },
                       [&](int j) { return cond_surv.at(r, j); });
  return safe_ratio(num, den);
}

namespace {

// Node index and fractional offset of t; t must lie in [0, n].
std::pair<int, double> locate(const TimeGrid& grid, double t) {
  if (t < -1e-12 || t > grid.horizon() * (1.0 + 1e-12))
    throw ModelError(ErrorCode::OutOfHorizon, "time outside [0, n]");
  if (auto i = grid.index_of(t)) return {*i, 0.0};
  double x = t / grid.step();
  int i = std::clamp(static_cast<int>(std::floor(x)), 0, grid.steps() - 1);
  return {i, x - i};
}

double lerp_curve(const GridCurve& c, std::pair<int, double> at) {
  auto [i, w] = at;
  if (w == 0.0) return c[i];
  return (1.0 - w) * c[i] + w * c.left(i + 1);
}

}  // namespace

double mu1(const JointLaw& law, double t, double r) {
  if (r > t + 1e-12) throw ModelError(ErrorCode::OutOfHorizon, "mu1 needs r <= t");
  if (!law.has_conditionals()) throw ModelError(ErrorCode::InvalidArgument, "law was built without conditionals");
  auto [it, wt] = locate(law.grid, t);
  auto [ir, wr] = locate(law.grid, r);
  double num = 0.0;
  double den = 0.0;
  double used = 0.0;
  for (int a = 0; a < 2; ++a) {
    const int row = ir + a;
    const double weight = a == 0 ? 1.0 - wr : wr;
    if (weight == 0.0 || row > it) continue;
    double n0 = law.cond_death.at(row, it), d0 = law.cond_surv.at(row, it);
    if (wt > 0.0) {
      n0 = (1.0 - wt) * n0 + wt * law.cond_death.at(row, it + 1);
      d0 = (1.0 - wt) * d0 + wt * law.cond_surv.at(row, it + 1);
    }
    num += weight * n0;
    den += weight * d0;
    used += weight;
  }
  if (used == 0.0) return 0.0;
  return safe_ratio(num / used, den / used);
}

double mu2(const JointLaw& law, double t) {
  auto at = locate(law.grid, t);
  return safe_ratio(lerp_curve(law.death_slice, at), lerp_curve(law.tail, at));
}

double mu_bar(const JointLaw& law, double t) {
  auto at = locate(law.grid, t);
  return safe_ratio(lerp_curve(law.f_eta, at), lerp_curve(law.tail, at));
}

IntensityTables intensity_tables(const ModelSpec& spec, const JointLaw& law, const OccupationTable& occ) {
  const TimeGrid& grid = law.grid;
  const auto& space = spec.space();
  const int sigma = space.sigma();
  const int lumped = space.lumped_count();
  const int steps = grid.steps();

  IntensityTables out;
  if (law.has_conditionals()) {
    out.mu1 = TriangleTable(steps);
    for (int r = 0; r <= steps; ++r)
      for (int i = r; i <= steps; ++i) out.mu1.at(r, i) = law.mu1_node(i, r);
  }
  out.mu2 = GridCurve(grid);
  out.mu_bar = GridCurve(grid);
  out.lumped_forward.assign(static_cast<std::size_t>(grid.size() * sigma * lumped), 0.0);
  out.backward_law.assign(static_cast<std::size_t>(grid.size() * sigma), 0.0);
  out.backward_occupation.assign(static_cast<std::size_t>(grid.size() * sigma), 0.0);

  for (int i = 0; i <= steps; ++i) {
    const double t = grid.node(i);
    out.mu2[i] = law.mu2_node(i);
    out.mu_bar[i] = law.mu_bar_node(i);
    const double pp = occ.lumped(i, space.lumped_retired());
    for (int j = 0; j < sigma; ++j) {
      double* row = &out.lumped_forward[(static_cast<std::size_t>(i) * sigma + j) * lumped];
      for (int k : spec.intensities.destinations(j)) row[space.lump(k)] += spec.intensities.rate(j, k, t, 0.0);
      const double to_p = row[space.lumped_retired()];
      out.backward_law[static_cast<std::size_t>(i * sigma + j)] = safe_ratio(law.entry_from(i, j), law.tail[i]);
      out.backward_occupation[static_cast<std::size_t>(i * sigma + j)] = safe_ratio(occ.extended(i, j) * to_p, pp);
    }
  }
  return out;
}

IdentityCheck backward_identity_check(const ModelSpec& spec, const JointLaw& law, const OccupationTable& occ,
                                      double threshold) {
  const auto& space = spec.space();
  const int sigma = space.sigma();
  const TimeGrid& grid = law.grid;
  IdentityCheck out;
  for (int i = 1; i < grid.steps(); ++i) {
    const double pp = occ.lumped(i, space.lumped_retired());
    if (!(pp > threshold)) continue;
    ++out.nodes_checked;
    const double t = grid.node(i);
    double sum = 0.0;
    for (int j = 0; j < sigma; ++j) {
      double to_p = 0.0;
      for (int m = 0; m < sigma; ++m) to_p += spec.intensities.rate(j, sigma + m, t, 0.0);
      const double occupation_side = safe_ratio(occ.extended(i, j) * to_p, pp);
      const double law_side = safe_ratio(law.entry_from(i, j), law.tail[i]);
      sum += law_side;
      const double scale = std::max(std::abs(occupation_side), std::abs(law_side));
      if (scale > 0.0)
        out.max_relative_discrepancy = std::max(out.max_relative_discrepancy, std::abs(law_side - occupation_side) / scale);
    }
    const double total = law.mu_bar_node(i);
    if (total > 0.0) out.max_sum_discrepancy = std::max(out.max_sum_discrepancy, std::abs(sum - total) / total);
  }
  return out;
}

}  // namespace nmr
