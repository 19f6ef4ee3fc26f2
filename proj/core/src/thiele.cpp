#include "nmr/thiele.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>

#include "nmr/errors.hpp"
#include "rk4.hpp"

namespace nmr {

std::string_view to_string(Regime regime) {
  switch (regime) {
    case Regime::Full: return "full";
    case Regime::G1: return "G1";
    case Regime::G2: return "G2";
    case Regime::Practice: return "practice";
  }
  return "?";
}

Regime parse_regime(std::string_view name) {
  if (name == "full") return Regime::Full;
  if (name == "G1" || name == "g1") return Regime::G1;
  if (name == "G2" || name == "g2") return Regime::G2;
  if (name == "practice") return Regime::Practice;
  throw ModelError(ErrorCode::ParseError, "unknown regime '" + std::string(name) + "'");
}

GridCurve ReserveSurface::diagonal() const {
  GridCurve d(grid);
  for (int i = 0; i < grid.size(); ++i) {
    d[i] = triangle.at(i, i);
    if (!jump.empty()) d.set_jump(i, jump[static_cast<std::size_t>(i)]);
  }
  return d;
}

double ResidualReport::overall() const {
  double m = 0.0;
  for (const auto& [_, v] : max_abs) m = std::max(m, v);
  return m;
}

namespace {

using detail::LinearCoef;

// Stage 0 is the closing node of an interval (read as a left limit), stage 1
// its midpoint, stage 2 its opening node.
enum Stage { kEnd = 0, kMid = 1, kStart = 2 };

// Shared per-grid context: discounting, payments and atoms.
struct Context {
  const ModelSpec& spec;
  const TimeGrid& grid;
  double h;
  int sigma;
  int lp;  // lumped p
  int ld;  // lumped d
  Breaks breaks;
  std::vector<double> rho_node, rho_mid;
  std::vector<std::vector<double>> atoms;  // [lumped state][node]

  Context(const ModelSpec& s, const TimeGrid& g)
      : spec(s),
        grid(g),
        h(g.step()),
        sigma(s.sigma()),
        lp(s.space().lumped_retired()),
        ld(s.space().lumped_dead()),
        breaks(model_breaks(s, g)) {
    g.require_aligned(s.payments);
    rho_node.resize(static_cast<std::size_t>(g.size()));
    rho_mid.resize(static_cast<std::size_t>(g.steps()));
    for (int i = 0; i < g.size(); ++i) rho_node[static_cast<std::size_t>(i)] = s.discount.short_rate(g.node(i));
    for (int i = 0; i < g.steps(); ++i) rho_mid[static_cast<std::size_t>(i)] = s.discount.short_rate(g.midpoint(i));
    atoms.assign(static_cast<std::size_t>(s.space().lumped_count()), std::vector<double>(static_cast<std::size_t>(g.size()), 0.0));
    for (const auto& d : s.payments.discrete())
      atoms[static_cast<std::size_t>(d.state)][static_cast<std::size_t>(*g.index_of(d.time))] += d.amount;
  }

  double time(int i, int stage) const {
    return stage == kEnd ? grid.node(i + 1) : stage == kMid ? grid.midpoint(i) : grid.node(i);
  }
  double rho(int i, int stage) const {
    return stage == kEnd ? rho_node[static_cast<std::size_t>(i + 1)]
                         : stage == kMid ? rho_mid[static_cast<std::size_t>(i)] : rho_node[static_cast<std::size_t>(i)];
  }
  double pay(const TimeFunction& f, int i, int stage) const {
    double t = time(i, stage);
    return stage == kEnd ? f.left(t) : f(t);
  }
  double sojourn(int j, int i, int stage) const { return pay(spec.payments.sojourn(j), i, stage); }
  double transition(int j, int k, int i, int stage) const { return pay(spec.payments.transition(j, k), i, stage); }
  double atom(int j, int i) const { return atoms[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)]; }

  // Curve value seen by stage of interval i.
  static double curve(const GridCurve& c, int i, int stage) {
    return stage == kEnd ? c.left(i + 1) : stage == kMid ? c.mid(i) : c[i];
  }
  // Node-side convention for residuals: the closing node is read from the left.
  double pay_at(const TimeFunction& f, int i, bool left) const {
    return left ? f.left(grid.node(i)) : f(grid.node(i));
  }
};

void require_same_grid(const JointLaw& law, const TimeGrid& grid) {
  if (law.grid.steps() != grid.steps() || law.grid.horizon() != grid.horizon())
    throw ModelError(ErrorCode::GridMisaligned, "joint law was computed on a different grid");
}

ReserveSurface make_curve(Regime regime, std::string state, const TimeGrid& grid, const Breaks& breaks) {
  ReserveSurface s;
  s.regime = regime;
  s.state = std::move(state);
  s.layout = SurfaceLayout::Curve;
  s.grid = grid;
  s.curve = GridCurve(grid);
  s.curve.set_breaks(breaks);
  return s;
}

ReserveSurface make_triangle(Regime regime, const Context& ctx, int k) {
  ReserveSurface s;
  s.regime = regime;
  s.state = ctx.spec.space().lumped_label(ctx.lp);
  s.k = k;
  s.layout = SurfaceLayout::CurveR;
  s.grid = ctx.grid;
  s.triangle = TriangleTable(ctx.grid.steps());
  s.jump = ctx.atoms[static_cast<std::size_t>(ctx.lp)];
  return s;
}

// Backward solve of a scalar linear equation W' = a W + g on [0, n] with
// atoms of the given lumped state; coef(i, stage) supplies (a, g).
template <class Coef>
void solve_scalar(const Context& ctx, int lumped, GridCurve& w, const Coef& coef) {
  const int steps = ctx.grid.steps();
  w[steps] = 0.0;
  w.set_jump(steps, ctx.atom(lumped, steps));
  for (int i = steps - 1; i >= 0; --i) {
    w[i] = detail::rk4_back(w.left(i + 1), ctx.h, coef(i, kEnd), coef(i, kMid), coef(i, kStart));
    w.set_jump(i, ctx.atom(lumped, i));
  }
}

// One retirement row r of a CurveR reserve in p with death intensity
// num/den, tabulated at nodes r..M of the row.
void solve_retired_row(const Context& ctx, const GridCurve& dead, int r, std::span<const double> num,
                       std::span<const double> den, ReserveSurface& out) {
  const int steps = ctx.grid.steps();
  auto mu = [&](int i, int stage) {
    auto node = [&](int j) { return safe_ratio(num[static_cast<std::size_t>(j - r)], den[static_cast<std::size_t>(j - r)]); };
    if (stage == kEnd) return node(i + 1);
    if (stage == kStart) return node(i);
    auto n = [&](int j) { return num[static_cast<std::size_t>(j - r)]; };
    auto d = [&](int j) { return den[static_cast<std::size_t>(j - r)]; };
    return safe_ratio(mid_value(ctx.breaks, r, steps, i, n, n), mid_value(ctx.breaks, r, steps, i, d, d));
  };
  auto coef = [&](int i, int stage) {
    const double m = mu(i, stage);
    return LinearCoef{ctx.rho(i, stage) + m, -ctx.sojourn(ctx.lp, i, stage) -
                                                 (ctx.transition(ctx.lp, ctx.ld, i, stage) +
                                                  Context::curve(dead, i, stage)) * m};
  };
  out.triangle.at(r, steps) = 0.0;
  for (int i = steps - 1; i >= r; --i)
    out.triangle.at(r, i) = detail::rk4_back(out.left(i + 1, r), ctx.h, coef(i, kEnd), coef(i, kMid), coef(i, kStart));
}

// Death numerator and survival along row r for retirement from pre-state k.
// Returns false (zero row) if no retirement from k is possible around r.
bool retired_row_by_k(const RetiredFlow& flow, int r, int k, std::vector<double>& num, std::vector<double>& den) {
  const int sigma = flow.sigma();
  std::vector<double> w(static_cast<std::size_t>(sigma), 0.0);
  w[static_cast<std::size_t>(k)] = 1.0;
  const int len = flow.grid().steps() - r + 1;
  num.assign(static_cast<std::size_t>(len), 0.0);
  den.assign(static_cast<std::size_t>(len), 0.0);
  auto mix = flow.entry_mixture(r, w);
  if (!mix) return false;
  flow.propagate(r, *mix, [&](int i, std::span<const double> q) {
    double s = 0.0, d = 0.0;
    for (int m = 0; m < sigma; ++m) {
      s += q[static_cast<std::size_t>(m)];
      d += q[static_cast<std::size_t>(m)] * flow.death_rate(m, i, r);
    }
    num[static_cast<std::size_t>(i - r)] = d;
    den[static_cast<std::size_t>(i - r)] = s;
  });
  return true;
}

}  // namespace

ReserveSurface solve_dead_reserve(const ModelSpec& spec, const TimeGrid& grid) {
  Context ctx(spec, grid);
  ReserveSurface out = make_curve(Regime::Full, spec.space().lumped_label(ctx.ld), grid, ctx.breaks);
  solve_scalar(ctx, ctx.ld, out.curve, [&](int i, int stage) {
    return LinearCoef{ctx.rho(i, stage), -ctx.sojourn(ctx.ld, i, stage)};
  });
  return out;
}

std::vector<ReserveSurface> solve_extended_markov(const ModelSpec& spec, const TimeGrid& grid) {
  if (!spec.intensities.pre_retirement_markov())
    throw ModelError(ErrorCode::NonMarkovPreRetirement, "pre-retirement intensities depend on duration");
  if (!spec.intensities.retired_markov())
    throw ModelError(ErrorCode::NonMarkovExtended, "retired intensities depend on time since retirement");
  Context ctx(spec, grid);
  const auto& space = spec.space();
  const int n = space.extended_count();
  const int steps = grid.steps();

  std::vector<ReserveSurface> out;
  for (int x = 0; x < n; ++x) out.push_back(make_curve(Regime::Full, space.extended_label(x), grid, ctx.breaks));

  std::vector<double> y(static_cast<std::size_t>(n), 0.0);
  auto apply_atoms = [&](int i) {
    for (int x = 0; x < n; ++x) {
      const double a = ctx.atom(space.lump(x), i);
      out[static_cast<std::size_t>(x)].curve.set_jump(i, a);
      y[static_cast<std::size_t>(x)] += a;
    }
  };
  apply_atoms(steps);

  std::array<std::vector<double>, 3> rates;  // [stage][j*n + k]
  std::array<std::vector<double>, 3> payments;  // [stage][j*n + k], sojourn on the diagonal
  for (auto& r : rates) r.assign(static_cast<std::size_t>(n * n), 0.0);
  for (auto& p : payments) p.assign(static_cast<std::size_t>(n * n), 0.0);
  detail::Rk4Work work(static_cast<std::size_t>(n));

  for (int i = steps - 1; i >= 0; --i) {
    for (int stage = 0; stage < 3; ++stage) {
      const double t = ctx.time(i, stage);
      auto& r = rates[static_cast<std::size_t>(stage)];
      auto& p = payments[static_cast<std::size_t>(stage)];
      for (int j = 0; j < n; ++j) {
        const int lj = space.lump(j);
        p[static_cast<std::size_t>(j * n + j)] = ctx.sojourn(lj, i, stage);
        for (int k : spec.intensities.destinations(j)) {
          r[static_cast<std::size_t>(j * n + k)] = spec.intensities.rate(j, k, t, 0.0);
          const int lk = space.lump(k);
          p[static_cast<std::size_t>(j * n + k)] = lj == lk ? 0.0 : ctx.transition(lj, lk, i, stage);
        }
      }
    }
    detail::rk4_backward(y, ctx.h, work, [&](int stage, const std::vector<double>& w, std::vector<double>& dw) {
      const auto& r = rates[static_cast<std::size_t>(stage)];
      const auto& p = payments[static_cast<std::size_t>(stage)];
      const double rho = ctx.rho(i, stage);
      for (int j = 0; j < n; ++j) {
        const double wj = w[static_cast<std::size_t>(j)];
        double d = rho * wj - p[static_cast<std::size_t>(j * n + j)];
        for (int k : spec.intensities.destinations(j))
          d -= (p[static_cast<std::size_t>(j * n + k)] + w[static_cast<std::size_t>(k)] - wj) *
               r[static_cast<std::size_t>(j * n + k)];
        dw[static_cast<std::size_t>(j)] = d;
      }
    });
    for (int x = 0; x < n; ++x) out[static_cast<std::size_t>(x)].curve[i] = y[static_cast<std::size_t>(x)];
    apply_atoms(i);
  }
  return out;
}

FullInfoReserves solve_full_info(const ModelSpec& spec, const JointLaw& law, const TimeGrid& grid) {
  if (!spec.intensities.pre_retirement_markov())
    throw ModelError(ErrorCode::NonMarkovPreRetirement, "pre-retirement intensities depend on duration");
  require_same_grid(law, grid);
  Context ctx(spec, grid);
  const auto& space = spec.space();
  const int sigma = ctx.sigma;
  const int steps = grid.steps();

  FullInfoReserves out;
  out.dead = solve_dead_reserve(spec, grid);
  const GridCurve& dead = out.dead.curve;

  RetiredFlow flow(spec, grid);
  std::vector<double> num, den;
  for (int k = 0; k < sigma; ++k) {
    ReserveSurface surf = make_triangle(Regime::Full, ctx, k);
    TriangleTable surv(steps);
    for (int r = 0; r <= steps; ++r) {
      retired_row_by_k(flow, r, k, num, den);
      std::copy(den.begin(), den.end(), surv.row(r).begin());
      solve_retired_row(ctx, dead, r, num, den, surf);
    }
    out.retired.push_back(std::move(surf));
    out.cond_surv.push_back(std::move(surv));
  }

  std::vector<GridCurve> diag;
  for (int k = 0; k < sigma; ++k) {
    diag.push_back(out.retired[static_cast<std::size_t>(k)].diagonal());
    diag.back().set_breaks(ctx.breaks);
  }
  for (int j = 0; j < sigma; ++j) out.pre.push_back(make_curve(Regime::Full, space.lumped_label(j), grid, ctx.breaks));

  std::vector<double> y(static_cast<std::size_t>(sigma), 0.0);
  auto apply_atoms = [&](int i) {
    for (int j = 0; j < sigma; ++j) {
      out.pre[static_cast<std::size_t>(j)].curve.set_jump(i, ctx.atom(j, i));
      y[static_cast<std::size_t>(j)] += ctx.atom(j, i);
    }
  };
  apply_atoms(steps);
  detail::Rk4Work work(static_cast<std::size_t>(sigma));
  for (int i = steps - 1; i >= 0; --i) {
    detail::rk4_backward(y, ctx.h, work, [&](int stage, const std::vector<double>& w, std::vector<double>& dw) {
      const double t = ctx.time(i, stage);
      const double wd = Context::curve(dead, i, stage);
      for (int j = 0; j < sigma; ++j) {
        const double wj = w[static_cast<std::size_t>(j)];
        double d = ctx.rho(i, stage) * wj - ctx.sojourn(j, i, stage);
        for (int x : spec.intensities.destinations(j)) {
          const double mu = spec.intensities.rate(j, x, t, 0.0);
          const int lx = space.lump(x);
          double target;
          if (space.is_pre(x)) target = w[static_cast<std::size_t>(x)];
          else if (space.is_dead(x)) target = wd;
          else target = Context::curve(diag[static_cast<std::size_t>(j)], i, stage);
          d -= (ctx.transition(j, lx, i, stage) + target - wj) * mu;
        }
        dw[static_cast<std::size_t>(j)] = d;
      }
    });
    for (int j = 0; j < sigma; ++j) out.pre[static_cast<std::size_t>(j)].curve[i] = y[static_cast<std::size_t>(j)];
    apply_atoms(i);
  }
  return out;
}

ReserveSurface solve_G1(const ModelSpec& spec, const JointLaw& law, const TimeGrid& grid) {
  require_same_grid(law, grid);
  if (!law.has_conditionals())
    throw ModelError(ErrorCode::InvalidArgument, "G1 reserves need the conditional law on the triangle");
  Context ctx(spec, grid);
  const ReserveSurface dead = solve_dead_reserve(spec, grid);
  ReserveSurface out = make_triangle(Regime::G1, ctx, -1);
  for (int r = 0; r <= grid.steps(); ++r)
    solve_retired_row(ctx, dead.curve, r, law.cond_death.row(r), law.cond_surv.row(r), out);
  return out;
}

G2Reserve solve_G2(const ModelSpec& spec, const JointLaw& law, const ReserveSurface& g1, const TimeGrid& grid) {
  require_same_grid(law, grid);
  if (g1.regime != Regime::G1 || g1.layout != SurfaceLayout::CurveR)
    throw ModelError(ErrorCode::RegimeMismatch, "G2 needs the G1 surface");
  Context ctx(spec, grid);
  const int steps = grid.steps();
  const ReserveSurface dead = solve_dead_reserve(spec, grid);
  GridCurve diag = g1.diagonal();
  diag.set_breaks(ctx.breaks);

  // μ̄ behaves like 1/(t − t0) where retirement starts, so the equation is
  // integrated for U = P·W with P = P(η ≤ t < δ). Using P' = f_η − μ⁽²⁾P,
  //   U' = ρU − (b_p + (b_pd + W_d)μ⁽²⁾)P + W⁽¹⁾(t,t) f_η,
  // whose coefficients stay bounded. Both vanish before retirement is
  // possible, so the pair is integrated forward from 0 and W = U/P. Forward
  // matters: U and P are O((t − t0)²) just after t0, and a backward sweep
  // would divide its accumulated global error by them.
  std::vector<GridCurve> up(2, GridCurve(grid));  // U, P
  auto mu2 = [&](int i, int stage) {
    return stage == kEnd ? law.mu2_node(i + 1) : stage == kMid ? law.mu2_mid(i) : law.mu2_right(i);
  };
  std::vector<double> y{0.0, law.tail[0]};
  detail::Rk4Work work(2);
  for (int i = 0; i <= steps; ++i) {
    if (i > 0) {
      const int j = i - 1;
      detail::rk4_forward(y, ctx.h, work, [&](int fwd, const std::vector<double>& v, std::vector<double>& dv) {
        const int stage = fwd == 0 ? kStart : fwd == 1 ? kMid : kEnd;
        const double m2 = mu2(j, stage);
        const double f = Context::curve(law.f_eta, j, stage);
        const double cost =
            ctx.sojourn(ctx.lp, j, stage) +
            (ctx.transition(ctx.lp, ctx.ld, j, stage) + Context::curve(dead.curve, j, stage)) * m2;
        dv[0] = ctx.rho(j, stage) * v[0] - cost * v[1] + Context::curve(diag, j, stage) * f;
        dv[1] = f - m2 * v[1];
      });
    }
    // Atom: U(t) = U(t−) − P(t)·b_p(t).
    y[0] -= y[1] * ctx.atom(ctx.lp, i);
    up[0][i] = y[0];
    up[1][i] = y[1];
  }
  const GridCurve& u = up[0];
  const GridCurve& p = up[1];

  G2Reserve out{make_curve(Regime::G2, spec.space().lumped_label(ctx.lp), grid, ctx.breaks), GridCurve(grid)};
  GridCurve& w = out.reserve.curve;
  w[steps] = 0.0;
  w.set_jump(steps, ctx.atom(ctx.lp, steps));
  for (int i = steps - 1; i >= 0; --i) {
    if (law.tail[i] > kDenominatorFloor && p[i] > kDenominatorFloor) {
      w[i] = u[i] / p[i];
    } else if (law.tail[i + 1] > kDenominatorFloor) {
      // Retirement becomes possible at t_i: every survivor just retired.
      w[i] = diag[i];
    } else {
      // {Z_t = p} is a null event here; both intensities are 0 by convention.
      w[i] = detail::rk4_back(w.left(i + 1), ctx.h, {ctx.rho(i, kEnd), -ctx.sojourn(ctx.lp, i, kEnd)},
                              {ctx.rho(i, kMid), -ctx.sojourn(ctx.lp, i, kMid)},
                              {ctx.rho(i, kStart), -ctx.sojourn(ctx.lp, i, kStart)});
    }
    w.set_jump(i, ctx.atom(ctx.lp, i));
  }
  for (int i = 0; i < grid.size(); ++i) out.adjustment[i] = (diag[i] - w[i]) * law.mu_bar_node(i);
  return out;
}

G2Reserve solve_G2(const ModelSpec& spec, const JointLaw& law, const TimeGrid& grid) {
  return solve_G2(spec, law, solve_G1(spec, law, grid), grid);
}

PracticeReserve solve_practice_approx(const ModelSpec& spec, const JointLaw& law, const ReserveSurface& g2,
                                      const TimeGrid& grid) {
  require_same_grid(law, grid);
  if (g2.regime != Regime::G2) throw ModelError(ErrorCode::RegimeMismatch, "practice gap needs the G2 curve");
  Context ctx(spec, grid);
  const ReserveSurface dead = solve_dead_reserve(spec, grid);
  PracticeReserve out{make_curve(Regime::Practice, spec.space().lumped_label(ctx.lp), grid, ctx.breaks),
                      GridCurve(grid)};
  solve_scalar(ctx, ctx.lp, out.reserve.curve, [&](int i, int stage) {
    const double m2 = stage == kEnd ? law.mu2_node(i + 1) : stage == kMid ? law.mu2_mid(i) : law.mu2_right(i);
    return LinearCoef{ctx.rho(i, stage) + m2,
                      -ctx.sojourn(ctx.lp, i, stage) -
                          (ctx.transition(ctx.lp, ctx.ld, i, stage) + Context::curve(dead.curve, i, stage)) * m2};
  });
  for (int i = 0; i < grid.size(); ++i) out.gap[i] = out.reserve.curve[i] - g2.curve[i];
  return out;
}

namespace {

const ReserveSurface* find_surface(std::span<const ReserveSurface> surfaces, const std::string& state,
                                   SurfaceLayout layout, int k, Regime regime) {
  for (const auto& s : surfaces)
    if (s.state == state && s.layout == layout && s.k == k && (state == "d" || s.regime == regime)) return &s;
  return nullptr;
}

const ReserveSurface& need(const ReserveSurface* s, const std::string& what) {
  if (!s) throw ModelError(ErrorCode::InvalidArgument, "missing surface: " + what);
  return *s;
}

// Max over intervals of the trapezoid residual of a curve whose drift at
// node i (left limit if `left`) is F(i, left, W).
template <class Drift>
double curve_residual(const GridCurve& w, int first, double h, const Drift& drift,
                      const std::function<bool(int)>& include = {}) {
  double worst = 0.0;
  for (int i = first; i + 1 < w.size(); ++i) {
    if (include && !include(i)) continue;
    const double wl = w.left(i + 1);
    const double res = (wl - w[i]) / h - 0.5 * (drift(i, false, w[i]) + drift(i + 1, true, wl));
    worst = std::max(worst, std::abs(res));
  }
  return worst;
}

double row_residual(const ReserveSurface& s, int r, double h, const std::function<double(int, bool, double)>& drift) {
  double worst = 0.0;
  const int steps = s.grid.steps();
  for (int i = r; i < steps; ++i) {
    const double wl = s.left(i + 1, r);
    const double w0 = s.at(i, r);
    const double res = (wl - w0) / h - 0.5 * (drift(i, false, w0) + drift(i + 1, true, wl));
    worst = std::max(worst, std::abs(res));
  }
  return worst;
}

double node_value(const GridCurve& c, int i, bool left) { return left ? c.left(i) : c[i]; }

}  // namespace

ResidualReport thiele_residual(Regime regime, std::span<const ReserveSurface> surfaces, const JointLaw& law,
                               const ModelSpec& spec, const TimeGrid& grid) {
  require_same_grid(law, grid);
  for (const auto& s : surfaces) {
    const bool dead = s.state == "d";
    const bool g1_aux = regime == Regime::G2 && s.regime == Regime::G1;
    if (!dead && !g1_aux && s.regime != regime)
      throw ModelError(ErrorCode::RegimeMismatch, "surface tagged " + std::string(to_string(s.regime)) +
                                                      " passed to the " + std::string(to_string(regime)) + " residual");
  }
  Context ctx(spec, grid);
  const auto& space = spec.space();
  const int sigma = ctx.sigma;
  const double h = ctx.h;
  const std::string p = space.lumped_label(ctx.lp);
  const std::string d = space.lumped_label(ctx.ld);

  ResidualReport report;
  const ReserveSurface& dead = need(find_surface(surfaces, d, SurfaceLayout::Curve, -1, regime), "d");
  auto bd = [&](int i, bool left) { return ctx.pay_at(spec.payments.sojourn(ctx.ld), i, left); };
  auto bp = [&](int i, bool left) { return ctx.pay_at(spec.payments.sojourn(ctx.lp), i, left); };
  auto bpd = [&](int i, bool left) { return ctx.pay_at(spec.payments.transition(ctx.lp, ctx.ld), i, left); };
  auto rho = [&](int i) { return ctx.rho_node[static_cast<std::size_t>(i)]; };
  auto wd = [&](int i, bool left) { return node_value(dead.curve, i, left); };

  report.max_abs[d] = curve_residual(dead.curve, 0, h, [&](int i, bool left, double w) { return rho(i) * w - bd(i, left); });

  auto retired_drift = [&](const std::function<double(int)>& mu) {
    return [&, mu](int i, bool left, double w) {
      return rho(i) * w - bp(i, left) - (bpd(i, left) + wd(i, left) - w) * mu(i);
    };
  };

  std::vector<const ReserveSurface*> checked{&dead};
  switch (regime) {
    case Regime::Full: {
      RetiredFlow flow(spec, grid);
      std::vector<const ReserveSurface*> retired;
      std::vector<GridCurve> diag;
      double worst_p = 0.0;
      std::vector<double> num, den;
      for (int k = 0; k < sigma; ++k) {
        const auto& s = need(find_surface(surfaces, p, SurfaceLayout::CurveR, k, regime), "p|k");
        retired.push_back(&s);
        diag.push_back(s.diagonal());
        for (int r = 0; r <= grid.steps(); ++r) {
          retired_row_by_k(flow, r, k, num, den);
          auto mu = [&](int i) {
            return safe_ratio(num[static_cast<std::size_t>(i - r)], den[static_cast<std::size_t>(i - r)]);
          };
          worst_p = std::max(worst_p, row_residual(s, r, h, retired_drift(mu)));
        }
      }
      report.max_abs[p] = worst_p;
      std::vector<const ReserveSurface*> pre;
      for (int j = 0; j < sigma; ++j)
        pre.push_back(&need(find_surface(surfaces, space.lumped_label(j), SurfaceLayout::Curve, -1, regime),
                            space.lumped_label(j)));
      for (int j = 0; j < sigma; ++j) {
        report.max_abs[space.lumped_label(j)] =
            curve_residual(pre[static_cast<std::size_t>(j)]->curve, 0, h, [&](int i, bool left, double w) {
              const double t = grid.node(i);
              double f = rho(i) * w - ctx.pay_at(spec.payments.sojourn(j), i, left);
              for (int x : spec.intensities.destinations(j)) {
                const int lx = space.lump(x);
                double target;
                if (space.is_pre(x)) target = node_value(pre[static_cast<std::size_t>(x)]->curve, i, left);
                else if (space.is_dead(x)) target = wd(i, left);
                else target = node_value(diag[static_cast<std::size_t>(j)], i, left);
                f -= (ctx.pay_at(spec.payments.transition(j, lx), i, left) + target - w) *
                     spec.intensities.rate(j, x, t, 0.0);
              }
              return f;
            });
        checked.push_back(pre[static_cast<std::size_t>(j)]);
      }
      for (auto* s : retired) checked.push_back(s);
      break;
    }
    case Regime::G1: {
      const auto& s = need(find_surface(surfaces, p, SurfaceLayout::CurveR, -1, regime), "p (G1)");
      double worst = 0.0;
      for (int r = 0; r <= grid.steps(); ++r)
        worst = std::max(worst, row_residual(s, r, h, retired_drift([&, r](int i) { return law.mu1_node(i, r); })));
      report.max_abs[p] = worst;
      checked.push_back(&s);
      break;
    }
    case Regime::G2: {
      const auto& w2 = need(find_surface(surfaces, p, SurfaceLayout::Curve, -1, regime), "p (G2)");
      const auto& g1 = need(find_surface(surfaces, p, SurfaceLayout::CurveR, -1, Regime::G1), "p (G1)");
      GridCurve diag = g1.diagonal();
      // μ̄ is singular where the tail vanishes: only intervals on which
      // {Z_t = p} has positive probability at both ends are checked.
      report.max_abs[p] = curve_residual(
          w2.curve, 0, h,
          [&](int i, bool left, double w) {
            return rho(i) * w - bp(i, left) - (bpd(i, left) + wd(i, left) - w) * law.mu2_node(i) +
                   (node_value(diag, i, left) - w) * law.mu_bar_node(i);
          },
          [&](int i) { return law.tail[i] > kDenominatorFloor && law.tail[i + 1] > kDenominatorFloor; });
      checked.push_back(&w2);
      break;
    }
    case Regime::Practice: {
      const auto& w = need(find_surface(surfaces, p, SurfaceLayout::Curve, -1, regime), "p (practice)");
      report.max_abs[p] = curve_residual(w.curve, 0, h, [&](int i, bool left, double v) {
        const double mu = left ? law.mu2_node(i) : law.mu2_right(i);
        return rho(i) * v - bp(i, left) - (bpd(i, left) + wd(i, left) - v) * mu;
      });
      checked.push_back(&w);
      break;
    }
  }

  // Jump conditions.
  for (const auto* s : checked) {
    const int lumped = space.parse_lumped(s->state);
    for (int i = 0; i < grid.size(); ++i) {
      const double a = ctx.atom(lumped, i);
      const double jump = s->layout == SurfaceLayout::Curve ? s->curve.jump(i) : s->jump[static_cast<std::size_t>(i)];
      report.max_jump_error = std::max(report.max_jump_error, std::abs(jump - a));
    }
  }
  return report;
}

SumAtRisk sum_at_risk(const ModelSpec& spec, const JointLaw& law, const ReserveSurface& g1, const ReserveSurface& g2,
                      const ReserveSurface& dead) {
  const auto& grid = law.grid;
  const auto& space = spec.space();
  SumAtRisk out{GridCurve(grid), GridCurve(grid)};
  const auto& bpd = spec.payments.transition(space.lumped_retired(), space.lumped_dead());
  for (int i = 0; i < grid.size(); ++i) {
    out.forward_pd[i] = bpd(grid.node(i)) + dead.curve[i] - g2.curve[i];
    out.backward_adjustment[i] = (g1.at(i, i) - g2.curve[i]) * law.mu_bar_node(i);
  }
  return out;
}

GridCurve tower_average(const JointLaw& law, const ReserveSurface& g1) {
  const auto& grid = law.grid;
  GridCurve out(grid);
  for (int i = 1; i < grid.size(); ++i) {
    if (!(law.tail[i] > kDenominatorFloor)) continue;
    double s = 0.0;
    for (int r = 0; r <= i; ++r) {
      s += law.retirement_mass(r, i) * law.cond_surv.at(r, i) * g1.at(i, r);
    }
    out[i] = s / law.tail[i];
  }
  return out;
}

}  // namespace nmr
