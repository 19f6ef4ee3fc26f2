#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nmr/distributions.hpp"
#include "nmr/grid.hpp"
#include "nmr/model.hpp"

namespace nmr {

/// Information regimes: full (health records and retirement details kept),
/// G1 (only the retirement time kept), G2 (everything discarded at
/// retirement) and the practitioners' shortcut of G2.
enum class Regime { Full, G1, G2, Practice };

std::string_view to_string(Regime regime);
/// Accepts "full", "G1"/"g1", "G2"/"g2", "practice".
Regime parse_regime(std::string_view name);

/// Curve: W(t). CurveR: W(t, r) on r ≤ t. CurveS and Surface4 need
/// duration-dependent pre-retirement rates and are never produced here: with
/// duration-free pre-retirement states W(t, s) is constant in s and
/// W(t, s, r, k) collapses to one CurveR per k.
enum class SurfaceLayout { Curve, CurveR, CurveS, Surface4 };

struct ReserveSurface {
  Regime regime = Regime::Full;
  std::string state;  // lumped label, or extended label for extended-chain curves
  int k = -1;         // pre-retirement state left on retirement (0-based), full information only
  SurfaceLayout layout = SurfaceLayout::Curve;
  TimeGrid grid;
  GridCurve curve;
  TriangleTable triangle;    // rows by retirement node r
  std::vector<double> jump;  // left − right at each node, shared by every row

  double at(int i) const { return curve[i]; }
  double at(int i, int r) const { return triangle.at(r, i); }
  /// Left limit in t; the row's own first node has none and returns the value.
  double left(int i, int r) const {
    return i > r ? triangle.at(r, i) + jump[static_cast<std::size_t>(i)] : triangle.at(r, i);
  }
  /// W(t, t) as a curve; its left limit at an atom is the limit of W(t−, r)
  /// for r ↑ t.
  GridCurve diagonal() const;
};

/// W_d: discounted remaining payments after death.
ReserveSurface solve_dead_reserve(const ModelSpec& spec, const TimeGrid& grid);

/// Classic Thiele system on the extended chain, one Curve per extended state
/// (index = dense extended index). Lumped payments apply to every member of
/// the block; moves inside the retired block carry no payment.
std::vector<ReserveSurface> solve_extended_markov(const ModelSpec& spec, const TimeGrid& grid);

struct FullInfoReserves {
  std::vector<ReserveSurface> pre;      // W⁽⁰⁾_j, j < σ
  std::vector<ReserveSurface> retired;  // W⁽⁰⁾_p(t, r, k) per k
  ReserveSurface dead;
  /// S_k(t | r): survival given retirement at r from pre-state k.
  std::vector<TriangleTable> cond_surv;
};

FullInfoReserves solve_full_info(const ModelSpec& spec, const JointLaw& law, const TimeGrid& grid);

/// W⁽¹⁾_p(t, r) from μ⁽¹⁾_pd; W_d is the dead reserve.
ReserveSurface solve_G1(const ModelSpec& spec, const JointLaw& law, const TimeGrid& grid);

struct G2Reserve {
  ReserveSurface reserve;
  /// (W⁽¹⁾_p(t,t) − W⁽²⁾_p(t))·μ̄⁽²⁾_•p(t).
  GridCurve adjustment;
};

G2Reserve solve_G2(const ModelSpec& spec, const JointLaw& law, const ReserveSurface& g1, const TimeGrid& grid);
G2Reserve solve_G2(const ModelSpec& spec, const JointLaw& law, const TimeGrid& grid);

struct PracticeReserve {
  ReserveSurface reserve;
  GridCurve gap;  // practice − G2
};

PracticeReserve solve_practice_approx(const ModelSpec& spec, const JointLaw& law, const ReserveSurface& g2,
                                      const TimeGrid& grid);

struct ResidualReport {
  /// max |residual| per lumped state label over interior intervals.
  std::map<std::string, double> max_abs;
  /// max |W(t_m−) − W(t_m) − b(t_m)| over discrete payments.
  double max_jump_error = 0.0;

  double overall() const;
};

/// Trapezoid residual (W(t_{i+1}−) − W(t_i))/h − ½(F(t_i) + F(t_{i+1}−)) of
/// the drift identity of the regime. Surfaces must all belong to the regime,
/// except the dead reserve (any tag) and, for G2, the G1 surface feeding the
/// backward sum at risk. Throws RegimeMismatch otherwise.
ResidualReport thiele_residual(Regime regime, std::span<const ReserveSurface> surfaces, const JointLaw& law,
                               const ModelSpec& spec, const TimeGrid& grid);

/// Sums at risk around the lumped retired state under G2.
struct SumAtRisk {
  GridCurve forward_pd;           // b_pd(t) + W_d(t) − W⁽²⁾_p(t)
  GridCurve backward_adjustment;  // (W⁽¹⁾_p(t,t) − W⁽²⁾_p(t))·μ̄⁽²⁾_•p(t)
};

SumAtRisk sum_at_risk(const ModelSpec& spec, const JointLaw& law, const ReserveSurface& g1,
                      const ReserveSurface& g2, const ReserveSurface& dead);

/// ∫ W⁽¹⁾_p(t,r) w(r|t) dr with w(r|t) = f_η(r)S(t|r)/P(η ≤ t < δ), per node
/// (0 where the tail vanishes).
GridCurve tower_average(const JointLaw& law, const ReserveSurface& g1);

}  // namespace nmr
