#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "nmr/grid.hpp"
#include "nmr/model.hpp"

namespace nmr {

/// Ratios below this denominator are reported as 0 (0/0 := 0).
inline constexpr double kDenominatorFloor = 1e-12;

inline double safe_ratio(double num, double den) { return den > kDenominatorFloor ? num / den : 0.0; }

/// Nodes where rates or payments may kink or jump: knots of time-axis
/// piecewise-linear rates, step-payment breakpoints and discrete payment
/// times that fall on the grid.
Breaks model_breaks(const ModelSpec& spec, const TimeGrid& grid);

/// p̃_j(u_i) for every extended state j and node i.
class OccupationTable {
 public:
  OccupationTable() = default;
  OccupationTable(const TimeGrid& grid, int sigma);

  const TimeGrid& grid() const { return grid_; }
  const StateSpace& space() const { return space_; }

  double extended(int i, int x) const { return p_[index(i, x)]; }
  double& extended(int i, int x) { return p_[index(i, x)]; }
  /// Lumped occupation; p sums the retired health states.
  double lumped(int i, int j) const;
  std::span<const double> row(int i) const {
    return {p_.data() + index(i, 0), static_cast<std::size_t>(space_.extended_count())};
  }
  /// Largest |Σ_j p̃_j(u_i) − 1| seen before renormalization.
  double max_drift() const { return max_drift_; }
  void set_max_drift(double d) { max_drift_ = d; }

 private:
  std::size_t index(int i, int x) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(space_.extended_count()) +
           static_cast<std::size_t>(x);
  }

  TimeGrid grid_;
  StateSpace space_{1};
  std::vector<double> p_;
  double max_drift_ = 0.0;
};

/// Forward Kolmogorov solve. Pre-retirement rates must be duration-free;
/// retired rates may depend on time since retirement, in which case the
/// retired occupations are assembled from the conditional post-retirement
/// flows. Throws NonMarkovPreRetirement otherwise.
OccupationTable solve_occupation(const ModelSpec& spec, const TimeGrid& grid);

/// Conditional post-retirement dynamics: given retirement at node r with
/// health-state mixture q(r), propagates q(t | r) over the retired block with
/// rates evaluated at (t, t − r). Duration-free blocks use tabulated rates.
class RetiredFlow {
 public:
  RetiredFlow(const ModelSpec& spec, const TimeGrid& grid);

  int sigma() const { return sigma_; }
  const TimeGrid& grid() const { return grid_; }

  /// Visits (i, q) for i = r..M, q the sub-probability vector over retired
  /// health states (indexed 0..σ−1) at node i.
  void propagate(int r, std::span<const double> q0,
                 const std::function<void(int, std::span<const double>)>& visit) const;

  /// μ̃_{m,d}(t_i, t_i − t_r) for retired health state m (0-based in block).
  double death_rate(int m, int i, int r) const { return rate(m, sigma_, 2 * i, r); }

  /// Mixture of retired health states entered at node r from the weights
  /// w_k (mass in pre-state k); falls back to the right limit where every
  /// retirement rate vanishes at r but not just after. Empty if no retirement
  /// is possible around r.
  std::optional<std::vector<double>> entry_mixture(int r, std::span<const double> w) const;

 private:
  // Rate from block state m to block state to (σ means d) at half-index ht
  // (time ht·h/2), for retirement node r.
  double rate(int m, int to, int ht, int r) const;

  const ModelSpec* spec_;
  TimeGrid grid_;
  int sigma_;
  bool markov_;
  // Duration-free case: rates per (m, to) pair, at half-indices 0..2M.
  std::vector<std::vector<double>> table_;
  // Duration-free case: RK4 step matrices [i][m][l].
  std::vector<double> step_;
};

struct JointLawOptions {
  /// Keep S(t|r) and f_{δ|η}(t|r) on the whole triangle. When false only the
  /// marginal curves are produced (O(M) memory).
  bool store_conditionals = true;
};

/// Law of (η, δ) on the grid.
struct JointLaw {
  TimeGrid grid;
  int sigma = 1;
  Breaks breaks;
  /// f(r, k, m): density of retiring at node r from pre-state k into retired
  /// health state m, row-major [r][k][m].
  std::vector<double> entry_density;
  GridCurve f_eta;
  /// S(t | r) = P(δ > t | η = r) and f_{δ|η}(t | r), rows by r.
  TriangleTable cond_surv;
  TriangleTable cond_death;
  /// P(η ≤ t < δ); equal to P(η < t ≤ δ) since both times have densities.
  GridCurve tail;
  /// ∫₀ᵗ f_{(η,δ)}(s, t) ds.
  GridCurve death_slice;
  /// ∫₀ᵗ f_η(r) q_m(t | r) dr per retired health state m, row-major [i][m].
  std::vector<double> retired_occupation;

  bool has_conditionals() const { return !cond_surv.empty(); }
  double entry(int r, int k, int m) const {
    return entry_density[(static_cast<std::size_t>(r) * sigma + k) * sigma + m];
  }
  /// Σ_m f(r, k, m).
  double entry_from(int r, int k) const;
  double joint_density(int r, int i) const { return f_eta[r] * cond_death.at(r, i); }
  /// Quadrature mass of retirement node r in ∫₀^{t_i} f_η(r)·g(r) dr for a
  /// factor g smooth in r: composite_weight·h·f_η(r), except on a piece of a
  /// single interval ending at i, which uses Simpson with f_η's interpolated
  /// midpoint and g taken linear.
  double retirement_mass(int r, int i) const;

  // Intensities at nodes and at interval midpoints (numerator and
  // denominator interpolated separately).
  double mu1_node(int i, int r) const;
  double mu1_mid(int i, int r) const;
  double mu2_node(int i) const { return safe_ratio(death_slice[i], tail[i]); }
  /// Right limit of μ⁽²⁾ at node i. Differs from the node value only where
  /// the tail vanishes at i, i.e. where retirement becomes possible: there the
  /// survivors all retired just now and the limit is μ⁽¹⁾(t_i, t_i).
  double mu2_right(int i) const;
  double mu2_mid(int i) const { return safe_ratio(death_slice.mid(i), tail.mid(i)); }
  double mu_bar_node(int i) const { return safe_ratio(f_eta[i], tail[i]); }
  double mu_bar_mid(int i) const { return safe_ratio(f_eta.mid(i), tail.mid(i)); }
};

/// Requires solve_occupation's preconditions.
JointLaw joint_law(const ModelSpec& spec, const TimeGrid& grid, const JointLawOptions& options = {});
JointLaw joint_law(const ModelSpec& spec, const OccupationTable& occ, const JointLawOptions& options = {});

/// μ⁽¹⁾_pd(t, r) = f_{δ|η}(t|r) / S(t|r). Off-grid arguments interpolate the
/// numerator and denominator linearly.
double mu1(const JointLaw& law, double t, double r);
/// μ⁽²⁾_pd(t) = ∫₀ᵗ f_{(η,δ)}(s,t) ds / P(η < t ≤ δ).
double mu2(const JointLaw& law, double t);
/// μ̄⁽²⁾_•p(t) = f_η(t) / P(η ≤ t < δ).
double mu_bar(const JointLaw& law, double t);

/// Window average targeted by a backward occurrence estimator over
/// (t − bw, t]: ∫ f_{η,k}(r) S_k(t|r) dr / (bw·P(η ≤ t < δ)), summed over k
/// when k < 0. t and t − bw must be nodes.
double smoothed_backward_intensity(const ModelSpec& spec, const JointLaw& law, int k, double t, double bandwidth);

/// Tabulated intensities on the grid.
struct IntensityTables {
  TriangleTable mu1;  // rows by r
  GridCurve mu2;
  GridCurve mu_bar;
  /// Lumped forward intensities among {1..σ, p, d} for pre-retirement
  /// origins, [i][j][k] with j < σ; entries to p sum the retired block.
  std::vector<double> lumped_forward;
  /// μ̄_jp(t) via f(t, j, ·)/P(η ≤ t < δ), [i][j].
  std::vector<double> backward_law;
  /// μ̄_jp(t) via p̃_j(t)·μ_jp(t)/P(Z_t = p), [i][j].
  std::vector<double> backward_occupation;
};

IntensityTables intensity_tables(const ModelSpec& spec, const JointLaw& law, const OccupationTable& occ);

struct IdentityCheck {
  double max_relative_discrepancy = 0.0;
  /// max_t |Σ_j μ̄_jp(t) − μ̄⁽²⁾_•p(t)| relative to μ̄⁽²⁾_•p.
  double max_sum_discrepancy = 0.0;
  int nodes_checked = 0;
};

/// Backward intensities into p from the occupation side versus the law side
/// on interior nodes with P(Z_t = p) > threshold.
IdentityCheck backward_identity_check(const ModelSpec& spec, const JointLaw& law, const OccupationTable& occ,
                                      double threshold = 0.01);

}  // namespace nmr
