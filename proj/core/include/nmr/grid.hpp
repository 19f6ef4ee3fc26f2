#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace nmr {

class PaymentSpec;

/// Uniform grid 0 = u_0 < … < u_M = n.
class TimeGrid {
 public:
  TimeGrid() = default;
  /// Throws InvalidArgument unless h > 0 and M·h = n to 1e-12.
  static TimeGrid uniform(double horizon, double step);

  double horizon() const { return horizon_; }
  int steps() const { return steps_; }
  int size() const { return steps_ + 1; }
  double step() const { return horizon_ / steps_; }
  double node(int i) const { return horizon_ * i / steps_; }
  double midpoint(int i) const { return horizon_ * (2.0 * i + 1.0) / (2.0 * steps_); }

  /// Index of the node equal to t within 1e-9·h, if any.
  std::optional<int> index_of(double t) const;
  /// Index of the node nearest to t, clamped to [0, M].
  int nearest(double t) const;

  /// Throws GridMisaligned if a discrete payment or payment-rate breakpoint
  /// inside (0, n) is not a node.
  void require_aligned(const PaymentSpec& payments) const;

 private:
  TimeGrid(double horizon, int steps) : horizon_(horizon), steps_(steps) {}

  double horizon_ = 1.0;
  int steps_ = 1;
};

/// Weights of the 4-point (or shorter) Lagrange rule evaluating a function at
/// the midpoint of interval [i, i+1] from nodes lo..lo+count-1.
struct HalfStencil {
  int lo = 0;
  int count = 0;
  std::array<double, 4> w{};
};

/// Stencil for interval i restricted to nodes [first, last].
HalfStencil half_stencil(int first, int last, int i);

/// Value at node i + 1/2 of samples y(first..last) via `get(j)`.
template <class Getter>
double interp_half(const Getter& get, int first, int last, int i) {
  HalfStencil s = half_stencil(first, last, i);
  double v = 0.0;
  for (int a = 0; a < s.count; ++a) v += s.w[static_cast<std::size_t>(a)] * get(s.lo + a);
  return v;
}

/// Sorted node indices where a tabulated function may have a kink or a jump.
/// Midpoint interpolation uses only nodes of the segment containing the
/// interval, so the cubic rule keeps its order on piecewise-smooth data.
class Breaks {
 public:
  Breaks() = default;
  explicit Breaks(std::vector<int> nodes);

  void add(int node);
  const std::vector<int>& nodes() const { return nodes_; }
  bool contains(int node) const { return std::binary_search(nodes_.begin(), nodes_.end(), node); }
  /// Segment [first, last] ⊂ [lo, hi] that contains interval [i, i+1].
  std::pair<int, int> segment(int lo, int hi, int i) const;

 private:
  std::vector<int> nodes_;
};

/// Midpoint value on interval i of nodal data restricted to [lo, hi]. The
/// segment's closing node is read through `left` (left limit) when it is a
/// break, through `value` otherwise.
template <class Value, class Left>
double mid_value(const Breaks& breaks, int lo, int hi, int i, const Value& value, const Left& left) {
  auto [first, last] = breaks.segment(lo, hi, i);
  const bool closing = breaks.contains(last);
  return interp_half([&](int j) { return (closing && j == last) ? left(j) : value(j); }, first, last, i);
}

/// Curve sampled on a grid, right-continuous, with optional jumps: the left
/// limit at node i is value[i] + jump[i]. Midpoint interpolation never
/// crosses a jump or a registered kink.
class GridCurve {
 public:
  GridCurve() = default;
  explicit GridCurve(const TimeGrid& grid, double fill = 0.0)
      : grid_(grid), value_(static_cast<std::size_t>(grid.size()), fill) {}

  const TimeGrid& grid() const { return grid_; }
  int size() const { return static_cast<int>(value_.size()); }

  double operator[](int i) const { return value_[static_cast<std::size_t>(i)]; }
  double& operator[](int i) { return value_[static_cast<std::size_t>(i)]; }
  double left(int i) const { return value_[static_cast<std::size_t>(i)] + jump(i); }
  double jump(int i) const { return jump_.empty() ? 0.0 : jump_[static_cast<std::size_t>(i)]; }
  void set_jump(int i, double left_minus_right);
  void set_breaks(const Breaks& breaks);
  const Breaks& breaks() const { return breaks_; }
  /// Value at grid.midpoint(i).
  double mid(int i) const;

  std::span<const double> values() const { return value_; }

 private:
  TimeGrid grid_;
  std::vector<double> value_;
  std::vector<double> jump_;
  Breaks breaks_;
};

/// Values g(t_i, r_q) on the triangle q ≤ i, stored row by row in q.
class TriangleTable {
 public:
  TriangleTable() = default;
  explicit TriangleTable(int steps, double fill = 0.0);

  int steps() const { return steps_; }
  bool empty() const { return data_.empty(); }
  std::size_t offset(int r) const {
    auto rr = static_cast<std::size_t>(r);
    return rr * static_cast<std::size_t>(steps_ + 1) - (rr * (rr - 1)) / 2;
  }
  double& at(int r, int i) { return data_[offset(r) + static_cast<std::size_t>(i - r)]; }
  double at(int r, int i) const { return data_[offset(r) + static_cast<std::size_t>(i - r)]; }
  /// Row for retirement node r: entries for t-nodes r..M.
  std::span<double> row(int r) {
    return {data_.data() + offset(r), static_cast<std::size_t>(steps_ - r + 1)};
  }
  std::span<const double> row(int r) const {
    return {data_.data() + offset(r), static_cast<std::size_t>(steps_ - r + 1)};
  }

 private:
  int steps_ = 0;
  std::vector<double> data_;
};

/// Weight, in units of h, of node j in a fourth-order rule for ∫ over nodes
/// [lo, hi]: the range is cut at breaks and each piece gets Gregory's end
/// corrections (Simpson, 3/8 or Boole when it has fewer than 5 intervals, the
/// trapezoid for a single one).
double composite_weight(const Breaks& breaks, int lo, int hi, int j);

/// Composite trapezoid over nodes [first, last] of `get(j)` with spacing h.
template <class Getter>
double trapezoid(const Getter& get, int first, int last, double h) {
  if (last <= first) return 0.0;
  double s = 0.5 * (get(first) + get(last));
  for (int j = first + 1; j < last; ++j) s += get(j);
  return s * h;
}

}  // namespace nmr
