#include "nmr/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nmr/errors.hpp"
#include "nmr/model.hpp"

namespace nmr {

TimeGrid TimeGrid::uniform(double horizon, double step) {
  if (!(step > 0.0) || !std::isfinite(step))
    throw ModelError(ErrorCode::InvalidArgument, "grid step must be positive");
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw ModelError(ErrorCode::InvalidArgument, "horizon must be positive");
  double ratio = horizon / step;
  long steps = std::lround(ratio);
  if (steps < 1 || std::abs(static_cast<double>(steps) * step - horizon) > 1e-12 * std::max(1.0, horizon))
    throw ModelError(ErrorCode::InvalidArgument,
                     "grid step " + std::to_string(step) + " does not divide horizon " + std::to_string(horizon));
  return TimeGrid(horizon, static_cast<int>(steps));
}

std::optional<int> TimeGrid::index_of(double t) const {
  int i = nearest(t);
  if (std::abs(node(i) - t) <= 1e-9 * step()) return i;
  return std::nullopt;
}

int TimeGrid::nearest(double t) const {
  long i = std::lround(t / step());
  return static_cast<int>(std::clamp<long>(i, 0, steps_));
}

void TimeGrid::require_aligned(const PaymentSpec& payments) const {
  for (const auto& d : payments.discrete())
    if (!index_of(d.time))
      throw ModelError(ErrorCode::GridMisaligned,
                       "discrete payment at t=" + std::to_string(d.time) + " is not a grid node");
  for (double b : payments.breakpoints())
    if (b > 0.0 && b < horizon_ && !index_of(b))
      throw ModelError(ErrorCode::GridMisaligned,
                       "payment breakpoint at t=" + std::to_string(b) + " is not a grid node");
}

HalfStencil half_stencil(int first, int last, int i) {
  HalfStencil s;
  s.count = std::min(4, last - first + 1);
  s.lo = std::clamp(i - 1, first, last - s.count + 1);
  const double x = i + 0.5;
  for (int a = 0; a < s.count; ++a) {
    double w = 1.0;
    for (int b = 0; b < s.count; ++b)
      if (b != a) w *= (x - (s.lo + b)) / static_cast<double>(a - b);
    s.w[static_cast<std::size_t>(a)] = w;
  }
  return s;
}

Breaks::Breaks(std::vector<int> nodes) : nodes_(std::move(nodes)) {
  std::sort(nodes_.begin(), nodes_.end());
  nodes_.erase(std::unique(nodes_.begin(), nodes_.end()), nodes_.end());
}

void Breaks::add(int node) {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), node);
  if (it == nodes_.end() || *it != node) nodes_.insert(it, node);
}

std::pair<int, int> Breaks::segment(int lo, int hi, int i) const {
  int first = lo;
  int last = hi;
  auto it = std::upper_bound(nodes_.begin(), nodes_.end(), i);
  if (it != nodes_.begin()) first = std::max(lo, *(it - 1));
  if (it != nodes_.end()) last = std::min(hi, *it);
  return {first, last};
}

namespace {

// Weight of node offset j in a rule over n intervals.
double piece_weight(int n, int j) {
  switch (n) {
    case 0: return 0.0;
    case 1: return 0.5;
    case 2: return j == 1 ? 4.0 / 3.0 : 1.0 / 3.0;
    case 3: return (j == 0 || j == 3) ? 3.0 / 8.0 : 9.0 / 8.0;
    case 4: {
      static constexpr std::array<double, 5> boole{14.0 / 45, 64.0 / 45, 24.0 / 45, 64.0 / 45, 14.0 / 45};
      return boole[static_cast<std::size_t>(j)];
    }
    default: {
      static constexpr std::array<double, 3> end{3.0 / 8, 7.0 / 6, 23.0 / 24};
      const int e = std::min(j, n - j);
      return e < 3 ? end[static_cast<std::size_t>(e)] : 1.0;
    }
  }
}

}  // namespace

double composite_weight(const Breaks& breaks, int lo, int hi, int j) {
  if (j < lo || j > hi || hi <= lo) return 0.0;
  const auto& b = breaks.nodes();
  double w = 0.0;
  // Piece starting at or containing j.
  if (j < hi) {
    auto it = std::upper_bound(b.begin(), b.end(), j);
    const int a = it == b.begin() ? lo : std::max(lo, *(it - 1));
    const int e = it == b.end() ? hi : std::min(hi, *it);
    w += piece_weight(e - a, j - a);
  }
  // Piece ending at j.
  if (j > lo && (j == hi || breaks.contains(j))) {
    auto it = std::lower_bound(b.begin(), b.end(), j);
    const int a = it == b.begin() ? lo : std::max(lo, *(it - 1));
    w += piece_weight(j - a, j - a);
  }
  return w;
}

void GridCurve::set_jump(int i, double left_minus_right) {
  if (left_minus_right == 0.0) return;
  if (jump_.empty()) jump_.assign(value_.size(), 0.0);
  jump_[static_cast<std::size_t>(i)] = left_minus_right;
  breaks_.add(i);
}

void GridCurve::set_breaks(const Breaks& breaks) {
  for (int b : breaks.nodes()) breaks_.add(b);
}

double GridCurve::mid(int i) const {
  return mid_value(
      breaks_, 0, size() - 1, i, [&](int j) { return value_[static_cast<std::size_t>(j)]; },
      [&](int j) { return left(j); });
}

TriangleTable::TriangleTable(int steps, double fill) : steps_(steps) {
  auto m = static_cast<std::size_t>(steps) + 1;
  data_.assign(m * (m + 1) / 2, fill);
}

}  // namespace nmr
