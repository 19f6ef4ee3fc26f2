#include "nmr/state.hpp"

#include <charconv>

#include "nmr/errors.hpp"

namespace nmr {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::StructuralViolation: return "StructuralViolation";
    case ErrorCode::UnboundedIntensity: return "UnboundedIntensity";
    case ErrorCode::BadDiscount: return "BadDiscount";
    case ErrorCode::BadPayment: return "BadPayment";
    case ErrorCode::OutOfHorizon: return "OutOfHorizon";
    case ErrorCode::GridMisaligned: return "GridMisaligned";
    case ErrorCode::NonMarkovPreRetirement: return "NonMarkovPreRetirement";
    case ErrorCode::NonMarkovExtended: return "NonMarkovExtended";
    case ErrorCode::DiagonalInterpolation: return "DiagonalInterpolation";
    case ErrorCode::RegimeMismatch: return "RegimeMismatch";
    case ErrorCode::BadBound: return "BadBound";
    case ErrorCode::EmptyConditioning: return "EmptyConditioning";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

StateSpace::StateSpace(int sigma) : sigma_(sigma) {
  if (sigma < 1) throw ModelError(ErrorCode::InvalidArgument, "sigma must be >= 1");
}

int StateSpace::lump(int x) const {
  if (is_pre(x)) return x;
  if (is_retired(x)) return lumped_retired();
  if (is_dead(x)) return lumped_dead();
  throw ModelError(ErrorCode::InvalidArgument, "extended index out of range");
}

int StateSpace::extended_index(const StateId& s) const {
  switch (s.kind) {
    case StateKind::PreRetirement:
      if (s.index < 1 || s.index > sigma_) break;
      return s.index - 1;
    case StateKind::RetiredObserved:
      if (s.index <= sigma_ || s.index > 2 * sigma_) break;
      return s.index - 1;
    case StateKind::Dead:
      return dead();
    case StateKind::RetiredLumped:
      break;
  }
  throw ModelError(ErrorCode::InvalidArgument, "state is not in the extended alphabet");
}

int StateSpace::lumped_index(const StateId& s) const {
  switch (s.kind) {
    case StateKind::PreRetirement:
      if (s.index < 1 || s.index > sigma_) break;
      return s.index - 1;
    case StateKind::RetiredLumped:
      return lumped_retired();
    case StateKind::Dead:
      return lumped_dead();
    case StateKind::RetiredObserved:
      break;
  }
  throw ModelError(ErrorCode::InvalidArgument, "state is not in the lumped alphabet");
}

StateId StateSpace::extended_state(int x) const {
  if (is_pre(x)) return StateId::pre(x + 1);
  if (is_retired(x)) return StateId::retired(x + 1);
  if (is_dead(x)) return StateId::dead();
  throw ModelError(ErrorCode::InvalidArgument, "extended index out of range");
}

StateId StateSpace::lumped_state(int j) const {
  if (j >= 0 && j < sigma_) return StateId::pre(j + 1);
  if (j == lumped_retired()) return StateId::lumped_retired();
  if (j == lumped_dead()) return StateId::dead();
  throw ModelError(ErrorCode::InvalidArgument, "lumped index out of range");
}

namespace {

int parse_positive(std::string_view label) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(label.data(), label.data() + label.size(), value);
  if (ec != std::errc{} || ptr != label.data() + label.size())
    throw ModelError(ErrorCode::ParseError, "bad state label '" + std::string(label) + "'");
  return value;
}

}  // namespace

int StateSpace::parse_extended(std::string_view label) const {
  if (label == "d") return dead();
  int i = parse_positive(label);
  if (i < 1 || i > 2 * sigma_)
    throw ModelError(ErrorCode::ParseError, "extended state out of range: " + std::string(label));
  return i - 1;
}

int StateSpace::parse_lumped(std::string_view label) const {
  if (label == "d") return lumped_dead();
  if (label == "p") return lumped_retired();
  int i = parse_positive(label);
  if (i < 1 || i > sigma_)
    throw ModelError(ErrorCode::ParseError, "lumped state out of range: " + std::string(label));
  return i - 1;
}

std::string StateSpace::extended_label(int x) const {
  if (is_dead(x)) return "d";
  return std::to_string(x + 1);
}

std::string StateSpace::lumped_label(int j) const {
  if (j == lumped_dead()) return "d";
  if (j == lumped_retired()) return "p";
  return std::to_string(j + 1);
}

StateId lump_state(const StateId& x, int sigma) {
  StateSpace space(sigma);
  return space.lumped_state(space.lump(space.extended_index(x)));
}

}  // namespace nmr
