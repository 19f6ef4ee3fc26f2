#pragma once

#include <string>
#include <string_view>

namespace nmr {

enum class StateKind { PreRetirement, RetiredObserved, RetiredLumped, Dead };

/// A state of either alphabet. Extended alphabet: {1..2σ, d}; lumped
/// alphabet: {1..σ, p, d}. `index` is 1-based for PreRetirement and
/// RetiredObserved and ignored otherwise.
struct StateId {
  StateKind kind = StateKind::PreRetirement;
  int index = 1;

  static StateId pre(int i) { return {StateKind::PreRetirement, i}; }
  static StateId retired(int i) { return {StateKind::RetiredObserved, i}; }
  static StateId lumped_retired() { return {StateKind::RetiredLumped, 0}; }
  static StateId dead() { return {StateKind::Dead, 0}; }

  friend bool operator==(const StateId& a, const StateId& b) {
    if (a.kind != b.kind) return false;
    if (a.kind == StateKind::PreRetirement || a.kind == StateKind::RetiredObserved)
      return a.index == b.index;
    return true;
  }
};

/// Index arithmetic for the two alphabets of a model with σ pre-retirement
/// states. Dense extended indices: [0, σ) pre-retirement, [σ, 2σ) retired
/// health states, 2σ dead. Dense lumped indices: [0, σ) pre-retirement,
/// σ retired (p), σ+1 dead.
class StateSpace {
 public:
  explicit StateSpace(int sigma);

  int sigma() const { return sigma_; }
  int extended_count() const { return 2 * sigma_ + 1; }
  int lumped_count() const { return sigma_ + 2; }

  int dead() const { return 2 * sigma_; }
  int lumped_retired() const { return sigma_; }
  int lumped_dead() const { return sigma_ + 1; }

  bool is_pre(int x) const { return x >= 0 && x < sigma_; }
  bool is_retired(int x) const { return x >= sigma_ && x < 2 * sigma_; }
  bool is_dead(int x) const { return x == 2 * sigma_; }

  /// Dense extended index -> dense lumped index.
  int lump(int x) const;

  int extended_index(const StateId& s) const;
  int lumped_index(const StateId& s) const;
  StateId extended_state(int x) const;
  StateId lumped_state(int j) const;

  /// Labels: "1".."2σ", "d" (extended) and "1".."σ", "p", "d" (lumped).
  int parse_extended(std::string_view label) const;
  int parse_lumped(std::string_view label) const;
  std::string extended_label(int x) const;
  std::string lumped_label(int j) const;

 private:
  int sigma_;
};

/// Maps an extended state to the observed (lumped) state: identity on
/// {1..σ, d}, every retired health state goes to p.
StateId lump_state(const StateId& x, int sigma);

}  // namespace nmr
