#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nmr/thiele.hpp"

namespace nmr::cli {

struct McSettings {
  std::size_t paths = 20000;
  std::uint64_t seed = 1;
  double eta_bin_width = 0.1;
  double duration_bin_width = 0.1;
  double backward_bandwidth = 0.25;
  double forward_bandwidth = 0.25;
  /// Spacing of the MC comparison times; 0 means n/40.
  double compare_step = 0.0;
  std::size_t min_effective = 200;
  unsigned threads = 0;
};

struct CheckToggles {
  bool residual = true;
  bool identity = true;
  bool tower = true;
  bool mc = false;
};

struct ScenarioConfig {
  std::string model_path;
  std::string out_dir = "out";
  double grid_step = 0.01;
  std::vector<Regime> regimes{Regime::Full, Regime::G1, Regime::G2, Regime::Practice};
  McSettings mc;
  CheckToggles checks;
  bool dump_paths = false;

  /// Throws ModelError(InvalidArgument) unless h > 0, paths ≥ 1, regimes
  /// nonempty and bandwidths positive.
  void validate() const;
};

/// Reads the "scenario" object of a model file into a config (defaults for
/// anything absent). Throws ModelError(ParseError) on malformed input.
ScenarioConfig load_config(const std::string& model_path);

/// Applies a comma list such as "full,G2" or "residual,mc".
std::vector<Regime> parse_regime_list(const std::string& list);
CheckToggles parse_check_list(const std::string& list);

/// CSV table kept as formatted strings so that reports can echo cells.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string csv() const;
};

struct CheckResult {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = true;
};

struct RunResult {
  int exit_code = 0;
  std::string error;  // set when exit_code == 1
  std::map<std::string, Table> tables;  // file stem -> contents
  std::vector<CheckResult> checks;
  std::vector<double> report_times;
};

/// Full pipeline: analytic regimes, enabled checks, MC comparisons. Writes
/// every table as <out_dir>/<stem>.csv plus manifest.json and report.txt.
/// Exit 0 if every enabled check passes, 2 otherwise, 1 on invalid input.
RunResult run_scenario(const ScenarioConfig& config);

/// Headline table; every number is copied from the CSV strings.
std::string emit_report(const RunResult& result);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);

}  // namespace nmr::cli
