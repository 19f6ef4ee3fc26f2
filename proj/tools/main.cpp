// nmreserve: scenario runner. Exit 0 when every enabled check passes, 1 on
// invalid input, 2 when a check fails (outputs are still written).
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "nmr/errors.hpp"
#include "run_scenario.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Reserves under non-monotone information, with a Monte Carlo cross-check"};
  std::string config_path;
  std::string out_dir;
  std::string regimes;
  std::string checks;
  long long paths = 0;
  std::uint64_t seed = 0;
  double grid_step = 0.0;
  unsigned threads = 0;
  bool dump_paths = false;
  app.add_option("--config", config_path, "model JSON (may carry a \"scenario\" object)")->required();
  app.add_option("--out-dir", out_dir, "output directory");
  app.add_option("--paths", paths, "number of simulated paths");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--grid-step", grid_step, "grid step h");
  app.add_option("--regimes", regimes, "comma list of full,G1,G2,practice");
  app.add_option("--checks", checks, "comma list of residual,identity,tower,mc (or all/none)");
  app.add_option("--threads", threads, "simulation threads (0 = hardware)");
  app.add_flag("--dump-paths", dump_paths, "write paths.csv");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  nmr::cli::ScenarioConfig cfg;
  try {
    cfg = nmr::cli::load_config(config_path);
    if (app.count("--out-dir")) cfg.out_dir = out_dir;
    if (app.count("--paths")) {
      if (paths < 1) throw nmr::ModelError(nmr::ErrorCode::InvalidArgument, "--paths must be at least 1");
      cfg.mc.paths = static_cast<std::size_t>(paths);
    }
    if (app.count("--seed")) cfg.mc.seed = seed;
    if (app.count("--grid-step")) cfg.grid_step = grid_step;
    if (app.count("--regimes")) cfg.regimes = nmr::cli::parse_regime_list(regimes);
    if (app.count("--checks")) cfg.checks = nmr::cli::parse_check_list(checks);
    if (app.count("--threads")) cfg.mc.threads = threads;
    if (dump_paths) cfg.dump_paths = true;
    cfg.validate();
  } catch (const nmr::ModelError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  const auto result = nmr::cli::run_scenario(cfg);
  if (result.exit_code == 1) {
    std::cerr << "error: " << result.error << '\n';
    return 1;
  }
  std::cout << nmr::cli::emit_report(result);
  return result.exit_code;
}
