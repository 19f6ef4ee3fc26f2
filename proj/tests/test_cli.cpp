#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nmr/errors.hpp"
#include "run_scenario.hpp"

using namespace nmr;
using namespace nmr::cli;
namespace fs = std::filesystem;

namespace {

std::string scenario(const std::string& name) { return std::string(NMR_SCENARIO_DIR) + "/" + name + ".json"; }

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("nmr_cli_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

// Rows of the first report table, as numbers.
std::vector<std::vector<double>> report_rows(const std::string& report) {
  std::istringstream in(report);
  std::string line;
  std::getline(in, line);  // title
  std::getline(in, line);  // header
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line) && !line.empty()) {
    std::vector<double> row;
    for (const auto& w : split_ws(line)) row.push_back(std::stod(w));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST_CASE("zero-payment scenario: all-zero reserve tables, exit 0, zero report") {
  auto cfg = load_config(scenario("zero_payments"));
  cfg.out_dir = scratch("zero").string();
  cfg.checks.mc = false;
  const auto res = run_scenario(cfg);
  CHECK(res.exit_code == 0);
  for (const auto& [stem, table] : res.tables) {
    if (stem.rfind("reserve_", 0) != 0) continue;
    for (const auto& row : table.rows)
      for (std::size_t c = 1; c < row.size(); ++c)
        if (table.header[c] != "r" && table.header[c] != "k") CHECK(row[c] == "0");
  }
  for (const auto& row : report_rows(emit_report(res)))
    for (std::size_t c = 1; c < row.size(); ++c) CHECK(row[c] == 0.0);
  CHECK(fs::exists(fs::path(cfg.out_dir) / "manifest.json"));
  CHECK(fs::exists(fs::path(cfg.out_dir) / "reserve_G2.csv"));
}

TEST_CASE("invalid configurations exit 1") {
  auto cfg = load_config(scenario("collapse"));
  cfg.out_dir = scratch("bad").string();
  cfg.grid_step = 0.0;
  auto res = run_scenario(cfg);
  CHECK(res.exit_code == 1);
  CHECK(res.error.find("grid step") != std::string::npos);
  cfg.grid_step = -0.5;
  CHECK(run_scenario(cfg).exit_code == 1);
  cfg.grid_step = 0.3;  // atom at 2.5 is off-grid
  CHECK(run_scenario(cfg).exit_code == 1);
  cfg.grid_step = 0.05;
  cfg.model_path = "/nonexistent/model.json";
  CHECK(run_scenario(cfg).exit_code == 1);
  CHECK_THROWS_AS(parse_regime_list("full,G3"), ModelError);
  CHECK_THROWS_AS(parse_check_list("residual,bogus"), ModelError);
}

TEST_CASE("Markov collapse: report columns agree") {
  auto cfg = load_config(scenario("collapse"));
  cfg.out_dir = scratch("collapse").string();
  cfg.grid_step = 0.01;
  cfg.checks.mc = false;
  const auto res = run_scenario(cfg);
  CHECK(res.exit_code == 0);
  const auto rows = report_rows(emit_report(res));
  REQUIRE(rows.size() == 4);
  for (const auto& row : rows)
    for (std::size_t c = 2; c < row.size(); ++c) CHECK(std::abs(row[c] - row[1]) < 1e-6);
}

TEST_CASE("duration-dependent scenario: practice differs from G2; report echoes CSV cells") {
  auto cfg = load_config(scenario("disability_duration"));
  cfg.out_dir = scratch("duration").string();
  cfg.checks.mc = false;
  const auto res = run_scenario(cfg);
  CHECK(res.exit_code == 0);
  const std::string report = emit_report(res);
  const auto rows = report_rows(report);
  REQUIRE(rows.size() == 4);
  const std::size_t g2 = rows[0].size() - 2, practice = rows[0].size() - 1;
  CHECK(std::abs(rows[0][practice] - rows[0][g2]) > 0.1);

  // Every number in the retired table is a verbatim cell of a written CSV.
  std::string all_csv;
  for (const auto& entry : fs::directory_iterator(cfg.out_dir))
    if (entry.path().extension() == ".csv") {
      std::ifstream in(entry.path());
      all_csv += std::string(std::istreambuf_iterator<char>(in), {});
    }
  std::istringstream in(report);
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  while (std::getline(in, line) && !line.empty())
    for (const auto& w : split_ws(line)) CHECK(all_csv.find(w) != std::string::npos);
}

TEST_CASE("disability-retirement scenario with every check enabled exits 0; reruns are byte-identical") {
  auto cfg = load_config(scenario("disability_markov"));
  cfg.out_dir = scratch("disability_a").string();
  cfg.mc.paths = 50000;
  REQUIRE(cfg.checks.mc);
  const auto a = run_scenario(cfg);
  CHECK(a.exit_code == 0);
  std::size_t compared = 0;
  for (const auto& c : a.checks)
    if (c.name == "mc_within_3se_share") {
      CHECK(c.value >= 0.99);
      ++compared;
    }
  CHECK(compared == 1);

  const auto first_dir = cfg.out_dir;
  cfg.out_dir = scratch("disability_b").string();
  cfg.mc.threads = 2;
  CHECK(run_scenario(cfg).exit_code == 0);
  for (const auto& entry : fs::directory_iterator(first_dir)) {
    std::ifstream x(entry.path()), y(fs::path(cfg.out_dir) / entry.path().filename());
    const std::string sx(std::istreambuf_iterator<char>(x), {}), sy(std::istreambuf_iterator<char>(y), {});
    CHECK_MESSAGE(sx == sy, entry.path().filename().string());
  }
}
