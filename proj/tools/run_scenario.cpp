#include "run_scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "nmr/errors.hpp"
#include "nmr/mc.hpp"
#include "nmr/model_io.hpp"

#ifndef NMR_VERSION
#define NMR_VERSION "0.0.0"
#endif

namespace nmr::cli {

using nlohmann::json;

namespace {

constexpr double kMaxTriangleBytes = 2.5e9;

std::string fmt(double v) {
  if (v == 0.0) v = 0.0;  // no "-0"
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& list) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : list) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError(ErrorCode::ParseError, "cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string Table::csv() const {
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
  out += '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + row[i];
    out += '\n';
  }
  return out;
}

void ScenarioConfig::validate() const {
  if (!(grid_step > 0.0)) throw ModelError(ErrorCode::InvalidArgument, "grid step must be positive");
  if (mc.paths < 1) throw ModelError(ErrorCode::InvalidArgument, "at least one path is required");
  if (regimes.empty()) throw ModelError(ErrorCode::InvalidArgument, "no regime selected");
  if (!(mc.eta_bin_width > 0.0) || !(mc.duration_bin_width > 0.0))
    throw ModelError(ErrorCode::InvalidArgument, "bin widths must be positive");
  if (!(mc.backward_bandwidth > 0.0) || !(mc.forward_bandwidth > 0.0))
    throw ModelError(ErrorCode::InvalidArgument, "bandwidths must be positive");
  if (mc.compare_step < 0.0) throw ModelError(ErrorCode::InvalidArgument, "compare step must be nonnegative");
}

std::vector<Regime> parse_regime_list(const std::string& list) {
  std::vector<Regime> out;
  for (const auto& name : split(list)) {
    Regime r = parse_regime(name);
    if (std::find(out.begin(), out.end(), r) == out.end()) out.push_back(r);
  }
  return out;
}

CheckToggles parse_check_list(const std::string& list) {
  CheckToggles c{false, false, false, false};
  for (const auto& name : split(list)) {
    if (name == "residual") c.residual = true;
    else if (name == "identity") c.identity = true;
    else if (name == "tower") c.tower = true;
    else if (name == "mc") c.mc = true;
    else if (name == "all") c = {true, true, true, true};
    else if (name != "none") throw ModelError(ErrorCode::ParseError, "unknown check '" + name + "'");
  }
  return c;
}

ScenarioConfig load_config(const std::string& model_path) {
  ScenarioConfig cfg;
  cfg.model_path = model_path;
  json doc;
  try {
    doc = json::parse(read_file(model_path));
  } catch (const json::exception& e) {
    throw ModelError(ErrorCode::ParseError, std::string("config: ") + e.what());
  }
  if (!doc.contains("scenario")) return cfg;
  try {
    const json& s = doc.at("scenario");
    if (s.contains("grid_step")) cfg.grid_step = s.at("grid_step").get<double>();
    if (s.contains("regimes")) {
      cfg.regimes.clear();
      for (const auto& r : s.at("regimes")) {
        Regime g = parse_regime(r.get<std::string>());
        if (std::find(cfg.regimes.begin(), cfg.regimes.end(), g) == cfg.regimes.end()) cfg.regimes.push_back(g);
      }
    }
    if (s.contains("checks")) {
      std::string joined;
      for (const auto& c : s.at("checks")) joined += c.get<std::string>() + ",";
      cfg.checks = parse_check_list(joined.empty() ? "none" : joined);
    }
    if (s.contains("dump_paths")) cfg.dump_paths = s.at("dump_paths").get<bool>();
    if (s.contains("mc")) {
      const json& m = s.at("mc");
      auto& mc = cfg.mc;
      if (m.contains("paths")) {
        const auto p = m.at("paths").get<long long>();
        if (p < 1) throw ModelError(ErrorCode::InvalidArgument, "mc.paths must be at least 1");
        mc.paths = static_cast<std::size_t>(p);
      }
      if (m.contains("seed")) mc.seed = m.at("seed").get<std::uint64_t>();
      if (m.contains("eta_bin_width")) mc.eta_bin_width = m.at("eta_bin_width").get<double>();
      if (m.contains("duration_bin_width")) mc.duration_bin_width = m.at("duration_bin_width").get<double>();
      if (m.contains("backward_bandwidth")) mc.backward_bandwidth = m.at("backward_bandwidth").get<double>();
      if (m.contains("forward_bandwidth")) mc.forward_bandwidth = m.at("forward_bandwidth").get<double>();
      if (m.contains("compare_step")) mc.compare_step = m.at("compare_step").get<double>();
      if (m.contains("min_effective")) mc.min_effective = m.at("min_effective").get<std::size_t>();
      if (m.contains("threads")) mc.threads = m.at("threads").get<unsigned>();
    }
  } catch (const json::exception& e) {
    throw ModelError(ErrorCode::ParseError, std::string("scenario: ") + e.what());
  }
  return cfg;
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json config_json(const ScenarioConfig& c, const std::string& model_text) {
  json regimes = json::array();
  for (Regime r : c.regimes) regimes.push_back(std::string(to_string(r)));
  return json{{"model_fnv1a", hex64(fnv1a(model_text))},
              {"model_bytes", model_text.size()},
              {"grid_step", c.grid_step},
              {"regimes", regimes},
              {"checks",
               {{"residual", c.checks.residual}, {"identity", c.checks.identity}, {"tower", c.checks.tower},
                {"mc", c.checks.mc}}},
              {"mc",
               {{"paths", c.mc.paths},
                {"seed", c.mc.seed},
                {"eta_bin_width", c.mc.eta_bin_width},
                {"duration_bin_width", c.mc.duration_bin_width},
                {"backward_bandwidth", c.mc.backward_bandwidth},
                {"forward_bandwidth", c.mc.forward_bandwidth},
                {"compare_step", c.mc.compare_step},
                {"min_effective", c.mc.min_effective}}},
              {"dump_paths", c.dump_paths}};
}

bool has(const ScenarioConfig& c, Regime r) { return std::find(c.regimes.begin(), c.regimes.end(), r) != c.regimes.end(); }

double max_abs(const GridCurve& c) {
  double m = 0.0;
  for (double v : c.values()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs(const ReserveSurface& s) {
  if (s.layout == SurfaceLayout::Curve) return max_abs(s.curve);
  double m = 0.0;
  for (int r = 0; r <= s.grid.steps(); ++r)
    for (double v : s.triangle.row(r)) m = std::max(m, std::abs(v));
  return m;
}

// Retirement-time slices written for r-indexed surfaces: n/40 apart.
std::vector<int> slice_nodes(const TimeGrid& grid) {
  std::vector<int> out;
  for (int q = 0; q <= 40; ++q) {
    int i = grid.nearest(grid.horizon() * q / 40.0);
    if (out.empty() || out.back() != i) out.push_back(i);
  }
  return out;
}

struct Analytic {
  TimeGrid grid;
  OccupationTable occ;
  JointLaw law;
  ReserveSurface dead;
  std::optional<FullInfoReserves> full;
  std::optional<ReserveSurface> g1;
  std::optional<G2Reserve> g2;
  std::optional<PracticeReserve> practice;
};

// Retirement bin with the most conditional mass at node i: nodes of
// [r − w/2, r + w/2) around the argmax of f_η(r)S(t|r) over r ≤ t − w/2.
std::optional<std::pair<double, double>> best_eta_bin(const Analytic& a, int i, double width) {
  const auto& g = a.grid;
  const double t = g.node(i);
  double best = 0.0;
  int arg = -1;
  for (int r = 0; r <= i; ++r) {
    if (g.node(r) + 0.5 * width > t + 1e-12 || g.node(r) - 0.5 * width < -1e-12) continue;
    const double m = a.law.f_eta[r] * a.law.cond_surv.at(r, i);
    if (m > best) {
      best = m;
      arg = r;
    }
  }
  if (arg < 0) return std::nullopt;
  return std::make_pair(g.node(arg) - 0.5 * width, g.node(arg) + 0.5 * width);
}

// Weighted average of value(r) over nodes in [lo, hi) with weights w(r).
template <class V, class W>
double bin_average(const TimeGrid& g, double lo, double hi, const V& value, const W& weight) {
  double num = 0.0, den = 0.0;
  for (int r = 0; r <= g.steps(); ++r) {
    const double x = g.node(r);
    if (x < lo - 1e-12 || x >= hi - 1e-12) continue;
    num += weight(r) * value(r);
    den += weight(r);
  }
  return den > 0.0 ? num / den : 0.0;
}

struct Comparison {
  Table table{{"t", "analytic", "mc_mean", "mc_se", "z_score"}, {}};
  bool counted = true;  // contributes to the MC check
};

// z uses `z_se` when given (score test for counting estimators, whose
// plug-in SE is 0 when no event is seen).
void add_row(Comparison& c, double t, double analytic, double mean, double se, double z_se = -1.0) {
  double z = 0.0;
  const double scale = z_se >= 0.0 ? z_se : se;
  if (scale > 0.0) z = (mean - analytic) / scale;
  else if (std::abs(mean - analytic) > 1e-9 * std::max(1.0, std::abs(analytic))) z = std::copysign(INFINITY, mean - analytic);
  c.table.rows.push_back({fmt(t), fmt(analytic), fmt(mean), fmt(se), fmt(z)});
}

}  // namespace

RunResult run_scenario(const ScenarioConfig& config) {
  RunResult result;
  std::string model_text;
  std::optional<ModelSpec> parsed;
  Analytic a;
  try {
    config.validate();
    model_text = read_file(config.model_path);
    parsed.emplace(parse_model(model_text));
    validate_model(*parsed);
    a.grid = TimeGrid::uniform(parsed->horizon(), config.grid_step);
    a.grid.require_aligned(parsed->payments);
    // Law, G1 and every full-information k each hold an O(M²) triangle or two.
    const double cells = 0.5 * static_cast<double>(a.grid.size()) * static_cast<double>(a.grid.size());
    const double bytes = 8.0 * cells * (3.0 + 2.0 * parsed->sigma());
    if (bytes > kMaxTriangleBytes)
      throw ModelError(ErrorCode::InvalidArgument,
                       "grid step too fine for the surface tables (" + std::to_string(bytes / 1e9) + " GB)");
  } catch (const ModelError& e) {
    result.exit_code = 1;
    result.error = e.what();
    return result;
  }
  const ModelSpec& spec = *parsed;

  const auto& space = spec.space();
  const int sigma = spec.sigma();
  const auto& g = a.grid;
  const double h = g.step();
  const double horizon = spec.horizon();
  const int steps = g.steps();
  auto& tables = result.tables;

  try {
    a.occ = solve_occupation(spec, g);
    a.law = joint_law(spec, a.occ);
    a.dead = solve_dead_reserve(spec, g);
    if (has(config, Regime::Full)) a.full = solve_full_info(spec, a.law, g);
    if (has(config, Regime::G1) || has(config, Regime::G2) || has(config, Regime::Practice))
      a.g1 = solve_G1(spec, a.law, g);
    if (has(config, Regime::G2) || has(config, Regime::Practice)) a.g2 = solve_G2(spec, a.law, *a.g1, g);
    if (has(config, Regime::Practice)) a.practice = solve_practice_approx(spec, a.law, a.g2->reserve, g);
  } catch (const ModelError& e) {
    result.exit_code = 1;
    result.error = e.what();
    return result;
  }
  const auto slices = slice_nodes(g);
  const auto tables_itx = intensity_tables(spec, a.law, a.occ);

  // --- reserve and intensity tables --------------------------------------
  if (a.full) {
    Table t{{"t"}, {}};
    for (int j = 0; j < sigma; ++j) t.header.push_back("W0_" + space.lumped_label(j));
    t.header.push_back("W_d");
    for (int i = 0; i <= steps; ++i) {
      std::vector<std::string> row{fmt(g.node(i))};
      for (int j = 0; j < sigma; ++j) row.push_back(fmt(a.full->pre[static_cast<std::size_t>(j)].at(i)));
      row.push_back(fmt(a.dead.at(i)));
      t.rows.push_back(std::move(row));
    }
    tables["reserve_full"] = std::move(t);

    Table d{{"t"}, {}};
    for (int k = 0; k < sigma; ++k) d.header.push_back("W0_p_diag_k" + space.lumped_label(k));
    for (int i = 0; i <= steps; ++i) {
      std::vector<std::string> row{fmt(g.node(i))};
      for (int k = 0; k < sigma; ++k) row.push_back(fmt(a.full->retired[static_cast<std::size_t>(k)].at(i, i)));
      d.rows.push_back(std::move(row));
    }
    tables["reserve_full_diagonal"] = std::move(d);

    Table s{{"t", "r", "k", "W0_p"}, {}};
    for (int r : slices)
      for (int k = 0; k < sigma; ++k)
        for (int i = r; i <= steps; ++i)
          s.rows.push_back({fmt(g.node(i)), fmt(g.node(r)), space.lumped_label(k),
                            fmt(a.full->retired[static_cast<std::size_t>(k)].at(i, r))});
    tables["reserve_full_retired"] = std::move(s);

    Table mu{{"t"}, {}};
    const int lumped = space.lumped_count();
    for (int j = 0; j < sigma; ++j)
      for (int k = 0; k < lumped; ++k)
        if (k != j) mu.header.push_back("mu_" + space.lumped_label(j) + "_" + space.lumped_label(k));
    for (int i = 0; i <= steps; ++i) {
      std::vector<std::string> row{fmt(g.node(i))};
      for (int j = 0; j < sigma; ++j)
        for (int k = 0; k < lumped; ++k)
          if (k != j)
            row.push_back(fmt(tables_itx.lumped_forward[(static_cast<std::size_t>(i) * sigma + j) * lumped + k]));
      mu.rows.push_back(std::move(row));
    }
    tables["intensities_full"] = std::move(mu);
  }
  if (a.g1) {
    Table d{{"t", "W1_p_diag"}, {}};
    for (int i = 0; i <= steps; ++i) d.rows.push_back({fmt(g.node(i)), fmt(a.g1->at(i, i))});
    tables["reserve_G1_diagonal"] = std::move(d);
    Table s{{"t", "r", "W1_p"}, {}};
    Table mu{{"t", "r", "mu1_pd"}, {}};
    for (int r : slices)
      for (int i = r; i <= steps; ++i) {
        s.rows.push_back({fmt(g.node(i)), fmt(g.node(r)), fmt(a.g1->at(i, r))});
        mu.rows.push_back({fmt(g.node(i)), fmt(g.node(r)), fmt(a.law.mu1_node(i, r))});
      }
    if (has(config, Regime::G1)) {
      tables["reserve_G1"] = std::move(s);
      tables["intensities_G1"] = std::move(mu);
    }
  }
  if (a.g2 && has(config, Regime::G2)) {
    const auto risk = sum_at_risk(spec, a.law, *a.g1, a.g2->reserve, a.dead);
    Table t{{"t", "W2_p", "adjustment", "sum_at_risk_pd", "backward_adjustment"}, {}};
    for (int i = 0; i <= steps; ++i)
      t.rows.push_back({fmt(g.node(i)), fmt(a.g2->reserve.at(i)), fmt(a.g2->adjustment[i]), fmt(risk.forward_pd[i]),
                        fmt(risk.backward_adjustment[i])});
    tables["reserve_G2"] = std::move(t);
    Table mu{{"t", "mu2_pd", "mu_bar_p"}, {}};
    for (int k = 0; k < sigma; ++k) {
      mu.header.push_back("mu_bar_" + space.lumped_label(k) + "p_law");
      mu.header.push_back("mu_bar_" + space.lumped_label(k) + "p_occupation");
    }
    for (int i = 0; i <= steps; ++i) {
      std::vector<std::string> row{fmt(g.node(i)), fmt(tables_itx.mu2[i]), fmt(tables_itx.mu_bar[i])};
      for (int k = 0; k < sigma; ++k) {
        row.push_back(fmt(tables_itx.backward_law[static_cast<std::size_t>(i * sigma + k)]));
        row.push_back(fmt(tables_itx.backward_occupation[static_cast<std::size_t>(i * sigma + k)]));
      }
      mu.rows.push_back(std::move(row));
    }
    tables["intensities_G2"] = std::move(mu);
  }
  if (a.practice) {
    Table t{{"t", "practice_p", "W2_p", "gap"}, {}};
    for (int i = 0; i <= steps; ++i)
      t.rows.push_back({fmt(g.node(i)), fmt(a.practice->reserve.at(i)), fmt(a.g2->reserve.at(i)),
                        fmt(a.practice->gap[i])});
    tables["reserve_practice"] = std::move(t);
    Table mu{{"t", "mu2_pd"}, {}};
    for (int i = 0; i <= steps; ++i) mu.rows.push_back({fmt(g.node(i)), fmt(tables_itx.mu2[i])});
    tables["intensities_practice"] = std::move(mu);
  }

  // --- checks ------------------------------------------------------------
  auto& checks = result.checks;
  if (config.checks.residual) {
    Table t{{"regime", "state", "max_abs_residual", "threshold", "pass"}, {}};
    auto run = [&](Regime regime, std::vector<ReserveSurface> surfaces, double scale) {
      const auto rep = thiele_residual(regime, surfaces, a.law, spec, g);
      const double thr = 10.0 * h * h * std::max(1.0, scale);
      for (const auto& [state, v] : rep.max_abs) {
        const bool ok = v <= thr;
        t.rows.push_back({std::string(to_string(regime)), state, fmt(v), fmt(thr), ok ? "1" : "0"});
        checks.push_back({"residual_" + std::string(to_string(regime)) + "_" + state, v, thr, ok});
      }
      const double jthr = 1e-9 * std::max(1.0, scale);
      const bool ok = rep.max_jump_error <= jthr;
      t.rows.push_back({std::string(to_string(regime)), "jump", fmt(rep.max_jump_error), fmt(jthr), ok ? "1" : "0"});
      checks.push_back({"jump_" + std::string(to_string(regime)), rep.max_jump_error, jthr, ok});
    };
    if (a.full) {
      std::vector<ReserveSurface> s;
      double scale = max_abs(a.dead);
      for (const auto& x : a.full->pre) s.push_back(x), scale = std::max(scale, max_abs(x));
      for (const auto& x : a.full->retired) s.push_back(x), scale = std::max(scale, max_abs(x));
      s.push_back(a.dead);
      run(Regime::Full, std::move(s), scale);
    }
    if (a.g1 && has(config, Regime::G1))
      run(Regime::G1, {*a.g1, a.dead}, std::max(max_abs(*a.g1), max_abs(a.dead)));
    if (a.g2 && has(config, Regime::G2))
      run(Regime::G2, {a.g2->reserve, *a.g1, a.dead}, std::max(max_abs(a.g2->reserve), max_abs(a.dead)));
    if (a.practice)
      run(Regime::Practice, {a.practice->reserve, a.dead}, std::max(max_abs(a.practice->reserve), max_abs(a.dead)));
    tables["residuals"] = std::move(t);
  }
  if (config.checks.identity) {
    const auto idc = backward_identity_check(spec, a.law, a.occ);
    checks.push_back({"identity_relative", idc.max_relative_discrepancy, 1e-3, idc.max_relative_discrepancy < 1e-3});
    checks.push_back({"identity_sum", idc.max_sum_discrepancy, 1e-3, idc.max_sum_discrepancy < 1e-3});
  }
  if (config.checks.tower && a.g2) {
    const auto tw = tower_average(a.law, *a.g1);
    double gap = 0.0;
    for (int i = 0; i <= steps; ++i)
      if (a.law.tail[i] > kDenominatorFloor) gap = std::max(gap, std::abs(tw[i] - a.g2->reserve.at(i)));
    const double thr = 5e-3 * max_abs(a.g2->reserve);
    checks.push_back({"tower_gap", gap, thr, gap <= thr});
  }

  // --- Monte Carlo --------------------------------------------------------
  std::vector<PathSample> paths;
  if (config.checks.mc || config.dump_paths) {
    try {
      paths = simulate_paths(spec, config.mc.paths, config.mc.seed, {config.mc.threads});
    } catch (const ModelError& e) {
      result.exit_code = 1;
      result.error = e.what();
      return result;
    }
  }
  if (config.checks.mc) {
    const auto& mc = config.mc;
    const OutflowEvaluator outflow(spec, h);
    const double step = mc.compare_step > 0.0 ? mc.compare_step : horizon / 40.0;
    std::vector<int> nodes;
    for (int q = 0; q * step < horizon - 1e-9; ++q) {
      const int i = g.nearest(q * step);
      if (nodes.empty() || nodes.back() != i) nodes.push_back(i);
    }
    std::map<std::string, Comparison> comps;
    auto estimate = [&](const ConditioningSpec& c) -> std::optional<McEstimate> {
      try {
        auto e = estimate_reserve(paths, c, outflow, space, mc.min_effective);
        if (!e.reliable) return std::nullopt;
        return e;
      } catch (const ModelError& err) {
        if (err.code() == ErrorCode::EmptyConditioning) return std::nullopt;
        throw;
      }
    };
    const int lp = space.lumped_retired();
    const int ld = space.lumped_dead();
    for (int i : nodes) {
      const double t = g.node(i);
      if (a.full) {
        for (int j = 0; j < sigma; ++j)
          if (auto e = estimate(ConditioningSpec::lumped(t, j)))
            add_row(comps["full_" + space.lumped_label(j)], t, a.full->pre[static_cast<std::size_t>(j)].at(i), e->mean,
                    e->standard_error);
        if (auto e = estimate(ConditioningSpec::lumped(t, ld)))
          add_row(comps["full_d"], t, a.dead.at(i), e->mean, e->standard_error);
        if (auto bin = best_eta_bin(a, i, mc.eta_bin_width)) {
          for (int k = 0; k < sigma; ++k) {
            // Duration bin: the most populated one among paths in the η bin.
            std::map<long long, std::size_t> hist;
            for (const auto& p : paths)
              if (p.retired_by(t) && p.eta >= bin->first && p.eta < bin->second && p.h_state == k)
                ++hist[static_cast<long long>(std::floor(p.u_h / mc.duration_bin_width))];
            if (hist.empty()) continue;
            auto mode = std::max_element(hist.begin(), hist.end(),
                                         [](const auto& x, const auto& y) { return x.second < y.second; });
            const double u_lo = static_cast<double>(mode->first) * mc.duration_bin_width;
            const auto& surf = a.full->retired[static_cast<std::size_t>(k)];
            const auto& surv = a.full->cond_surv[static_cast<std::size_t>(k)];
            const double an = bin_average(
                g, bin->first, bin->second, [&](int r) { return surf.at(i, r); },
                [&](int r) { return a.law.entry_from(r, k) * surv.at(r, i); });
            if (auto e = estimate(
                    ConditioningSpec::retired_full(t, bin->first, bin->second, k, u_lo, u_lo + mc.duration_bin_width)))
              add_row(comps["full_p_k" + space.lumped_label(k)], t, an, e->mean, e->standard_error);
          }
        }
      }
      if (a.g1 && has(config, Regime::G1)) {
        if (auto bin = best_eta_bin(a, i, mc.eta_bin_width)) {
          const double an = bin_average(
              g, bin->first, bin->second, [&](int r) { return a.g1->at(i, r); },
              [&](int r) { return a.law.f_eta[r] * a.law.cond_surv.at(r, i); });
          if (auto e = estimate(ConditioningSpec::retired_eta(t, bin->first, bin->second)))
            add_row(comps["G1_p"], t, an, e->mean, e->standard_error);
        }
      }
      if (a.g2 && (has(config, Regime::G2) || a.practice)) {
        if (auto e = estimate(ConditioningSpec::lumped(t, lp))) {
          if (has(config, Regime::G2)) add_row(comps["G2_p"], t, a.g2->reserve.at(i), e->mean, e->standard_error);
          if (a.practice) {
            add_row(comps["practice_p"], t, a.practice->reserve.at(i), e->mean, e->standard_error);
            comps["practice_p"].counted = false;
          }
        }
      }
      if (a.g2 && has(config, Regime::G2)) {
        // Forward p → d over [t, t + bw): window average of μ⁽²⁾.
        const int w = std::max(1, static_cast<int>(std::lround(mc.forward_bandwidth / h)));
        if (i + w <= steps && a.law.tail[i] > kDenominatorFloor) {
          const double bw = w * h;
          try {
            auto f = estimate_forward_intensity(paths, ConditioningSpec::lumped(t, lp), lp, ld, bw, space);
            if (f.n_effective >= mc.min_effective) {
              const double an = trapezoid([&](int j) { return a.law.mu2_node(j); }, i, i + w, h) / bw;
              add_row(comps["G2_mu2"], t, an, f.rate, f.standard_error, std::sqrt(an / f.exposure));
            }
          } catch (const ModelError& err) {
            if (err.code() != ErrorCode::EmptyConditioning) throw;
          }
        }
        const int wb = std::max(1, static_cast<int>(std::lround(mc.backward_bandwidth / h)));
        if (i >= wb && a.law.tail[i] > kDenominatorFloor) {
          const double bw = wb * h;
          for (int k = -1; k < sigma; ++k) {
            try {
              auto b = estimate_backward_intensity(paths, k, lp, t, bw, space);
              if (b.n_effective < mc.min_effective) continue;
              const double an = smoothed_backward_intensity(spec, a.law, k, t, bw);
              const double n_risk = static_cast<double>(b.n_effective);
              const double q = std::clamp(an * bw, 0.0, 1.0);
              add_row(comps[k < 0 ? std::string("G2_mu_bar") : "G2_mu_bar_" + space.lumped_label(k)], t, an, b.rate,
                      b.standard_error, std::sqrt(q * (1.0 - q) / n_risk) / bw);
            } catch (const ModelError& err) {
              if (err.code() != ErrorCode::EmptyConditioning) throw;
            }
          }
        }
      }
    }
    std::size_t counted = 0, within = 0;
    for (auto& [name, c] : comps) {
      if (c.counted)
        for (const auto& row : c.table.rows) {
          ++counted;
          if (std::abs(std::stod(row[4])) <= 3.0) ++within;
        }
      tables["mc_compare_" + name] = std::move(c.table);
    }
    const double share = counted ? static_cast<double>(within) / static_cast<double>(counted) : 1.0;
    checks.push_back({"mc_within_3se_share", share, 0.99, share >= 0.99});
  }

  // --- summary tables, files, manifest ------------------------------------
  {
    Table t{{"check", "value", "threshold", "pass"}, {}};
    for (const auto& c : checks) t.rows.push_back({c.name, fmt(c.value), fmt(c.threshold), c.pass ? "1" : "0"});
    tables["checks"] = std::move(t);
  }
  for (int q = 0; q < 4; ++q) result.report_times.push_back(g.node(g.nearest(horizon * q / 4.0)));
  result.exit_code = std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; }) ? 0 : 2;

  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);
  json files = json::object();
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream out(fs::path(config.out_dir) / name, std::ios::binary);
    out << content;
    if (!out) throw ModelError(ErrorCode::InvalidArgument, "cannot write " + name);
    files[name] = hex64(fnv1a(content));
  };
  for (const auto& [stem, table] : tables) write(stem + ".csv", table.csv());
  if (config.dump_paths) {
    std::ostringstream dump;
    write_path_dump(dump, paths, space);
    write("paths.csv", dump.str());
  }
  write("report.txt", emit_report(result));

  const json cfg = config_json(config, model_text);
  json manifest{{"config_hash", hex64(fnv1a(cfg.dump()))},
                {"config", cfg},
                {"seed", config.mc.seed},
                {"versions", {{"nmreserve", NMR_VERSION}, {"json", "nlohmann " + std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
                {"exit_code", result.exit_code},
                {"files", files}};
  std::ofstream(fs::path(config.out_dir) / "manifest.json", std::ios::binary) << manifest.dump(2) << '\n';
  return result;
}

std::string emit_report(const RunResult& result) {
  if (result.exit_code == 1) return "run failed: " + result.error + "\n";
  const auto& tables = result.tables;
  auto find_row = [&](const std::string& stem, const std::string& t) -> const std::vector<std::string>* {
    auto it = tables.find(stem);
    if (it == tables.end()) return nullptr;
    for (const auto& row : it->second.rows)
      if (!row.empty() && row[0] == t) return &row;
    return nullptr;
  };
  std::ostringstream out;
  auto cell = [](const std::vector<std::string>* row, std::size_t col) { return row ? (*row)[col] : std::string("-"); };

  // Retired column per regime: W⁽⁰⁾_p(t,t,k) per k, W⁽¹⁾_p(t,t), W⁽²⁾_p(t), practice.
  std::vector<std::string> head{"t"};
  if (auto it = tables.find("reserve_full_diagonal"); it != tables.end())
    for (std::size_t c = 1; c < it->second.header.size(); ++c) head.push_back(it->second.header[c]);
  head.insert(head.end(), {"W1_p_diag", "W2_p", "practice_p"});
  out << "retired-state reserves\n";
  for (std::size_t c = 0; c < head.size(); ++c) out << (c ? "  " : "") << head[c];
  out << '\n';
  for (double tv : result.report_times) {
    char key[40];
    std::snprintf(key, sizeof key, "%.17g", tv);
    const std::string t = key;
    out << t;
    if (auto it = tables.find("reserve_full_diagonal"); it != tables.end()) {
      const auto* row = find_row("reserve_full_diagonal", t);
      for (std::size_t c = 1; c < it->second.header.size(); ++c) out << "  " << cell(row, c);
    }
    out << "  " << cell(find_row("reserve_G1_diagonal", t), 1);
    out << "  " << cell(find_row("reserve_G2", t), 1);
    out << "  " << cell(find_row("reserve_practice", t), 1);
    out << '\n';
  }
  if (auto it = tables.find("reserve_full"); it != tables.end()) {
    out << "\npre-retirement and dead reserves (full information)\n";
    for (std::size_t c = 0; c < it->second.header.size(); ++c) out << (c ? "  " : "") << it->second.header[c];
    out << '\n';
    for (double tv : result.report_times) {
      char key[40];
      std::snprintf(key, sizeof key, "%.17g", tv);
      if (const auto* row = find_row("reserve_full", key)) {
        for (std::size_t c = 0; c < row->size(); ++c) out << (c ? "  " : "") << (*row)[c];
        out << '\n';
      }
    }
  }
  if (auto it = tables.find("checks"); it != tables.end()) {
    out << "\nchecks (value / threshold / pass)\n";
    for (const auto& row : it->second.rows) out << row[0] << "  " << row[1] << "  " << row[2] << "  " << row[3] << '\n';
  }
  out << "\nexit " << result.exit_code << '\n';
  return out.str();
}

}  // namespace nmr::cli
