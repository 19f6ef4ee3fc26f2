#include "nmr/model_io.hpp"

#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "nmr/errors.hpp"

namespace nmr {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& what) { throw ModelError(ErrorCode::ParseError, what); }

const json& params_of(const json& node) {
  auto it = node.find("params");
  return it != node.end() ? *it : node;
}

double number(const json& node, const char* key) {
  auto it = node.find(key);
  if (it == node.end() || !it->is_number()) fail(std::string("missing numeric field '") + key + "'");
  return it->get<double>();
}

std::string text(const json& node, const char* key) {
  auto it = node.find(key);
  if (it == node.end()) fail(std::string("missing field '") + key + "'");
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long>());
  fail(std::string("field '") + key + "' must be a state label");
}

Knots knots(const json& p) {
  auto it = p.find("points");
  if (it == p.end() || !it->is_array()) fail("missing 'points' array");
  Knots out;
  for (const auto& pt : *it) {
    if (!pt.is_array() || pt.size() != 2) fail("points must be [abscissa, value] pairs");
    out.emplace_back(pt[0].get<double>(), pt[1].get<double>());
  }
  return out;
}

RateFunction rate_function(const json& node) {
  const std::string kind = text(node, "kind");
  const json& p = params_of(node);
  const bool dur = node.value("duration_dependent", false);
  const auto axis = dur ? RateFunction::Axis::Duration : RateFunction::Axis::Time;
  if (kind == "constant") return RateFunction::constant(number(p, "rate"));
  if (kind == "gompertz") return RateFunction::gompertz(number(p, "a"), number(p, "b"), number(p, "c"), axis);
  if (kind == "piecewise_linear" || kind == "table") return RateFunction::linear(knots(p), axis);
  fail("unknown intensity kind '" + kind + "'");
}

TimeFunction time_function(const json& node) {
  const std::string kind = text(node, "kind");
  const json& p = params_of(node);
  if (kind == "constant") return TimeFunction::constant(number(p, "value"));
  if (kind == "step") return TimeFunction::step(knots(p));
  if (kind == "piecewise_linear" || kind == "table") return TimeFunction::linear(knots(p));
  fail("unknown payment kind '" + kind + "'");
}

DiscountCurve discount_curve(const json& node) {
  const std::string kind = text(node, "kind");
  const json& p = params_of(node);
  if (kind == "constant_rate") return DiscountCurve::constant_rate(number(p, "rate"));
  if (kind == "table") return DiscountCurve::short_rate_table(knots(p));
  fail("unknown discount kind '" + kind + "'");
}

ModelSpec build(const json& root) {
  if (!root.is_object()) fail("model must be a JSON object");
  const auto sigma_value = number(root, "sigma");
  const int sigma = static_cast<int>(sigma_value);
  if (sigma < 1 || sigma != sigma_value) fail("sigma must be a positive integer");
  const double horizon = number(root, "horizon");
  const double bound = root.contains("sup_bound") ? number(root, "sup_bound") : std::numeric_limits<double>::infinity();

  IntensitySpec intens(sigma, bound);
  const StateSpace& space = intens.space();
  PaymentSpec pay(sigma, horizon);

  for (const auto& node : root.value("intensities", json::array()))
    intens.set(space.parse_extended(text(node, "from")), space.parse_extended(text(node, "to")), rate_function(node));

  const json payments = root.value("payments", json::object());
  for (const auto& node : payments.value("sojourn", json::array()))
    pay.set_sojourn(space.parse_lumped(text(node, "state")), time_function(node));
  for (const auto& node : payments.value("transition", json::array()))
    pay.set_transition(space.parse_lumped(text(node, "from")), space.parse_lumped(text(node, "to")),
                       time_function(node));
  for (const auto& node : payments.value("discrete", json::array()))
    pay.add_discrete(number(node, "time"), space.parse_lumped(text(node, "state")), number(node, "amount"));

  DiscountCurve discount = root.contains("discount") ? discount_curve(root["discount"]) : DiscountCurve::constant_rate(0.0);
  std::vector<double> initial;
  if (root.contains("initial")) initial = root["initial"].get<std::vector<double>>();
  return ModelSpec{std::move(intens), std::move(pay), std::move(discount), std::move(initial)};
}

}  // namespace

ModelSpec parse_model(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(std::string("invalid JSON: ") + e.what());
  }
  try {
    return build(root);
  } catch (const json::exception& e) {
    fail(std::string("malformed model: ") + e.what());
  }
}

ModelSpec load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

}  // namespace nmr
