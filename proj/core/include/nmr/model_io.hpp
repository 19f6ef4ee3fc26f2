#pragma once

#include <string>
#include <string_view>

#include "nmr/model.hpp"

namespace nmr {

/// Builds a model from its JSON description:
///
///   { "sigma": 2, "horizon": 40, "sup_bound": 1.0, "initial": [1, 0],
///     "intensities": [ { "from": "1", "to": "3", "kind": "piecewise_linear",
///                        "params": { "points": [[0, 0], [10, 0], [15, 0.15]] },
///                        "duration_dependent": false }, ... ],
///     "payments": { "sojourn":    [ { "state": "p", "kind": "constant", "params": { "value": 1 } } ],
///                   "transition": [ { "from": "p", "to": "d", "kind": "step", "params": { "points": [[0, 2]] } } ],
///                   "discrete":   [ { "time": 20, "state": "p", "amount": 1 } ] },
///     "discount": { "kind": "constant_rate", "params": { "rate": 0.02 } } }
///
/// Intensity kinds: constant {rate}, gompertz {a, b, c}, piecewise_linear and
/// table {points}; duration_dependent evaluates the function at the duration
/// instead of calendar time. Payment kinds: constant {value}, step,
/// piecewise_linear and table {points}. Discount kinds: constant_rate {rate},
/// table {points} of the short rate. Throws ModelError(ParseError).
ModelSpec parse_model(std::string_view json_text);
ModelSpec load_model(const std::string& path);

}  // namespace nmr
