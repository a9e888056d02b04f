#pragma once

#include "prefrl/segments.hpp"

#include <json.hpp>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace prefrl {

enum class ModelKind { PartialReturn, Regret, RegretD, LogLin, ExpectedReturn };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

/// A preference model. Temperature is expressed through `scale`, which
/// multiplies the statistic difference inside the logistic.
struct ModelSpec {
  ModelKind kind = ModelKind::PartialReturn;
  bool noiseless = false;
  std::optional<double> uniform_c;
  double scale = 1.0;
  double gamma_tilde = 1.0;
  /// Weights on (V_start, partial return, V_end) for the logistic-linear model.
  std::array<double, 3> loglin_w{0.0, 1.0, 0.0};

  bool operator==(const ModelSpec&) const = default;
};

ModelSpec partial_return_model(bool noiseless = false);
ModelSpec regret_model(bool noiseless = false);

/// Per-segment utility f(sigma); the stochastic model is
/// logistic(scale * (f(sigma1) - f(sigma2))).
///   partial_return: partial return
///   regret, regret_d: negated regret
///   loglin: w . (V_start, partial return, discounted V_end)
///   expected_return: partial return + discounted V_end
double model_utility(const ModelSpec& spec, const SegmentStats& st);

/// P(sigma1 > sigma2). Noiseless mode returns 1, 0.5 or 0, treating utilities
/// within 1e-12 * max(1, |f1|, |f2|) as tied. The uniform-response wrapper is
/// applied last. Throws std::invalid_argument on NaN statistics or a negative
/// scale.
double preference_probability(const ModelSpec& spec, const SegmentStats& s1, const SegmentStats& s2);

/// P' = (1 - logistic(c)) P + logistic(c) / 2.
double apply_uniform_response(double p, double c);

double logistic(double x);
/// log(logistic(x)) without overflow.
double log_logistic(double x);

/// True iff loglin (0,1,0) reproduces partial_return and loglin (-1,1,1)
/// reproduces regret_d on every pair of the battery, to 1e-12.
bool loglin_specializations_check(const std::vector<std::pair<SegmentStats, SegmentStats>>& battery);

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

}  // namespace prefrl
