#include "prefrl/preference_models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace prefrl {

namespace {

// gamma_tilde^n * V_end, recovered from the regret_d identity.
double discounted_v_end(const SegmentStats& st) { return st.v_start - st.partial_return - st.regret_d; }

constexpr double kTieTol = 1e-12;

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::PartialReturn: return "partial_return";
    case ModelKind::Regret: return "regret";
    case ModelKind::RegretD: return "regret_d";
    case ModelKind::LogLin: return "loglin";
    case ModelKind::ExpectedReturn: return "expected_return";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "partial_return" || name == "pr") return ModelKind::PartialReturn;
  if (name == "regret") return ModelKind::Regret;
  if (name == "regret_d") return ModelKind::RegretD;
  if (name == "loglin") return ModelKind::LogLin;
  if (name == "expected_return") return ModelKind::ExpectedReturn;
  throw std::invalid_argument("unknown preference model '" + name + "'");
}

ModelSpec partial_return_model(bool noiseless) {
  ModelSpec s;
  s.kind = ModelKind::PartialReturn;
  s.noiseless = noiseless;
  return s;
}

ModelSpec regret_model(bool noiseless) {
  ModelSpec s;
  s.kind = ModelKind::Regret;
  s.noiseless = noiseless;
  return s;
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_logistic(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

double apply_uniform_response(double p, double c) {
  const double u = logistic(c);
  return (1.0 - u) * p + 0.5 * u;
}

double model_utility(const ModelSpec& spec, const SegmentStats& st) {
  switch (spec.kind) {
    case ModelKind::PartialReturn: return st.partial_return;
    case ModelKind::Regret: return -st.regret;
    case ModelKind::RegretD: return -st.regret_d;
    case ModelKind::LogLin:
      return spec.loglin_w[0] * st.v_start + spec.loglin_w[1] * st.partial_return +
             spec.loglin_w[2] * discounted_v_end(st);
    case ModelKind::ExpectedReturn: return st.partial_return + discounted_v_end(st);
  }
  return 0.0;
}

double preference_probability(const ModelSpec& spec, const SegmentStats& s1, const SegmentStats& s2) {
  if (!(spec.scale >= 0.0)) throw std::invalid_argument("model scale must be non-negative");
  const double f1 = model_utility(spec, s1);
  const double f2 = model_utility(spec, s2);
  if (std::isnan(f1) || std::isnan(f2)) throw std::invalid_argument("NaN segment statistic");
  double p;
  if (spec.noiseless) {
    const double tol = kTieTol * std::max({1.0, std::abs(f1), std::abs(f2)});
    p = std::abs(f1 - f2) <= tol ? 0.5 : (f1 > f2 ? 1.0 : 0.0);
  } else {
    p = logistic(spec.scale * (f1 - f2));
  }
  return spec.uniform_c ? apply_uniform_response(p, *spec.uniform_c) : p;
}

bool loglin_specializations_check(const std::vector<std::pair<SegmentStats, SegmentStats>>& battery) {
  ModelSpec pr = partial_return_model();
  ModelSpec rd;
  rd.kind = ModelKind::RegretD;
  ModelSpec ll;
  ll.kind = ModelKind::LogLin;
  for (const auto& [a, b] : battery) {
    ll.loglin_w = {0.0, 1.0, 0.0};
    if (std::abs(preference_probability(ll, a, b) - preference_probability(pr, a, b)) > 1e-12) return false;
    ll.loglin_w = {-1.0, 1.0, 1.0};
    if (std::abs(preference_probability(ll, a, b) - preference_probability(rd, a, b)) > 1e-12) return false;
  }
  return true;
}

nlohmann::json to_json(const ModelSpec& spec) {
  nlohmann::json j;
  j["kind"] = to_string(spec.kind);
  j["noiseless"] = spec.noiseless;
  j["scale"] = spec.scale;
  j["gamma_tilde"] = spec.gamma_tilde;
  if (spec.uniform_c) j["uniform_c"] = *spec.uniform_c;
  if (spec.kind == ModelKind::LogLin) j["loglin_w"] = spec.loglin_w;
  return j;
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  if (j.is_string()) {
    s.kind = parse_model_kind(j.get<std::string>());
    return s;
  }
  s.kind = parse_model_kind(j.at("kind").get<std::string>());
  s.noiseless = j.value("noiseless", false);
  s.scale = j.value("scale", 1.0);
  s.gamma_tilde = j.value("gamma_tilde", 1.0);
  if (j.contains("uniform_c") && !j.at("uniform_c").is_null()) s.uniform_c = j.at("uniform_c").get<double>();
  if (j.contains("loglin_w")) s.loglin_w = j.at("loglin_w").get<std::array<double, 3>>();
  if (s.scale < 0.0) throw std::invalid_argument("model scale must be non-negative");
  return s;
}

}  // namespace prefrl
