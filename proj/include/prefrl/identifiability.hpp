#pragma once

#include "prefrl/domains.hpp"
#include "prefrl/preference_models.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace prefrl {

struct IdentifiabilityCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct IdentifiabilityReport {
  std::vector<IdentifiabilityCheck> checks;
  bool all_passed() const;
  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// Noiseless labels P(sigma_i > sigma_j) for every pair i < j of the given
/// segments under (w, sol).
std::vector<double> exhaustive_labels(const TabularMdp& mdp, const std::vector<Segment>& segs, const RewardWeights& w,
                                      const ValueSolution& sol, ModelKind kind, double gamma_tilde = 1.0);

/// Greedy actions at `s` (actions within tie tolerance of the best Q).
std::vector<std::size_t> greedy_actions(const ValueSolution& sol, std::size_t s);

/// Adds a feature equal to 1 on every transition out of a non-terminal state
/// and gives it weight `shift`, so every non-absorbing reward moves by `shift`.
Domain with_constant_shift(const Domain& d, double shift);

/// Runs the exact counterexample checks:
///   two-outcome gamble with r_win 11 vs 9;
///   chain vs alternative chain for n = 1 and n = 2;
///   constant reward shift on a chain;
///   discount insensitivity of single-step partial returns;
///   regret labels separate each pair above.
IdentifiabilityReport run_identifiability_checks();

}  // namespace prefrl
