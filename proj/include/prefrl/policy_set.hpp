#pragma once

#include "prefrl/mdp.hpp"
#include "prefrl/random.hpp"

#include <string>
#include <vector>

namespace prefrl {

/// Successor features of a collection of policies, with the reward weights
/// each policy was derived from.
struct PolicySet {
  SuccessorFeatureSet sfs;
  std::vector<RewardWeights> provenance;
  std::vector<Policy> policies;
  /// Number of distinct policies before the ground-truth-optimal ones were removed.
  std::size_t collected = 0;

  std::size_t size() const { return sfs.size(); }
  bool empty() const { return sfs.empty(); }
};

struct PolicySetOptions {
  std::vector<double> weight_values{-50, -10, -2, -1, 0, 1, 5, 10, 50};
  /// Stop after this many consecutive samples that produce a known policy.
  std::size_t patience = 300;
  /// Hard cap on sampled reward functions.
  std::size_t max_samples = 1000000;
  double tie_tol = kDefaultTieTol;
};

/// Key identifying a policy by its per-state support sets. Two policies are
/// equal in the redundancy and removal rules iff their keys match.
std::string policy_support_key(const Policy& pi);
bool same_support(const Policy& a, const Policy& b);

/// Samples reward weights with entries drawn with replacement from
/// options.weight_values, keeps each new max-entropy optimal policy with its
/// successor features (at the MDP's gamma_solve), stops after `patience`
/// consecutive redundant samples, then removes every policy equal to the
/// max-entropy optimal policy of w_true.
PolicySet generate_sf_policy_set(const TabularMdp& mdp, const RewardWeights& w_true, Rng& rng,
                                 const PolicySetOptions& options = {});

/// Policy set from explicit policies (no removal rule).
PolicySet policy_set_from_policies(const TabularMdp& mdp, const std::vector<Policy>& policies);

struct ApproxValues {
  double v = 0.0;
  double q = 0.0;
};

/// Softmax-weighted GPI estimates at state s (and action a): each candidate
/// value x_p = psi_p . w gets weight exp((x_p - max) / temp) / sum.
/// Throws std::invalid_argument on an empty set or non-positive temperature.
ApproxValues approx_optimal_values(const TabularMdp& mdp, const PolicySet& ps, const RewardWeights& w, double temp,
                                   std::size_t s, std::size_t a);
double approx_optimal_value(const PolicySet& ps, const RewardWeights& w, double temp, std::size_t s);

/// Softmax-weighted average of the candidate values and its derivative with
/// respect to each candidate: d/dx_p = pi_p (1 + (x_p - avg) / temp).
double softmax_average(const double* x, std::size_t n, double temp, double* dx = nullptr);

}  // namespace prefrl
