#include "prefrl/policy_set.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace prefrl {

std::string policy_support_key(const Policy& pi) {
  std::string key;
  key.reserve(static_cast<std::size_t>(pi.probs.size()));
  for (Eigen::Index s = 0; s < pi.probs.rows(); ++s)
    for (Eigen::Index a = 0; a < pi.probs.cols(); ++a) key += pi.probs(s, a) > 0.0 ? '1' : '0';
  return key;
}

bool same_support(const Policy& a, const Policy& b) { return policy_support_key(a) == policy_support_key(b); }

PolicySet generate_sf_policy_set(const TabularMdp& mdp, const RewardWeights& w_true, Rng& rng,
                                 const PolicySetOptions& options) {
  if (options.weight_values.empty()) throw std::invalid_argument("no weight values to sample from");
  const double gamma = mdp.gamma_solve();
  PolicySet ps;
  std::unordered_set<std::string> seen;
  std::vector<std::string> keys;
  std::size_t redundant = 0;
  for (std::size_t sample = 0; sample < options.max_samples && redundant < options.patience; ++sample) {
    Vector w(static_cast<Eigen::Index>(mdp.n_features()));
    for (auto& x : w) x = options.weight_values[uniform_index(rng, options.weight_values.size())];
    const RewardWeights rw(w);
    Policy pi = max_entropy_optimal_policy(value_iteration(mdp, rw, gamma), options.tie_tol);
    auto key = policy_support_key(pi);
    if (!seen.insert(key).second) {
      ++redundant;
      continue;
    }
    redundant = 0;
    ps.sfs.entries.push_back(successor_features(mdp, pi, gamma));
    ps.provenance.push_back(rw);
    ps.policies.push_back(std::move(pi));
    keys.push_back(std::move(key));
  }
  ps.collected = ps.size();

  const auto truth = policy_support_key(max_entropy_optimal_policy(value_iteration(mdp, w_true, gamma), options.tie_tol));
  PolicySet kept;
  kept.collected = ps.collected;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (keys[i] == truth) continue;
    kept.sfs.entries.push_back(std::move(ps.sfs.entries[i]));
    kept.provenance.push_back(std::move(ps.provenance[i]));
    kept.policies.push_back(std::move(ps.policies[i]));
  }
  return kept;
}

PolicySet policy_set_from_policies(const TabularMdp& mdp, const std::vector<Policy>& policies) {
  PolicySet ps;
  for (const auto& pi : policies) {
    ps.sfs.entries.push_back(successor_features(mdp, pi, mdp.gamma_solve()));
    ps.provenance.emplace_back(Vector::Zero(static_cast<Eigen::Index>(mdp.n_features())));
    ps.policies.push_back(pi);
  }
  ps.collected = ps.size();
  return ps;
}

double softmax_average(const double* x, std::size_t n, double temp, double* dx) {
  if (n == 0) throw std::invalid_argument("softmax over an empty set");
  if (!(temp > 0.0)) throw std::invalid_argument("softmax temperature must be positive");
  const double m = *std::max_element(x, x + n);
  // exp underflows to exactly zero below this argument.
  constexpr double kUnderflow = -745.0;
  double total = 0.0;
  double weighted = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const double z = (x[p] - m) / temp;
    if (z < kUnderflow) continue;
    const double e = std::exp(z);
    total += e;
    weighted += e * x[p];
  }
  const double avg = weighted / total;
  if (dx) {
    for (std::size_t p = 0; p < n; ++p) {
      const double z = (x[p] - m) / temp;
      dx[p] = z < kUnderflow ? 0.0 : std::exp(z) / total * (1.0 + (x[p] - avg) / temp);
    }
  }
  return avg;
}

double approx_optimal_value(const PolicySet& ps, const RewardWeights& w, double temp, std::size_t s) {
  if (ps.empty()) throw std::invalid_argument("empty policy set");
  std::vector<double> x(ps.size());
  for (std::size_t p = 0; p < ps.size(); ++p)
    x[p] = ps.sfs.entries[p].psi_v.row(static_cast<Eigen::Index>(s)).dot(w.vec());
  return softmax_average(x.data(), x.size(), temp);
}

ApproxValues approx_optimal_values(const TabularMdp& mdp, const PolicySet& ps, const RewardWeights& w, double temp,
                                   std::size_t s, std::size_t a) {
  if (ps.empty()) throw std::invalid_argument("empty policy set");
  std::vector<double> x(ps.size());
  const auto row = static_cast<Eigen::Index>(mdp.sa(s, a));
  for (std::size_t p = 0; p < ps.size(); ++p) x[p] = ps.sfs.entries[p].psi_q.row(row).dot(w.vec());
  ApproxValues out;
  out.q = softmax_average(x.data(), x.size(), temp);
  out.v = approx_optimal_value(ps, w, temp, s);
  return out;
}

}  // namespace prefrl
