#pragma once

#include "prefrl/domains.hpp"
#include "prefrl/random.hpp"

#include <cmath>
#include <vector>

namespace prefrl::test {

/// 1x2 grid: start cell on the left, destination on the right.
inline GridSpec corridor_spec() {
  GridSpec g;
  g.name = "corridor";
  g.width = 2;
  g.height = 1;
  g.cells = {parse_cell_token("W"), parse_cell_token("G")};
  g.reward_params = delivery_default_params();
  return g;
}

inline Domain corridor() { return build_delivery_task(corridor_spec()); }

/// Small random delivery MDPs for property tests.
inline RandomMdpParams small_mdp_params() {
  RandomMdpParams p;
  p.heights = {3, 4};
  p.widths = {3, 4};
  return p;
}

inline RewardWeights random_weights(Rng& rng, std::size_t d, double scale = 10.0) {
  Vector w(static_cast<Eigen::Index>(d));
  std::uniform_real_distribution<double> u(-scale, scale);
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = u(rng);
  return RewardWeights(w);
}

inline Policy random_deterministic_policy(const TabularMdp& mdp, Rng& rng) {
  std::vector<std::size_t> actions(mdp.n_states());
  for (auto& a : actions) a = uniform_index(rng, mdp.n_actions());
  return Policy::from_actions(mdp, actions);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace prefrl::test
