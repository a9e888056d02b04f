#pragma once

#include "prefrl/mdp.hpp"
#include "prefrl/random.hpp"

#include <optional>
#include <string>
#include <vector>

namespace prefrl {

/// Fixed-length window of n actions and n + 1 states. `term_index` is the
/// transition index t whose successor states[t + 1] is terminal, if any; all
/// later steps are absorbing self-loops with action 0. The segment terminates
/// early when term_index < n - 1.
struct Segment {
  std::vector<std::size_t> states;
  std::vector<std::size_t> actions;
  std::optional<std::size_t> term_index;

  std::size_t length() const { return actions.size(); }
  std::size_t start() const { return states.front(); }
  std::size_t end() const { return states.back(); }
  bool terminates_early() const { return term_index && *term_index + 1 < actions.size(); }

  bool operator==(const Segment&) const = default;
};

struct SegmentStats {
  double partial_return = 0.0;
  double v_start = 0.0;
  double v_end = 0.0;
  double statechg = 0.0;
  double regret_d = 0.0;
  double regret = 0.0;
};

/// Uniform non-terminal start, uniform actions, successors drawn from T.
/// Steps after termination are absorbing.
Segment sample_segment(const TabularMdp& mdp, std::size_t n, Rng& rng);

/// Builds a segment by following `actions` from `start` along the given
/// successor states. Throws std::invalid_argument on an impossible transition.
Segment make_segment(const TabularMdp& mdp, std::vector<std::size_t> states, std::vector<std::size_t> actions);

/// Every feasible length-n segment from every non-terminal start, over all
/// action sequences and stochastic outcomes. Absorbing steps use action 0, so
/// each distinct trajectory appears once.
std::vector<Segment> enumerate_segments(const TabularMdp& mdp, std::size_t n);

/// Statistics of a segment against a value solution. Per-step terms are
/// weighted by gamma_tilde^t (with 0^0 = 1).
SegmentStats segment_stats(const TabularMdp& mdp, const Segment& seg, const RewardWeights& w,
                           const ValueSolution& sol, double gamma_tilde = 1.0);

/// Discounted feature sum: sum_t gamma_tilde^t phi(s_t, a_t, s_{t+1}).
Vector segment_feature_sum(const TabularMdp& mdp, const Segment& seg, double gamma_tilde = 1.0);

/// Per-step rewards r_t of a segment.
std::vector<double> segment_rewards(const TabularMdp& mdp, const Segment& seg, const RewardWeights& w);

/// Drops the first `shift` transitions of a segment that terminates on its
/// final transition and pads with `shift` absorbing steps.
Segment shift_for_early_termination(const Segment& seg, std::size_t shift);

/// Canonical text form "start;a,a,a;termIndex" (termIndex -1 when none).
std::string serialize_segment(const Segment& seg);

/// Parses the canonical form by replaying the actions. Every replayed
/// transition must be deterministic; the stored termination index must agree
/// with the replay.
Segment parse_segment(const TabularMdp& mdp, const std::string& text);

}  // namespace prefrl
