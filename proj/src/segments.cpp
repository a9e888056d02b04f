#include "prefrl/segments.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace prefrl {

namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

// Pads a segment whose last state is terminal with absorbing steps up to n.
void pad_absorbing(Segment& seg, std::size_t n) {
  while (seg.actions.size() < n) {
    seg.actions.push_back(0);
    seg.states.push_back(seg.states.back());
  }
}

}  // namespace

Segment sample_segment(const TabularMdp& mdp, std::size_t n, Rng& rng) {
  if (n == 0) throw std::invalid_argument("segment length must be at least 1");
  std::vector<std::size_t> live;
  for (std::size_t s = 0; s < mdp.n_states(); ++s)
    if (!mdp.is_terminal(s)) live.push_back(s);
  if (live.empty()) throw std::invalid_argument("MDP has no non-terminal state");

  Segment seg;
  seg.states.push_back(live[uniform_index(rng, live.size())]);
  std::vector<double> probs;
  while (seg.actions.size() < n) {
    const auto s = seg.states.back();
    if (mdp.is_terminal(s)) {
      pad_absorbing(seg, n);
      break;
    }
    const auto a = uniform_index(rng, mdp.n_actions());
    const auto ts = mdp.transitions(s, a);
    probs.clear();
    for (const auto& t : ts) probs.push_back(t.prob);
    const auto next = ts[sample_discrete(rng, probs)].next;
    if (mdp.is_terminal(next)) seg.term_index = seg.actions.size();
    seg.actions.push_back(a);
    seg.states.push_back(next);
  }
  return seg;
}

Segment make_segment(const TabularMdp& mdp, std::vector<std::size_t> states, std::vector<std::size_t> actions) {
  if (states.size() != actions.size() + 1 || actions.empty())
    throw std::invalid_argument("segment needs n actions and n + 1 states");
  Segment seg;
  for (std::size_t t = 0; t < actions.size(); ++t) {
    const auto s = states[t];
    if (s >= mdp.n_states() || states[t + 1] >= mdp.n_states() || actions[t] >= mdp.n_actions())
      throw std::invalid_argument("segment index out of range");
    if (mdp.transition_probability(s, actions[t], states[t + 1]) <= 0.0)
      throw std::invalid_argument("segment contains an impossible transition");
    if (!mdp.is_terminal(s) && mdp.is_terminal(states[t + 1]) && !seg.term_index) seg.term_index = t;
    if (mdp.is_terminal(s)) actions[t] = 0;
  }
  if (mdp.is_terminal(states.front())) throw std::invalid_argument("segment starts in a terminal state");
  seg.states = std::move(states);
  seg.actions = std::move(actions);
  return seg;
}

std::vector<Segment> enumerate_segments(const TabularMdp& mdp, std::size_t n) {
  if (n == 0) throw std::invalid_argument("segment length must be at least 1");
  std::vector<Segment> frontier;
  for (std::size_t s = 0; s < mdp.n_states(); ++s)
    if (!mdp.is_terminal(s)) frontier.push_back(Segment{{s}, {}, std::nullopt});
  for (std::size_t t = 0; t < n; ++t) {
    std::vector<Segment> grown;
    for (const auto& seg : frontier) {
      const auto s = seg.states.back();
      if (mdp.is_terminal(s)) {
        auto copy = seg;
        copy.actions.push_back(0);
        copy.states.push_back(s);
        grown.push_back(std::move(copy));
        continue;
      }
      for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
        for (const auto& tr : mdp.transitions(s, a)) {
          if (tr.prob <= 0.0) continue;
          auto copy = seg;
          if (mdp.is_terminal(tr.next)) copy.term_index = t;
          copy.actions.push_back(a);
          copy.states.push_back(tr.next);
          grown.push_back(std::move(copy));
        }
      }
    }
    frontier = std::move(grown);
  }
  return frontier;
}

std::vector<double> segment_rewards(const TabularMdp& mdp, const Segment& seg, const RewardWeights& w) {
  if (w.size() != mdp.n_features()) throw std::invalid_argument("reward weights do not match feature dimension");
  std::vector<double> r(seg.length());
  for (std::size_t t = 0; t < seg.length(); ++t)
    r[t] = mdp.transition_features(seg.states[t], seg.actions[t], seg.states[t + 1]).dot(w.vec());
  return r;
}

Vector segment_feature_sum(const TabularMdp& mdp, const Segment& seg, double gamma_tilde) {
  Vector acc = Vector::Zero(idx(mdp.n_features()));
  double g = 1.0;
  for (std::size_t t = 0; t < seg.length(); ++t) {
    acc += g * mdp.transition_features(seg.states[t], seg.actions[t], seg.states[t + 1]);
    g *= gamma_tilde;
  }
  return acc;
}

SegmentStats segment_stats(const TabularMdp& mdp, const Segment& seg, const RewardWeights& w,
                           const ValueSolution& sol, double gamma_tilde) {
  if (w.size() != mdp.n_features()) throw std::invalid_argument("reward weights do not match feature dimension");
  if (sol.v.size() != idx(mdp.n_states())) throw std::invalid_argument("value solution does not match MDP");
  SegmentStats st;
  const auto r = segment_rewards(mdp, seg, w);
  double g = 1.0;
  for (std::size_t t = 0; t < seg.length(); ++t) {
    st.partial_return += g * r[t];
    st.regret += g * (sol.v[idx(seg.states[t])] - sol.q(idx(seg.states[t]), idx(seg.actions[t])));
    g *= gamma_tilde;
  }
  st.v_start = sol.v[idx(seg.start())];
  st.v_end = sol.v[idx(seg.end())];
  st.statechg = st.v_end - st.v_start;
  st.regret_d = st.v_start - (st.partial_return + g * st.v_end);
  return st;
}

Segment shift_for_early_termination(const Segment& seg, std::size_t shift) {
  const auto n = seg.length();
  if (shift == 0) return seg;
  if (!seg.term_index || *seg.term_index + 1 != n)
    throw std::invalid_argument("segment must terminate on its final transition");
  if (shift >= n) throw std::invalid_argument("shift must be smaller than the segment length");
  Segment out;
  out.states.assign(seg.states.begin() + static_cast<std::ptrdiff_t>(shift), seg.states.end());
  out.actions.assign(seg.actions.begin() + static_cast<std::ptrdiff_t>(shift), seg.actions.end());
  out.term_index = n - 1 - shift;
  pad_absorbing(out, n);
  return out;
}

std::string serialize_segment(const Segment& seg) {
  std::ostringstream os;
  os << seg.start() << ';';
  for (std::size_t t = 0; t < seg.actions.size(); ++t) os << (t ? "," : "") << seg.actions[t];
  os << ';' << (seg.term_index ? static_cast<long long>(*seg.term_index) : -1LL);
  return os.str();
}

Segment parse_segment(const TabularMdp& mdp, const std::string& text) {
  const auto bad = [&](const std::string& why) {
    return std::invalid_argument("malformed segment '" + text + "': " + why);
  };
  const auto p1 = text.find(';');
  const auto p2 = p1 == std::string::npos ? std::string::npos : text.find(';', p1 + 1);
  if (p2 == std::string::npos || text.find(';', p2 + 1) != std::string::npos) throw bad("expected three fields");

  auto to_int = [&](const std::string& s) -> long long {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(s, &used);
    } catch (const std::exception&) {
      throw bad("not an integer: '" + s + "'");
    }
    if (used != s.size()) throw bad("not an integer: '" + s + "'");
    return v;
  };

  const long long start = to_int(text.substr(0, p1));
  std::vector<std::size_t> actions;
  std::stringstream as(text.substr(p1 + 1, p2 - p1 - 1));
  std::string item;
  while (std::getline(as, item, ',')) {
    const long long a = to_int(item);
    if (a < 0 || static_cast<std::size_t>(a) >= mdp.n_actions()) throw bad("action out of range");
    actions.push_back(static_cast<std::size_t>(a));
  }
  const long long term = to_int(text.substr(p2 + 1));
  if (actions.empty()) throw bad("no actions");
  if (start < 0 || static_cast<std::size_t>(start) >= mdp.n_states()) throw bad("start state out of range");
  if (mdp.is_terminal(static_cast<std::size_t>(start))) throw bad("starts in a terminal state");

  Segment seg;
  seg.states.push_back(static_cast<std::size_t>(start));
  for (std::size_t t = 0; t < actions.size(); ++t) {
    const auto s = seg.states.back();
    if (mdp.is_terminal(s)) {
      seg.actions.push_back(0);
      seg.states.push_back(s);
      continue;
    }
    const auto ts = mdp.transitions(s, actions[t]);
    if (ts.size() != 1) throw bad("stochastic transition cannot be replayed from actions");
    if (mdp.is_terminal(ts[0].next)) seg.term_index = t;
    seg.actions.push_back(actions[t]);
    seg.states.push_back(ts[0].next);
  }
  const long long replayed = seg.term_index ? static_cast<long long>(*seg.term_index) : -1;
  if (replayed != term) throw bad("termination index disagrees with replay");
  return seg;
}

}  // namespace prefrl
