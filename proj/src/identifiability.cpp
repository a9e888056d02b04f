#include "prefrl/identifiability.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace prefrl {

namespace {

std::string join(const std::vector<std::size_t>& xs) {
  std::string out = "{";
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + std::to_string(xs[i]);
  return out + "}";
}

std::size_t count_differences(const std::vector<double>& a, const std::vector<double>& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a[i] != b[i];
  return n;
}

struct Side {
  const TabularMdp* mdp;
  RewardWeights w;
  ValueSolution sol;
  double gamma_tilde;
};

// Appends the three per-pair checks: partial-return labels identical, greedy
// action at s0 different, regret labels different.
void compare(IdentifiabilityReport& report, const std::string& name, const Side& a, const Side& b, std::size_t n) {
  const auto segs = enumerate_segments(*a.mdp, n);
  const auto pr_a = exhaustive_labels(*a.mdp, segs, a.w, a.sol, ModelKind::PartialReturn, a.gamma_tilde);
  const auto pr_b = exhaustive_labels(*b.mdp, segs, b.w, b.sol, ModelKind::PartialReturn, b.gamma_tilde);
  const auto pr_diff = count_differences(pr_a, pr_b);
  report.checks.push_back({name + ": partial-return labels identical", pr_diff == 0,
                           std::to_string(pr_a.size()) + " pairs over " + std::to_string(segs.size()) +
                               " segments, " + std::to_string(pr_diff) + " differ"});

  const auto ga = greedy_actions(a.sol, 0);
  const auto gb = greedy_actions(b.sol, 0);
  report.checks.push_back({name + ": greedy action at s0 differs", ga != gb, "greedy " + join(ga) + " vs " + join(gb)});

  const auto rg_a = exhaustive_labels(*a.mdp, segs, a.w, a.sol, ModelKind::Regret, a.gamma_tilde);
  const auto rg_b = exhaustive_labels(*b.mdp, segs, b.w, b.sol, ModelKind::Regret, b.gamma_tilde);
  const auto rg_diff = count_differences(rg_a, rg_b);
  report.checks.push_back(
      {name + ": regret labels differ", rg_diff > 0, std::to_string(rg_diff) + " of " + std::to_string(rg_a.size())});
}

Side side(const Domain& d, double gamma = 0.0) {
  const double g = gamma > 0.0 ? gamma : d.mdp.gamma_solve();
  return {&d.mdp, d.schema.ground_truth, value_iteration(d.mdp, d.schema.ground_truth, g), g};
}

}  // namespace

bool IdentifiabilityReport::all_passed() const {
  return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

nlohmann::json IdentifiabilityReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : checks) rows.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  return {{"all_passed", all_passed()}, {"checks", rows}};
}

std::string IdentifiabilityReport::to_text() const {
  std::ostringstream out;
  for (const auto& c : checks) out << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ")\n";
  out << (all_passed() ? "all checks passed" : "some checks failed") << "\n";
  return out.str();
}

std::vector<double> exhaustive_labels(const TabularMdp& mdp, const std::vector<Segment>& segs, const RewardWeights& w,
                                      const ValueSolution& sol, ModelKind kind, double gamma_tilde) {
  ModelSpec spec;
  spec.kind = kind;
  spec.noiseless = true;
  spec.gamma_tilde = gamma_tilde;
  std::vector<SegmentStats> stats;
  stats.reserve(segs.size());
  for (const auto& s : segs) stats.push_back(segment_stats(mdp, s, w, sol, gamma_tilde));
  std::vector<double> labels;
  for (std::size_t i = 0; i < stats.size(); ++i)
    for (std::size_t j = i + 1; j < stats.size(); ++j) labels.push_back(preference_probability(spec, stats[i], stats[j]));
  return labels;
}

std::vector<std::size_t> greedy_actions(const ValueSolution& sol, std::size_t s) {
  const Policy pi = max_entropy_optimal_policy(sol);
  std::vector<std::size_t> out;
  for (Eigen::Index a = 0; a < pi.probs.cols(); ++a)
    if (pi.probs(static_cast<Eigen::Index>(s), a) > 0.0) out.push_back(static_cast<std::size_t>(a));
  return out;
}

Domain with_constant_shift(const Domain& d, double shift) {
  const auto& m = d.mdp;
  const auto k = m.n_features();
  std::vector<std::vector<Outcome>> out(m.n_states() * m.n_actions());
  for (std::size_t s = 0; s < m.n_states(); ++s) {
    for (std::size_t a = 0; a < m.n_actions(); ++a) {
      for (const auto& t : m.transitions(s, a)) {
        std::vector<double> phi(k + 1, 0.0);
        const auto row = m.features(t);
        for (std::size_t i = 0; i < k; ++i) phi[i] = row[static_cast<Eigen::Index>(i)];
        phi[k] = m.is_terminal(s) ? 0.0 : 1.0;
        out[m.sa(s, a)].push_back({t.next, t.prob, std::move(phi)});
      }
    }
  }
  Vector w(static_cast<Eigen::Index>(k + 1));
  w.head(static_cast<Eigen::Index>(k)) = d.schema.ground_truth.vec();
  w[static_cast<Eigen::Index>(k)] = shift;
  auto names = d.schema.names;
  names.push_back("constant");
  return {TabularMdp(m.n_states(), m.n_actions(), k + 1, std::move(out), m.terminal_mask(), m.start_dist(),
                     m.gamma_solve()),
          {std::move(names), RewardWeights(std::move(w))},
          d.grid};
}

IdentifiabilityReport run_identifiability_checks() {
  IdentifiabilityReport report;

  const auto risky = build_fig3(11.0);
  const auto safe = build_fig3(9.0);
  compare(report, "gamble r_win=11 vs r_win=9", side(risky), side(safe), 1);

  // Chain: walking right is optimal. Alternative: failing at once is optimal.
  const auto chain1 = build_chain(1, -4.0, 1.0);
  const auto alt1 = build_chain_alt(1, -4.0, -1.0);
  compare(report, "chain vs alternative chain, n=1", side(chain1), side(alt1), 1);
  const auto chain2 = build_chain(2, -4.0, 1.0);
  const auto alt2 = build_chain_alt(2, -4.0, -0.5);
  compare(report, "chain vs alternative chain, n=2", side(chain2), side(alt2), 2);

  // Shifting every non-absorbing reward by -5 makes failing at once optimal.
  const auto shifted = with_constant_shift(chain1, -5.0);
  const auto plain = with_constant_shift(chain1, 0.0);
  compare(report, "constant shift -5 on chain n=1", side(plain), side(shifted), 1);

  // Single-step partial returns ignore the discount; the optimal action does not.
  compare(report, "discount 1 vs 0.2 on alternative chain n=1", side(alt1, 1.0), side(alt1, 0.2), 1);

  return report;
}

}  // namespace prefrl
