#include "prefrl/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace prefrl {

namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

void check_gamma(double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
}

void check_weights(const TabularMdp& mdp, const RewardWeights& w) {
  if (w.size() != mdp.n_features()) {
    std::ostringstream os;
    os << "reward weights have " << w.size() << " entries, MDP has " << mdp.n_features() << " features";
    throw std::invalid_argument(os.str());
  }
}

void check_policy(const TabularMdp& mdp, const Policy& pi) {
  if (pi.probs.rows() != idx(mdp.n_states()) || pi.probs.cols() != idx(mdp.n_actions()))
    throw std::invalid_argument("policy shape does not match MDP");
}

// Linear system (I - gamma P_pi) x = b restricted to non-terminal states.
struct PolicySystem {
  std::vector<std::size_t> state_of;  // compact index -> state
  std::vector<std::ptrdiff_t> compact;  // state -> compact index or -1
  Matrix a;
};

PolicySystem build_system(const TabularMdp& mdp, const Policy& pi, double gamma) {
  PolicySystem sys;
  sys.compact.assign(mdp.n_states(), -1);
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    if (!mdp.is_terminal(s)) {
      sys.compact[s] = static_cast<std::ptrdiff_t>(sys.state_of.size());
      sys.state_of.push_back(s);
    }
  }
  const auto n = sys.state_of.size();
  sys.a = Matrix::Identity(idx(n), idx(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = sys.state_of[i];
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      const double pa = pi.probs(idx(s), idx(a));
      if (pa == 0.0) continue;
      for (const auto& t : mdp.transitions(s, a)) {
        const auto j = sys.compact[t.next];
        if (j >= 0) sys.a(idx(i), j) -= gamma * pa * t.prob;
      }
    }
  }
  return sys;
}

// Solves sys.a X = B, throwing ConvergenceError if the system is singular or
// the solution fails the residual test.
Matrix solve_system(const PolicySystem& sys, const Matrix& b, double gamma, double tol) {
  if (sys.state_of.empty()) return Matrix(0, b.cols());
  Matrix x;
  if (gamma < 1.0) {
    x = sys.a.partialPivLu().solve(b);
  } else {
    Eigen::FullPivLU<Matrix> lu(sys.a);
    if (!lu.isInvertible())
      throw ConvergenceError("policy has no finite undiscounted value (it can avoid termination forever)");
    x = lu.solve(b);
  }
  const double scale = std::max(1.0, x.cwiseAbs().maxCoeff());
  const double residual = (sys.a * x - b).cwiseAbs().maxCoeff();
  if (!std::isfinite(residual) || residual > std::max(tol, 1e-9) * scale)
    throw ConvergenceError("policy evaluation residual too large; the policy is improper at this discount");
  return x;
}

Vector expected_reward(const TabularMdp& mdp, const RewardWeights& w) {
  return mdp.expected_features() * w.vec();
}

}  // namespace

TabularMdp::TabularMdp(std::size_t n_states, std::size_t n_actions, std::size_t n_features,
                       std::vector<std::vector<Outcome>> outcomes, std::vector<bool> terminal,
                       std::vector<double> start_dist, double gamma_solve)
    : n_states_(n_states),
      n_actions_(n_actions),
      n_features_(n_features),
      gamma_solve_(gamma_solve),
      terminal_(std::move(terminal)) {
  if (n_states == 0 || n_actions == 0) throw std::invalid_argument("MDP needs at least one state and action");
  if (outcomes.size() != n_states * n_actions) throw std::invalid_argument("outcome table has wrong size");
  if (terminal_.size() != n_states) throw std::invalid_argument("terminal mask has wrong size");
  check_gamma(gamma_solve);

  for (std::size_t s = 0; s < n_states; ++s) {
    if (!terminal_[s]) continue;
    for (std::size_t a = 0; a < n_actions; ++a) {
      auto& out = outcomes[s * n_actions + a];
      if (out.empty()) out.push_back({s, 1.0, std::vector<double>(n_features, 0.0)});
    }
  }

  offsets_.reserve(n_states * n_actions + 1);
  offsets_.push_back(0);
  std::size_t total = 0;
  for (const auto& out : outcomes) total += out.size();
  features_.resize(idx(total), idx(n_features));
  transitions_.reserve(total);
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& out = outcomes[i];
    if (out.empty()) {
      std::ostringstream os;
      os << "state " << i / n_actions << " action " << i % n_actions << " has no outcomes";
      throw std::invalid_argument(os.str());
    }
    if (out.size() != 1) deterministic_ = false;
    for (const auto& o : out) {
      if (o.next >= n_states) throw std::invalid_argument("successor state out of range");
      if (o.features.size() != n_features) throw std::invalid_argument("feature vector has wrong length");
      const auto row = transitions_.size();
      for (std::size_t k = 0; k < n_features; ++k) features_(idx(row), idx(k)) = o.features[k];
      transitions_.push_back({o.next, o.prob, row});
    }
    offsets_.push_back(transitions_.size());
  }

  expected_features_ = RowMatrix::Zero(idx(n_states * n_actions), idx(n_features));
  for (std::size_t i = 0; i + 1 < offsets_.size(); ++i)
    for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k)
      expected_features_.row(idx(i)) += transitions_[k].prob * features_.row(idx(transitions_[k].row));

  if (start_dist.empty()) {
    std::size_t live = 0;
    for (bool t : terminal_) live += t ? 0 : 1;
    start_dist.assign(n_states, 0.0);
    if (live > 0)
      for (std::size_t s = 0; s < n_states; ++s)
        if (!terminal_[s]) start_dist[s] = 1.0 / static_cast<double>(live);
  } else if (start_dist.size() != n_states) {
    throw std::invalid_argument("start distribution has wrong size");
  }
  start_dist_ = std::move(start_dist);
}

Vector TabularMdp::transition_features(std::size_t s, std::size_t a, std::size_t next) const {
  for (const auto& t : transitions(s, a))
    if (t.next == next && t.prob > 0.0) return features(t).transpose();
  throw std::out_of_range("transition has zero probability");
}

double TabularMdp::transition_probability(std::size_t s, std::size_t a, std::size_t next) const {
  double p = 0.0;
  for (const auto& t : transitions(s, a))
    if (t.next == next) p += t.prob;
  return p;
}

RewardWeights::RewardWeights(Vector w) : w_(std::move(w)) {
  if (!w_.allFinite()) throw std::invalid_argument("reward weights must be finite");
}

RewardWeights::RewardWeights(std::initializer_list<double> w) : w_(idx(w.size())) {
  Eigen::Index i = 0;
  for (double x : w) w_[i++] = x;
  if (!w_.allFinite()) throw std::invalid_argument("reward weights must be finite");
}

Policy Policy::uniform(const TabularMdp& mdp) {
  return {Matrix::Constant(idx(mdp.n_states()), idx(mdp.n_actions()), 1.0 / static_cast<double>(mdp.n_actions()))};
}

Policy Policy::from_actions(const TabularMdp& mdp, const std::vector<std::size_t>& actions) {
  if (actions.size() != mdp.n_states()) throw std::invalid_argument("need one action per state");
  Policy pi{Matrix::Zero(idx(mdp.n_states()), idx(mdp.n_actions()))};
  for (std::size_t s = 0; s < actions.size(); ++s) {
    if (actions[s] >= mdp.n_actions()) throw std::invalid_argument("action out of range");
    pi.probs(idx(s), idx(actions[s])) = 1.0;
  }
  return pi;
}

Matrix q_from_v(const TabularMdp& mdp, const RewardWeights& w, const Vector& v, double gamma) {
  check_weights(mdp, w);
  const Vector r = expected_reward(mdp, w);
  Matrix q = Matrix::Zero(idx(mdp.n_states()), idx(mdp.n_actions()));
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    if (mdp.is_terminal(s)) continue;
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      double acc = r[idx(mdp.sa(s, a))];
      for (const auto& t : mdp.transitions(s, a)) acc += gamma * t.prob * v[idx(t.next)];
      q(idx(s), idx(a)) = acc;
    }
  }
  return q;
}

ValueSolution value_iteration(const TabularMdp& mdp, const RewardWeights& w, double gamma,
                              const SolverOptions& options) {
  check_weights(mdp, w);
  check_gamma(gamma);
  if (!(options.tol > 0.0)) throw std::invalid_argument("tolerance must be positive");

  constexpr std::size_t kJumpEvery = 50;
  const auto n = mdp.n_states();
  const auto na = mdp.n_actions();
  const Vector r = expected_reward(mdp, w);
  Vector v = Vector::Zero(idx(n));
  Vector next(idx(n));
  Matrix q = Matrix::Zero(idx(n), idx(na));

  ValueSolution sol;
  sol.gamma = gamma;
  for (std::size_t it = 1; it <= options.max_iterations; ++it) {
    for (std::size_t s = 0; s < n; ++s) {
      if (mdp.is_terminal(s)) {
        next[idx(s)] = 0.0;
        continue;
      }
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < na; ++a) {
        double acc = r[idx(mdp.sa(s, a))];
        for (const auto& t : mdp.transitions(s, a)) acc += gamma * t.prob * v[idx(t.next)];
        q(idx(s), idx(a)) = acc;
        best = std::max(best, acc);
      }
      next[idx(s)] = best;
    }
    const double residual = (next - v).cwiseAbs().maxCoeff();
    if (!std::isfinite(residual)) throw ConvergenceError("value iteration diverged");
    if (residual <= options.tol * std::max(1.0, next.cwiseAbs().maxCoeff())) {
      sol.v = next;
      sol.q = q;
      sol.residual = residual;
      sol.iterations = it;
      return sol;
    }
    v.swap(next);

    if (gamma < 1.0 && it % kJumpEvery == 0) {
      // Exact evaluation of the greedy policy; a lower bound on V* from which
      // subsequent sweeps increase monotonically.
      std::vector<std::size_t> greedy(n, 0);
      for (std::size_t s = 0; s < n; ++s) {
        Eigen::Index best = 0;
        q.row(idx(s)).maxCoeff(&best);
        greedy[s] = static_cast<std::size_t>(best);
      }
      try {
        v = policy_evaluation(mdp, Policy::from_actions(mdp, greedy), w, gamma, options);
      } catch (const ConvergenceError&) {
        // keep plain sweeps
      }
    }
  }
  std::ostringstream os;
  os << "value iteration did not converge within " << options.max_iterations << " iterations (gamma=" << gamma << ")";
  throw ConvergenceError(os.str());
}

Policy max_entropy_optimal_policy(const ValueSolution& sol, double tie_tol) {
  const auto n = sol.q.rows();
  const auto na = sol.q.cols();
  Policy pi{Matrix::Zero(n, na)};
  for (Eigen::Index s = 0; s < n; ++s) {
    const double best = sol.q.row(s).maxCoeff();
    const double cut = best - tie_tol * std::max(1.0, std::abs(best));
    int count = 0;
    for (Eigen::Index a = 0; a < na; ++a) count += sol.q(s, a) >= cut ? 1 : 0;
    for (Eigen::Index a = 0; a < na; ++a)
      if (sol.q(s, a) >= cut) pi.probs(s, a) = 1.0 / count;
  }
  return pi;
}

Vector policy_evaluation(const TabularMdp& mdp, const Policy& pi, const RewardWeights& w, double gamma,
                         const SolverOptions& options) {
  check_weights(mdp, w);
  check_gamma(gamma);
  check_policy(mdp, pi);
  const auto sys = build_system(mdp, pi, gamma);
  const Vector r = expected_reward(mdp, w);
  Matrix b(idx(sys.state_of.size()), 1);
  for (std::size_t i = 0; i < sys.state_of.size(); ++i) {
    const auto s = sys.state_of[i];
    double acc = 0.0;
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) acc += pi.probs(idx(s), idx(a)) * r[idx(mdp.sa(s, a))];
    b(idx(i), 0) = acc;
  }
  const Matrix x = solve_system(sys, b, gamma, options.tol);
  Vector v = Vector::Zero(idx(mdp.n_states()));
  for (std::size_t i = 0; i < sys.state_of.size(); ++i) v[idx(sys.state_of[i])] = x(idx(i), 0);
  return v;
}

SuccessorFeatures successor_features(const TabularMdp& mdp, const Policy& pi, double gamma,
                                     const SolverOptions& options) {
  check_gamma(gamma);
  check_policy(mdp, pi);
  const auto d = idx(mdp.n_features());
  const auto& phi = mdp.expected_features();
  const auto sys = build_system(mdp, pi, gamma);
  Matrix b = Matrix::Zero(idx(sys.state_of.size()), d);
  for (std::size_t i = 0; i < sys.state_of.size(); ++i) {
    const auto s = sys.state_of[i];
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      const double pa = pi.probs(idx(s), idx(a));
      if (pa != 0.0) b.row(idx(i)) += pa * phi.row(idx(mdp.sa(s, a)));
    }
  }
  const Matrix x = solve_system(sys, b, gamma, options.tol);

  SuccessorFeatures sf;
  sf.psi_v = RowMatrix::Zero(idx(mdp.n_states()), d);
  for (std::size_t i = 0; i < sys.state_of.size(); ++i) sf.psi_v.row(idx(sys.state_of[i])) = x.row(idx(i));
  sf.psi_q = RowMatrix::Zero(idx(mdp.n_states() * mdp.n_actions()), d);
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    if (mdp.is_terminal(s)) continue;
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      const auto row = idx(mdp.sa(s, a));
      sf.psi_q.row(row) = phi.row(row);
      for (const auto& t : mdp.transitions(s, a)) sf.psi_q.row(row) += gamma * t.prob * sf.psi_v.row(idx(t.next));
    }
  }
  return sf;
}

namespace {

double start_average(const TabularMdp& mdp, const Vector& v) {
  double acc = 0.0;
  for (std::size_t s = 0; s < mdp.n_states(); ++s) acc += mdp.start_dist()[s] * v[idx(s)];
  return acc;
}

}  // namespace

ReturnNormalizer::ReturnNormalizer(const TabularMdp& mdp, const RewardWeights& w_true)
    : mdp_(&mdp), w_true_(w_true) {
  solution_ = value_iteration(mdp, w_true, mdp.gamma_solve());
  const Policy opt = max_entropy_optimal_policy(solution_);
  optimal_ = start_average(mdp, policy_evaluation(mdp, opt, w_true, mdp.gamma_solve()));
  uniform_ = start_average(mdp, policy_evaluation(mdp, Policy::uniform(mdp), w_true, mdp.gamma_solve()));
  if (std::abs(optimal_ - uniform_) <= 1e-12 * std::max(1.0, std::abs(optimal_)))
    throw std::domain_error("normalized return undefined: optimal and uniform policies have equal return");
}

ScoredReturn ReturnNormalizer::score(const Policy& pi) const {
  ScoredReturn out;
  out.raw = start_average(*mdp_, policy_evaluation(*mdp_, pi, w_true_, mdp_->gamma_solve()));
  out.normalized = (out.raw - uniform_) / (optimal_ - uniform_);
  return out;
}

ScoredReturn normalized_mean_return(const TabularMdp& mdp, const Policy& pi, const RewardWeights& w_true) {
  return ReturnNormalizer(mdp, w_true).score(pi);
}

Policy greedy_policy_for(const TabularMdp& mdp, const RewardWeights& w, double tie_tol) {
  return max_entropy_optimal_policy(value_iteration(mdp, w, mdp.gamma_solve()), tie_tol);
}

std::vector<Diagnostic> validate_mdp(const TabularMdp& mdp) {
  std::vector<Diagnostic> out;
  auto report = [&](Diagnostic::Kind kind, std::size_t s, std::size_t a, std::string msg) {
    out.push_back({kind, s, a, std::move(msg)});
  };
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      double total = 0.0;
      for (const auto& t : mdp.transitions(s, a)) {
        total += t.prob;
        if (t.prob < 0.0) report(Diagnostic::Kind::NegativeProbability, s, a, "negative transition probability");
        const auto f = mdp.features(t);
        if (!f.allFinite()) report(Diagnostic::Kind::NonFiniteFeature, s, a, "non-finite feature value");
        if (mdp.is_terminal(s)) {
          if (t.next != s && t.prob > 0.0)
            report(Diagnostic::Kind::TerminalNotAbsorbing, s, a, "terminal state leaves itself");
          if (f.cwiseAbs().maxCoeff() != 0.0)
            report(Diagnostic::Kind::TerminalNonzeroFeature, s, a, "terminal self-loop has nonzero features");
        }
      }
      if (std::abs(total - 1.0) > 1e-12) {
        std::ostringstream os;
        os << "outgoing probabilities sum to " << total;
        report(Diagnostic::Kind::ProbabilitySum, s, a, os.str());
      }
    }
  }
  double start_total = 0.0;
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    const double p = mdp.start_dist()[s];
    start_total += p;
    if (p < 0.0) report(Diagnostic::Kind::StartDistribution, s, 0, "negative start probability");
    if (p > 0.0 && mdp.is_terminal(s)) report(Diagnostic::Kind::StartOnTerminal, s, 0, "start mass on terminal state");
  }
  if (std::abs(start_total - 1.0) > 1e-12) {
    std::ostringstream os;
    os << "start distribution sums to " << start_total;
    report(Diagnostic::Kind::StartDistribution, 0, 0, os.str());
  }
  return out;
}

}  // namespace prefrl
