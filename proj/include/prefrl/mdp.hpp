#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace prefrl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Raised when an iterative solver hits its iteration cap, or when a policy
/// has no finite value (an improper policy evaluated without discounting).
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One possible result of taking an action: successor, probability, and the
/// reward feature vector phi(s, a, s').
struct Outcome {
  std::size_t next = 0;
  double prob = 0.0;
  std::vector<double> features;
};

/// Finite MDP with linear reward features. Immutable after construction.
///
/// Terminal states are explicit absorbing states: every action self-loops with
/// an all-zero feature vector. Structural problems (wrong sizes, successor out
/// of range) throw at construction; semantic problems such as probability rows
/// that do not sum to one are reported by validate_mdp() instead, so malformed
/// models can still be inspected.
class TabularMdp {
 public:
  struct Transition {
    std::size_t next;
    double prob;
    std::size_t row;  // index into the feature table
  };

  /// `outcomes` is indexed by s * n_actions + a. An empty `start_dist` means
  /// uniform over non-terminal states.
  TabularMdp(std::size_t n_states, std::size_t n_actions, std::size_t n_features,
             std::vector<std::vector<Outcome>> outcomes, std::vector<bool> terminal,
             std::vector<double> start_dist = {}, double gamma_solve = 0.999);

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  std::size_t n_features() const { return n_features_; }
  double gamma_solve() const { return gamma_solve_; }

  std::size_t sa(std::size_t s, std::size_t a) const { return s * n_actions_ + a; }

  std::span<const Transition> transitions(std::size_t s, std::size_t a) const {
    const auto i = sa(s, a);
    return {transitions_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }

  /// Feature vector of one stored transition.
  auto features(const Transition& t) const { return features_.row(static_cast<Eigen::Index>(t.row)); }

  /// phi(s, a, next); throws std::out_of_range when the transition has zero probability.
  Vector transition_features(std::size_t s, std::size_t a, std::size_t next) const;
  double transition_probability(std::size_t s, std::size_t a, std::size_t next) const;

  /// Expected feature vector E[phi(s, a, s')] per (s, a) row.
  const RowMatrix& expected_features() const { return expected_features_; }
  const RowMatrix& feature_table() const { return features_; }

  bool is_terminal(std::size_t s) const { return terminal_[s]; }
  const std::vector<bool>& terminal_mask() const { return terminal_; }
  const std::vector<double>& start_dist() const { return start_dist_; }

  /// True when every (s, a) has exactly one successor.
  bool deterministic() const { return deterministic_; }

 private:
  std::size_t n_states_;
  std::size_t n_actions_;
  std::size_t n_features_;
  double gamma_solve_;
  std::vector<std::size_t> offsets_;
  std::vector<Transition> transitions_;
  RowMatrix features_;
  RowMatrix expected_features_;
  std::vector<bool> terminal_;
  std::vector<double> start_dist_;
  bool deterministic_ = true;
};

/// Weight vector w defining the linear reward r(s, a, s') = phi(s, a, s') . w.
class RewardWeights {
 public:
  RewardWeights() = default;
  explicit RewardWeights(Vector w);
  RewardWeights(std::initializer_list<double> w);

  const Vector& vec() const { return w_; }
  std::size_t size() const { return static_cast<std::size_t>(w_.size()); }
  double operator[](std::size_t i) const { return w_[static_cast<Eigen::Index>(i)]; }
  RewardWeights scaled(double c) const { return RewardWeights(Vector(c * w_)); }

 private:
  Vector w_;
};

struct ValueSolution {
  Vector v;       // V*(s)
  Matrix q;       // Q*(s, a), n_states x n_actions
  double residual = 0.0;
  std::size_t iterations = 0;
  double gamma = 1.0;

  double advantage(std::size_t s, std::size_t a) const {
    return q(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) - v[static_cast<Eigen::Index>(s)];
  }
};

/// Stochastic policy: probs(s, a) = pi(a | s).
struct Policy {
  Matrix probs;

  static Policy uniform(const TabularMdp& mdp);
  /// Deterministic policy from one action per state.
  static Policy from_actions(const TabularMdp& mdp, const std::vector<std::size_t>& actions);
  bool operator==(const Policy& other) const { return probs == other.probs; }
};

struct SolverOptions {
  double tol = 1e-10;
  std::size_t max_iterations = 100000;
};

inline constexpr double kDefaultTieTol = 1e-9;

/// Optimal values by synchronous value iteration.
///
/// Stops when the max-norm Bellman residual is at most tol * max(1, |V|_inf).
/// With gamma < 1 the sweeps are periodically interleaved with an exact
/// evaluation of the current greedy policy, which leaves the fixed point
/// unchanged and removes the (1 - gamma)^-1 slowdown on long-horizon tasks.
/// Terminal states have value 0. Throws ConvergenceError at the iteration cap
/// and std::invalid_argument on a dimension mismatch or gamma outside (0, 1].
ValueSolution value_iteration(const TabularMdp& mdp, const RewardWeights& w, double gamma,
                              const SolverOptions& options = {});

/// Uniform over actions whose Q-value is within tie_tol * max(1, |V(s)|) of the
/// state's best Q-value. Terminal states get uniform over all actions.
Policy max_entropy_optimal_policy(const ValueSolution& sol, double tie_tol = kDefaultTieTol);

/// V^pi by direct solution of (I - gamma P_pi) v = r_pi over non-terminal states.
/// Throws ConvergenceError when the system is singular or the fixed-point
/// residual exceeds tol (an improper policy with gamma = 1).
Vector policy_evaluation(const TabularMdp& mdp, const Policy& pi, const RewardWeights& w, double gamma,
                         const SolverOptions& options = {});

/// Q^pi from V^pi: Q(s, a) = E[r + gamma V(s')].
Matrix q_from_v(const TabularMdp& mdp, const RewardWeights& w, const Vector& v, double gamma);

/// Successor features of a policy. psi_q rows are indexed by mdp.sa(s, a),
/// psi_v rows by state.
struct SuccessorFeatures {
  RowMatrix psi_q;
  RowMatrix psi_v;
};

struct SuccessorFeatureSet {
  std::vector<SuccessorFeatures> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

SuccessorFeatures successor_features(const TabularMdp& mdp, const Policy& pi, double gamma,
                                     const SolverOptions& options = {});

struct ScoredReturn {
  double raw = 0.0;         // sum_s D0(s) V^pi(s)
  double normalized = 0.0;  // (raw - V^U) / (V^* - V^U)
};

/// Caches the optimal and uniform-random anchors for one (MDP, true reward)
/// so that many policies can be scored cheaply.
class ReturnNormalizer {
 public:
  ReturnNormalizer(const TabularMdp& mdp, const RewardWeights& w_true);

  ScoredReturn score(const Policy& pi) const;
  double optimal_return() const { return optimal_; }
  double uniform_return() const { return uniform_; }
  const ValueSolution& optimal_solution() const { return solution_; }

 private:
  const TabularMdp* mdp_;
  RewardWeights w_true_;
  ValueSolution solution_;
  double optimal_ = 0.0;
  double uniform_ = 0.0;
};

/// Mean return under D0 at gamma_solve, normalized so the max-entropy optimal
/// policy scores 1 and the uniform policy scores 0. Throws std::domain_error
/// when the two anchors coincide.
ScoredReturn normalized_mean_return(const TabularMdp& mdp, const Policy& pi, const RewardWeights& w_true);

/// Max-entropy optimal policy of a reward, solved at the MDP's gamma_solve.
Policy greedy_policy_for(const TabularMdp& mdp, const RewardWeights& w, double tie_tol = kDefaultTieTol);

struct Diagnostic {
  enum class Kind {
    ProbabilitySum,
    NegativeProbability,
    TerminalNotAbsorbing,
    TerminalNonzeroFeature,
    StartDistribution,
    StartOnTerminal,
    NonFiniteFeature,
  };
  Kind kind;
  std::size_t state = 0;
  std::size_t action = 0;
  std::string message;
};

std::vector<Diagnostic> validate_mdp(const TabularMdp& mdp);

}  // namespace prefrl
