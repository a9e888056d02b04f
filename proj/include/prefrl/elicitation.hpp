#pragma once

#include "prefrl/domains.hpp"
#include "prefrl/experiments.hpp"

#include <json.hpp>

#include <condition_variable>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace prefrl {

struct ElicitationPair {
  Segment left;
  Segment right;
  /// "stratified", "terminal_vs_nonterminal" or "shifted".
  std::string kind;
  /// Shifted pairs share a group with the unshifted pair they came from.
  std::optional<std::size_t> group;
};

/// Coordinate bin of a pair: signed bins of the partial-return and
/// state-value-change differences under the ground truth.
std::pair<int, int> pair_bin(const TabularMdp& mdp, const LabelContext& ctx, const Segment& a, const Segment& b);

/// Pool of length-seg_len pairs. Most pairs are drawn round-robin across
/// (partial-return difference, value-change difference) bins; the rest are
/// terminal-vs-nonterminal pairs and triples built from a pair whose first
/// segment terminates on its final transition plus its one- and two-step
/// shifted versions. Pair order and sides are shuffled. Throws
/// std::runtime_error when too few distinct segments can be found.
std::vector<ElicitationPair> build_elicitation_pool(const Domain& task, Rng& rng, std::size_t n_pairs,
                                                    std::size_t seg_len = 3);

struct SessionOptions {
  std::size_t n_pairs = 40;
  std::size_t seg_len = 3;
  std::size_t relearn_every = 10;
  bool learn_partial_return = false;
  std::uint64_t seed = 0;
  LearnerSettings learners;
  /// Event log path; empty disables persistence.
  std::string log_path;
  /// Run relearning on a background thread. When false, submit() learns
  /// before returning.
  bool background = true;
};

struct SubmitResult {
  std::size_t collected = 0;       // acknowledged submissions
  std::size_t learning_size = 0;   // submissions used for learning (cant_tell excluded)
  bool relearn_scheduled = false;
};

/// Labeling session over a fixed pool. Mutations are serialized by a mutex;
/// relearning runs on a worker over a snapshot of the collected data, and
/// when several relearns queue up only the newest snapshot is learned.
class Session {
 public:
  Session(std::string id, std::shared_ptr<const Domain> task, std::shared_ptr<const PolicySet> ps,
          SessionOptions options);
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const std::string& id() const { return id_; }
  std::size_t pool_size() const { return pool_.size(); }
  const std::vector<ElicitationPair>& pool() const { return pool_; }

  /// Pending pair with progress, or {"done": true} once the pool is exhausted.
  nlohmann::json next_pair() const;
  /// Throws std::invalid_argument on an unknown label and std::logic_error
  /// when no pair is pending.
  SubmitResult submit(const std::string& label);
  /// {"has_model": false} before the first relearn completes.
  nlohmann::json current_model() const;
  /// Every acknowledged submission, cant_tell included, in the human CSV layout.
  std::string export_csv() const;
  /// Learning dataset (cant_tell excluded).
  PreferenceDataset dataset() const;
  std::optional<RewardWeights> current_w() const;
  std::size_t relearn_count() const;
  /// Blocks until no relearn is running or queued.
  void wait_idle() const;

  /// Rebuilds a session from its event log and relearns synchronously.
  static std::unique_ptr<Session> replay(const std::string& log_path, std::shared_ptr<const Domain> task,
                                         std::shared_ptr<const PolicySet> ps, LearnerSettings learners = {});

 private:
  struct Event {
    std::size_t index;
    std::string label;
  };
  struct Model {
    RewardWeights w;
    std::optional<RewardWeights> w_partial;
    std::vector<double> loss_history;
    double final_loss = 0.0;
    std::size_t trained_on = 0;
  };

  void write_header();
  void append_event(const Event& e);
  PreferenceDataset snapshot_locked() const;
  Model learn(const PreferenceDataset& d) const;
  void worker_loop();

  std::string id_;
  std::shared_ptr<const Domain> task_;
  std::shared_ptr<const PolicySet> ps_;
  SessionOptions options_;
  std::vector<ElicitationPair> pool_;

  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
  std::vector<Event> events_;
  std::optional<Model> model_;
  std::size_t relearns_ = 0;
  std::optional<PreferenceDataset> queued_;
  bool busy_ = false;
  bool stopping_ = false;
  std::string last_error_;
  std::thread worker_;
};

/// Per-cell summary of a reward on a grid task: value and mean one-step
/// reward under `w`, and greedy actions. Arrays are row-major over the grid.
nlohmann::json grid_model_payload(const Domain& task, const RewardWeights& w);

}  // namespace prefrl
