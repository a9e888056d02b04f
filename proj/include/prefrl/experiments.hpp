#pragma once

#include "prefrl/domains.hpp"
#include "prefrl/policy_set.hpp"
#include "prefrl/preference_data.hpp"
#include "prefrl/rank_stats.hpp"
#include "prefrl/reward_learning.hpp"
#include "prefrl/statistic_fit.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace prefrl {

inline constexpr double kNearOptimal = 0.9;

/// One learning run scored against the ground truth.
struct ResultRow {
  std::size_t mdp_id = 0;
  std::string condition;  // experiment-specific grouping, e.g. "early_term=1" or "k=5"
  std::string generator;  // model that produced the labels, or "human"
  std::string learner;
  std::size_t dataset_size = 0;
  std::size_t seg_len = 0;
  std::uint64_t seed = 0;
  double raw_return = 0.0;
  double normalized_return = 0.0;
  bool near_optimal = false;
  bool better_than_random = false;
  std::string error;  // non-empty when learning or scoring failed
  std::vector<double> learned_w;

  bool ok() const { return error.empty(); }
};

struct ExperimentResult {
  std::string name;
  std::vector<ResultRow> rows;

  /// One line per row; learned weights are ';'-separated.
  std::string to_csv() const;
};

/// Scores a learned reward by the normalized return of its max-entropy
/// optimal policy. Fills raw/normalized and the two threshold flags.
void score_row(ResultRow& row, const ReturnNormalizer& normalizer, const TabularMdp& mdp, const RewardWeights& w);

/// Seed for one unit of work, derived from a root seed and tags.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 means hardware
/// concurrency). Exceptions are rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

using ProgressFn = std::function<void(const std::string&)>;

/// Generator and learner of one sweep cell. Mixed cells use different kinds.
struct SweepCell {
  ModelSpec generator;
  ModelKind learner = ModelKind::PartialReturn;
};

struct LearnerSettings {
  LearnerConfig partial_return = partial_return_config();
  LearnerConfig regret = regret_config();
  PolicySetOptions policy_set;
};

struct SweepConfig {
  std::size_t n_mdps = 30;
  std::vector<std::size_t> dataset_sizes{30, 300, 3000};
  std::vector<std::size_t> seg_lens{3};
  std::vector<SweepCell> cells;
  /// Each value runs the whole grid once; false resamples segments that
  /// terminate before their final transition.
  std::vector<bool> include_early_term{true};
  RandomMdpParams mdp_params;
  LearnerSettings learners;
  std::uint64_t seed = 0;
  std::size_t threads = 0;

  /// Matched noiseless and stochastic cells for both models.
  static std::vector<SweepCell> default_cells();
};

/// Random-MDP sweep: one row per (MDP, early-term flag, segment length,
/// dataset size, cell). Learner failures become error rows.
ExperimentResult run_random_mdp_sweep(const SweepConfig& config, const ProgressFn& progress = {});

/// Learns from `d` (doubled first) with the given model and scores the
/// result on `mdp`. `ps` is required for regret learning.
ResultRow learn_and_score(const PreferenceDataset& d, ModelKind learner, const TabularMdp& mdp,
                          const ReturnNormalizer& normalizer, const PolicySet* ps, const LearnerSettings& settings);

struct RiskCondition {
  double r_win = 1.0;
  double r_lose = -50.0;
};

struct RiskTableConfig {
  std::vector<RiskCondition> conditions{{1.0, -50.0}, {1000.0, -50.0}, {100.0, -1.0}, {100.0, -1000.0}};
  std::size_t seeds = 10;
  std::size_t n_pairs = 3000;
  std::size_t seg_len = 3;
  LearnerSettings learners;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
};

/// Stochastic risk MDPs: each generator (noiseless or stochastic, regret or
/// partial return) labels a dataset that is learned with the matching model.
/// Row condition is "r_win=...,r_lose=...".
ExperimentResult run_risk_table(const RiskTableConfig& config, const ProgressFn& progress = {});

struct HumanEvalFilters {
  bool stage1_only = false;
  bool drop_early_terminating = false;
};

/// Applies the filters; throws std::invalid_argument when stage filtering is
/// requested and some sample has no stage.
PreferenceDataset filter_dataset(const PreferenceDataset& d, const HumanEvalFilters& filters);

struct HumanEvalConfig {
  std::vector<std::size_t> k_list{1, 2, 5, 10, 20, 50, 100};
  HumanEvalFilters filters;
  LearnerSettings learners;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
};

/// Splits the (filtered) dataset into k random partitions for each k, learns
/// each partition with both models and scores on the task. Row mdp_id is the
/// partition index, condition "k=<k>". Throws std::invalid_argument when
/// k exceeds the dataset size.
ExperimentResult run_human_partition_eval(const PreferenceDataset& d, const Domain& task, const HumanEvalConfig& config,
                                          const ProgressFn& progress = {});

struct GeneralizationConfig {
  std::size_t n_mdps = 100;
  RandomMdpParams mdp_params;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
};

/// Scores every learned weight vector of `learned` (rows with learned_w) on
/// n_mdps random MDPs that share `schema` and its ground-truth reward. Row
/// mdp_id is the generated MDP; condition and learner are copied from the
/// source row. Throws std::invalid_argument on a schema mismatch.
ExperimentResult run_generalization(const ExperimentResult& learned, const FeatureSchema& schema,
                                    const GeneralizationConfig& config, const ProgressFn& progress = {});

struct LikelihoodRow {
  std::string model;
  double mean_test_loss = 0.0;
  std::vector<double> mean_params;
  std::optional<double> mean_uniform_prob;  // mean logistic(c)
};

struct LikelihoodConfig {
  std::size_t folds = 10;
  std::uint64_t seed = 0;
  LearnerConfig fit = statistic_fit_config();
};

/// k-fold cross-validated test loss of the uninformed model, partial-return
/// and regret scale fits, the logistic-linear fit, and each of the fitted
/// models with a uniform-response constant.
std::vector<LikelihoodRow> run_likelihood_cv(const PreferenceDataset& d, const LabelContext& ctx,
                                             const LikelihoodConfig& config = {});

/// Aggregates per (condition, generator, learner, dataset_size, seg_len):
/// runs, errors, near-optimal and better-than-random percentages, mean
/// normalized return.
nlohmann::json summarize_rows(const ExperimentResult& r);

/// Per dataset size: MDP counts where both, only regret, only partial return
/// or neither learner was near optimal, for rows sharing condition, seg_len
/// and generator noise. Learners are matched by generator kind.
nlohmann::json outcome_counts(const ExperimentResult& r);

/// Signed-rank comparison of regret vs partial-return normalized returns
/// (clipped to [-1, 1]) per (condition, dataset size, noise).
nlohmann::json paired_tests(const ExperimentResult& r);

/// Near-optimal proportions of the risk table, one entry per generator row
/// and condition.
nlohmann::json risk_table_summary(const ExperimentResult& r);

nlohmann::json likelihood_summary(const std::vector<LikelihoodRow>& rows);

}  // namespace prefrl
