#pragma once

#include "prefrl/preference_models.hpp"
#include "prefrl/random.hpp"
#include "prefrl/segments.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace prefrl {

using Mu = std::array<double, 2>;

enum class SampleSource { Synthetic, Human };

struct PreferenceSample {
  Segment seg1;
  Segment seg2;
  Mu mu{0.5, 0.5};
  SampleSource source = SampleSource::Synthetic;
  std::string subject_id;
  std::string pair_id;
  std::optional<int> stage;
};

struct PreferenceDataset {
  std::vector<PreferenceSample> samples;
  std::string mdp_ref;
  std::size_t seg_len = 0;
  std::optional<std::uint64_t> seed;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

/// Ground truth used to label pairs.
struct LabelContext {
  const TabularMdp* mdp = nullptr;
  RewardWeights w;
  ValueSolution sol;

  static LabelContext solve(const TabularMdp& mdp, const RewardWeights& w);
};

/// Noiseless specs without the uniform-response wrapper give the argmax label
/// ((0.5, 0.5) on ties); everything else is a Bernoulli draw from the
/// preference probability.
Mu label_pair(const ModelSpec& spec, const Segment& seg1, const Segment& seg2, const LabelContext& ctx, Rng& rng);

/// Pairs of independently sampled segments. With include_early_term false,
/// segments that terminate before their final transition are resampled.
/// Throws std::runtime_error when resampling keeps failing.
std::vector<std::pair<Segment, Segment>> sample_segment_pairs(const TabularMdp& mdp, std::size_t n_pairs,
                                                              std::size_t seg_len, Rng& rng,
                                                              bool include_early_term = true);

/// Segment pairs come from stream (seed, 1) and labels from stream (seed, 2),
/// so datasets with the same seed share their pairs across model specs.
PreferenceDataset generate_dataset(const LabelContext& ctx, const ModelSpec& spec, std::size_t n_pairs,
                                   std::size_t seg_len, std::uint64_t seed, bool include_early_term = true);

/// Appends each sample with segments and mu swapped.
PreferenceDataset double_with_reversal(const PreferenceDataset& d);

/// Human CSV with header pair_id,subject_id,seg1,seg2,label[,stage]; labels
/// left, right, same, cant_tell. cant_tell rows are dropped.
PreferenceDataset load_human_csv(const std::string& path, const TabularMdp& mdp,
                                 std::optional<std::size_t> seg_len = std::nullopt);
PreferenceDataset parse_human_csv(const std::string& text, const TabularMdp& mdp,
                                  std::optional<std::size_t> seg_len = std::nullopt);

std::string label_token(const Mu& mu);
std::optional<Mu> mu_from_label(const std::string& label);

/// CSV rows in the human schema; labels derived from mu.
std::string dataset_to_csv(const PreferenceDataset& d);

nlohmann::json dataset_to_json(const PreferenceDataset& d);
PreferenceDataset dataset_from_json(const nlohmann::json& j, const TabularMdp& mdp);

/// Disjoint random partitions whose sizes differ by at most one.
std::vector<PreferenceDataset> split_partitions(const PreferenceDataset& d, std::size_t k, Rng& rng);

struct Fold {
  PreferenceDataset train;
  PreferenceDataset test;
};
/// k (train, test) folds; every sample is in exactly one test set.
std::vector<Fold> split_kfold(const PreferenceDataset& d, std::size_t k, Rng& rng);

/// Splits one CSV line, honoring double-quoted fields.
std::vector<std::string> split_csv_line(const std::string& line);
std::string csv_quote(const std::string& field);

}  // namespace prefrl
