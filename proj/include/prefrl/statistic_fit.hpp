#pragma once

#include "prefrl/preference_data.hpp"
#include "prefrl/reward_learning.hpp"

#include <optional>
#include <vector>

namespace prefrl {

enum class StatFitKind {
  Scale,   // one scale factor on a model's utility difference
  LogLin,  // three weights on (V_start, partial return, V_end) differences
};

struct StatFitSpec {
  StatFitKind kind = StatFitKind::Scale;
  /// Model whose utility is scaled (Scale only).
  ModelKind model = ModelKind::PartialReturn;
  /// Also fit the uniform-response constant c.
  bool uniform_response = false;
};

struct StatFitResult {
  std::vector<double> params;  // scale, or the three loglin weights
  std::optional<double> c;
  double train_loss = 0.0;
  double test_loss = 0.0;
};

/// SGD, rate 0.5, 3000 full-batch iterations.
LearnerConfig statistic_fit_config();

/// Per-sample regressors under the ground truth: the model's utility
/// difference (Scale) or the (V_start, partial return, discounted V_end)
/// differences (LogLin).
std::vector<std::vector<double>> statistic_features(const PreferenceDataset& d, const StatFitSpec& spec,
                                                    const LabelContext& ctx);

/// Fits the statistic model on `train` and reports the mean cross-entropy on
/// `test`. Regressors are divided by their mean absolute training value during
/// the fit; reported parameters are in original units. Parameters start at
/// zero. With uniform_response, runs start from logistic(c) in
/// {0.01, 0.1, 0.5} and the run with the lowest test loss is kept. Throws
/// LearningError when every training label is a tie.
StatFitResult fit_statistic_model(const PreferenceDataset& train, const PreferenceDataset& test,
                                  const StatFitSpec& spec, const LabelContext& ctx,
                                  const LearnerConfig& config = statistic_fit_config());

/// Loss/gradient of a statistic model: P = logistic(theta . x), optionally
/// wrapped by the uniform-response constant, which is the last parameter.
class StatisticObjective {
 public:
  StatisticObjective(std::vector<std::vector<double>> x, std::vector<double> mu1, bool uniform_response);
  double evaluate(const Vector& params, Vector* grad = nullptr) const;
  std::size_t dim() const { return k_ + (uniform_ ? 1 : 0); }

 private:
  std::vector<std::vector<double>> x_;
  std::vector<double> mu1_;
  std::size_t k_;
  bool uniform_;
};

}  // namespace prefrl
