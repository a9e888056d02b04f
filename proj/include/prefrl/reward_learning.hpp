#pragma once

#include "prefrl/policy_set.hpp"
#include "prefrl/preference_data.hpp"

#include <json.hpp>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace prefrl {

enum class OptimizerKind { Adam, Sgd };

struct LearnerConfig {
  double learning_rate = 2.0;
  std::size_t epochs = 30000;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Regret learner only.
  double softmax_temp = 0.001;
  /// Return the weights with the lowest loss seen instead of the final ones.
  bool keep_min_loss = false;
  /// Keep every k-th loss in the history (0 disables the history).
  std::size_t history_stride = 0;
};

LearnerConfig partial_return_config();
LearnerConfig regret_config();

struct LearnResult {
  RewardWeights w;
  double final_loss = 0.0;
  double best_loss = 0.0;
  std::size_t best_epoch = 0;
  std::vector<double> loss_history;
};

class LearningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kProbClamp = 1e-12;

/// Mean cross-entropy of predicted P(sigma1 > sigma2) against mu, with P
/// clamped to [1e-12, 1 - 1e-12].
double xent_loss(const std::vector<double>& p, const std::vector<Mu>& mu);

/// Loss and gradient of the partial-return model with respect to w. Identical
/// (feature difference, mu) rows are merged.
class PartialReturnObjective {
 public:
  PartialReturnObjective(const PreferenceDataset& d, const TabularMdp& mdp, double gamma_tilde = 1.0);
  double evaluate(const Vector& w, Vector* grad = nullptr) const;
  std::size_t dim() const { return static_cast<std::size_t>(x_.cols()); }
  std::size_t unique_rows() const { return static_cast<std::size_t>(x_.rows()); }

 private:
  RowMatrix x_;   // feature-sum differences
  Vector mu1_;
  Vector count_;
  double total_ = 0.0;
};

/// Loss and gradient of the successor-feature regret approximation: per-step
/// terms V~(s_t) - Q~(s_t, a_t) summed per segment and differenced inside the
/// logistic. Terminal states contribute nothing.
class RegretObjective {
 public:
  RegretObjective(const PreferenceDataset& d, const TabularMdp& mdp, const PolicySet& ps, double temp);
  double evaluate(const Vector& w, Vector* grad = nullptr) const;
  std::size_t dim() const { return static_cast<std::size_t>(psi_.cols()); }

 private:
  struct Term {
    std::size_t item;
    double coef;
  };
  std::size_t n_policies_;
  double temp_;
  RowMatrix psi_;  // row item * n_policies + p
  std::vector<std::size_t> offsets_;
  std::vector<Term> terms_;  // per sample: sum coef * value(item) is regret(seg2) - regret(seg1)
  std::vector<double> mu1_;
};

/// Full-batch first-order minimization of obj.evaluate(w, &grad) starting
/// from w = w0 (zero when empty). The loss after the last update is included
/// in the minimum-loss search.
template <class Objective>
LearnResult minimize(const Objective& obj, const LearnerConfig& config, Vector w0 = {}) {
  if (config.epochs == 0 || !(config.learning_rate > 0.0)) throw LearningError("learner needs positive epochs and rate");
  const auto d = static_cast<Eigen::Index>(obj.dim());
  Vector w = w0.size() == d ? w0 : Vector::Zero(d);
  Vector g(d);
  Vector m = Vector::Zero(d);
  Vector v = Vector::Zero(d);
  LearnResult out;
  out.best_loss = std::numeric_limits<double>::infinity();
  Vector best = w;
  double b1t = 1.0;
  double b2t = 1.0;
  for (std::size_t epoch = 0;; ++epoch) {
    const bool last = epoch == config.epochs;
    const double loss = obj.evaluate(w, last ? nullptr : &g);
    if (!std::isfinite(loss) || (!last && !g.allFinite()))
      throw LearningError("loss diverged at epoch " + std::to_string(epoch) + " (learning rate " +
                          std::to_string(config.learning_rate) + ")");
    if (config.history_stride && epoch % config.history_stride == 0) out.loss_history.push_back(loss);
    if (loss < out.best_loss) {
      out.best_loss = loss;
      out.best_epoch = epoch;
      best = w;
    }
    if (last) {
      out.final_loss = loss;
      break;
    }
    if (config.optimizer == OptimizerKind::Sgd) {
      w -= config.learning_rate * g;
      continue;
    }
    b1t *= config.beta1;
    b2t *= config.beta2;
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
    const Vector step = (m / (1.0 - b1t)).array() / ((v / (1.0 - b2t)).array().sqrt() + config.eps);
    w -= config.learning_rate * step;
  }
  out.w = RewardWeights(config.keep_min_loss ? best : w);
  return out;
}

/// Cross-entropy reward learning under the partial-return model. Callers
/// double the dataset beforehand.
LearnResult learn_partial_return(const PreferenceDataset& d, const TabularMdp& mdp,
                                 const LearnerConfig& config = partial_return_config());

/// Cross-entropy reward learning under the regret model with the
/// successor-feature approximation.
LearnResult learn_regret(const PreferenceDataset& d, const TabularMdp& mdp, const PolicySet& ps,
                         const LearnerConfig& config = regret_config());

nlohmann::json to_json(const LearnerConfig& c);
LearnerConfig learner_config_from_json(const nlohmann::json& j, LearnerConfig base);

/// Learned-weights document: schema, feature names, w, config, losses, seed.
nlohmann::json weights_document(const std::string& schema, const std::vector<std::string>& names,
                                const LearnResult& r, const LearnerConfig& c, std::uint64_t seed);
RewardWeights weights_from_document(const nlohmann::json& j);

}  // namespace prefrl
