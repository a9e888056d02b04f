#include "prefrl/statistic_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace prefrl {

LearnerConfig statistic_fit_config() {
  LearnerConfig c;
  c.learning_rate = 0.5;
  c.epochs = 3000;
  c.optimizer = OptimizerKind::Sgd;
  c.keep_min_loss = false;
  return c;
}

std::vector<std::vector<double>> statistic_features(const PreferenceDataset& d, const StatFitSpec& spec,
                                                    const LabelContext& ctx) {
  std::vector<std::vector<double>> x;
  x.reserve(d.size());
  ModelSpec m;
  m.kind = spec.model;
  for (const auto& s : d.samples) {
    const auto a = segment_stats(*ctx.mdp, s.seg1, ctx.w, ctx.sol);
    const auto b = segment_stats(*ctx.mdp, s.seg2, ctx.w, ctx.sol);
    if (spec.kind == StatFitKind::Scale) {
      x.push_back({model_utility(m, a) - model_utility(m, b)});
    } else {
      const double end_a = a.v_start - a.partial_return - a.regret_d;
      const double end_b = b.v_start - b.partial_return - b.regret_d;
      x.push_back({a.v_start - b.v_start, a.partial_return - b.partial_return, end_a - end_b});
    }
  }
  return x;
}

StatisticObjective::StatisticObjective(std::vector<std::vector<double>> x, std::vector<double> mu1,
                                       bool uniform_response)
    : x_(std::move(x)), mu1_(std::move(mu1)), k_(x_.empty() ? 0 : x_.front().size()), uniform_(uniform_response) {
  if (x_.empty()) throw LearningError("statistic fit needs at least one sample");
}

double StatisticObjective::evaluate(const Vector& params, Vector* grad) const {
  const double u = uniform_ ? logistic(params[static_cast<Eigen::Index>(k_)]) : 0.0;
  if (grad) grad->setZero(static_cast<Eigen::Index>(dim()));
  double loss = 0.0;
  for (std::size_t i = 0; i < x_.size(); ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < k_; ++j) z += params[static_cast<Eigen::Index>(j)] * x_[i][j];
    const double sz = logistic(z);
    const double p = (1.0 - u) * sz + 0.5 * u;
    const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    const double mu1 = mu1_[i];
    loss -= mu1 * std::log(pc) + (1.0 - mu1) * std::log1p(-pc);
    if (!grad) continue;
    // d loss / d p, then chain through z and c.
    const double dp = -mu1 / pc + (1.0 - mu1) / (1.0 - pc);
    const double dz = uniform_ ? dp * (1.0 - u) * sz * (1.0 - sz) : sz - mu1;
    for (std::size_t j = 0; j < k_; ++j) (*grad)[static_cast<Eigen::Index>(j)] += dz * x_[i][j];
    if (uniform_) (*grad)[static_cast<Eigen::Index>(k_)] += dp * u * (1.0 - u) * (0.5 - sz);
  }
  const double n = static_cast<double>(x_.size());
  if (grad) *grad /= n;
  return loss / n;
}

StatFitResult fit_statistic_model(const PreferenceDataset& train, const PreferenceDataset& test,
                                  const StatFitSpec& spec, const LabelContext& ctx, const LearnerConfig& config) {
  if (train.empty() || test.empty()) throw LearningError("statistic fit needs non-empty train and test sets");
  if (std::all_of(train.samples.begin(), train.samples.end(), [](const auto& s) { return s.mu[0] == 0.5; }))
    throw LearningError("every training label is a tie");
  std::vector<double> mu_train;
  std::vector<double> mu_test;
  for (const auto& s : train.samples) mu_train.push_back(s.mu[0]);
  for (const auto& s : test.samples) mu_test.push_back(s.mu[0]);
  auto x_train = statistic_features(train, spec, ctx);
  auto x_test = statistic_features(test, spec, ctx);
  const std::size_t k = spec.kind == StatFitKind::Scale ? 1 : 3;

  // Fixed-rate gradient descent oscillates on raw value differences (tens to
  // hundreds), so the fit runs on regressors divided by their mean absolute
  // value and the parameters are mapped back afterwards. The model and its
  // optimum are unchanged.
  std::vector<double> unit(k, 0.0);
  for (const auto& x : x_train)
    for (std::size_t j = 0; j < k; ++j) unit[j] += std::abs(x[j]);
  for (auto& u : unit) u = u > 0.0 ? u / static_cast<double>(x_train.size()) : 1.0;
  for (auto* xs : {&x_train, &x_test})
    for (auto& x : *xs)
      for (std::size_t j = 0; j < k; ++j) x[j] /= unit[j];

  StatisticObjective train_obj(std::move(x_train), mu_train, spec.uniform_response);
  StatisticObjective test_obj(std::move(x_test), mu_test, spec.uniform_response);

  std::vector<double> starts{0.0};
  if (spec.uniform_response)
    starts = {std::log(0.01 / 0.99), std::log(0.1 / 0.9), 0.0};  // logistic(c) = 0.01, 0.1, 0.5

  StatFitResult best;
  best.test_loss = std::numeric_limits<double>::infinity();
  for (double c0 : starts) {
    Vector w0 = Vector::Zero(static_cast<Eigen::Index>(train_obj.dim()));
    if (spec.uniform_response) w0[static_cast<Eigen::Index>(k)] = c0;
    const auto r = minimize(train_obj, config, w0);
    const double test_loss = test_obj.evaluate(r.w.vec());
    if (test_loss < best.test_loss) {
      best.test_loss = test_loss;
      best.train_loss = r.final_loss;
      best.params.resize(k);
      for (std::size_t j = 0; j < k; ++j) best.params[j] = r.w[j] / unit[j];
      best.c = spec.uniform_response ? std::optional<double>(r.w[k]) : std::nullopt;
    }
  }
  return best;
}

}  // namespace prefrl
