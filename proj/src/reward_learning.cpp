#include "prefrl/reward_learning.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

namespace prefrl {

namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

// Loss of one sample and d loss / d z, where P = logistic(z). The clamp
// bounds the loss value only; the derivative is that of the unclamped
// log-likelihood so saturated mistakes still receive gradient.
double sample_loss(double z, double mu1, double* dz) {
  const double p = logistic(z);
  if (dz) *dz = p - mu1;
  if (p < kProbClamp || p > 1.0 - kProbClamp) {
    const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    return -(mu1 * std::log(pc) + (1.0 - mu1) * std::log1p(-pc));
  }
  return -(mu1 * log_logistic(z) + (1.0 - mu1) * log_logistic(-z));
}

}  // namespace

LearnerConfig partial_return_config() {
  LearnerConfig c;
  c.learning_rate = 2.0;
  c.epochs = 30000;
  c.keep_min_loss = false;
  return c;
}

LearnerConfig regret_config() {
  LearnerConfig c;
  c.learning_rate = 0.5;
  c.epochs = 5000;
  c.softmax_temp = 0.001;
  c.keep_min_loss = true;
  return c;
}

double xent_loss(const std::vector<double>& p, const std::vector<Mu>& mu) {
  if (p.empty() || p.size() != mu.size()) throw std::invalid_argument("xent_loss needs matching non-empty inputs");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(p[i], kProbClamp, 1.0 - kProbClamp);
    total -= mu[i][0] * std::log(pc) + mu[i][1] * std::log1p(-pc);
  }
  return total / static_cast<double>(p.size());
}

PartialReturnObjective::PartialReturnObjective(const PreferenceDataset& d, const TabularMdp& mdp,
                                               double gamma_tilde) {
  if (d.empty()) throw LearningError("cannot learn from an empty dataset");
  std::map<std::vector<double>, std::size_t> index;
  std::vector<std::vector<double>> rows;
  std::vector<double> counts;
  for (const auto& s : d.samples) {
    const Vector diff = segment_feature_sum(mdp, s.seg1, gamma_tilde) - segment_feature_sum(mdp, s.seg2, gamma_tilde);
    std::vector<double> key(diff.data(), diff.data() + diff.size());
    key.push_back(s.mu[0]);
    auto [it, fresh] = index.emplace(key, rows.size());
    if (fresh) {
      rows.push_back(std::move(key));
      counts.push_back(0.0);
    }
    counts[it->second] += 1.0;
  }
  const auto dim = mdp.n_features();
  x_.resize(idx(rows.size()), idx(dim));
  mu1_.resize(idx(rows.size()));
  count_.resize(idx(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < dim; ++k) x_(idx(i), idx(k)) = rows[i][k];
    mu1_[idx(i)] = rows[i][dim];
    count_[idx(i)] = counts[i];
  }
  total_ = static_cast<double>(d.size());
}

double PartialReturnObjective::evaluate(const Vector& w, Vector* grad) const {
  const Vector z = x_ * w;
  double loss = 0.0;
  Vector coef(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    double dz = 0.0;
    loss += count_[i] * sample_loss(z[i], mu1_[i], grad ? &dz : nullptr);
    coef[i] = count_[i] * dz / total_;
  }
  if (grad) *grad = x_.transpose() * coef;
  return loss / total_;
}

RegretObjective::RegretObjective(const PreferenceDataset& d, const TabularMdp& mdp, const PolicySet& ps, double temp)
    : n_policies_(ps.size()), temp_(temp) {
  if (d.empty()) throw LearningError("cannot learn from an empty dataset");
  if (ps.empty()) throw LearningError("regret learning needs a non-empty policy set");
  if (!(temp > 0.0)) throw LearningError("softmax temperature must be positive");

  // Items are value slots: state s for V~(s) at key s, (s, a) for Q~ at key n_states + sa.
  std::unordered_map<std::size_t, std::size_t> item_of;
  std::vector<std::size_t> item_keys;
  auto item = [&](std::size_t key) {
    auto [it, fresh] = item_of.emplace(key, item_keys.size());
    if (fresh) item_keys.push_back(key);
    return it->second;
  };
  offsets_.push_back(0);
  for (const auto& s : d.samples) {
    std::map<std::size_t, double> acc;
    auto add = [&](const Segment& seg, double sign) {
      for (std::size_t t = 0; t < seg.length(); ++t) {
        const auto st = seg.states[t];
        if (mdp.is_terminal(st)) continue;
        acc[item(st)] += sign;
        acc[item(mdp.n_states() + mdp.sa(st, seg.actions[t]))] -= sign;
      }
    };
    add(s.seg2, 1.0);
    add(s.seg1, -1.0);
    for (const auto& [k, c] : acc)
      if (c != 0.0) terms_.push_back({k, c});
    offsets_.push_back(terms_.size());
    mu1_.push_back(s.mu[0]);
  }

  const auto dim = mdp.n_features();
  psi_.resize(idx(item_keys.size() * n_policies_), idx(dim));
  for (std::size_t k = 0; k < item_keys.size(); ++k) {
    const auto key = item_keys[k];
    for (std::size_t p = 0; p < n_policies_; ++p) {
      const auto& sf = ps.sfs.entries[p];
      psi_.row(idx(k * n_policies_ + p)) =
          key < mdp.n_states() ? sf.psi_v.row(idx(key)) : sf.psi_q.row(idx(key - mdp.n_states()));
    }
  }
}

double RegretObjective::evaluate(const Vector& w, Vector* grad) const {
  const Vector x = psi_ * w;
  const auto n_items = static_cast<std::size_t>(x.size()) / n_policies_;
  std::vector<double> value(n_items);
  Vector dx = grad ? Vector(x.size()) : Vector();
  for (std::size_t k = 0; k < n_items; ++k)
    value[k] = softmax_average(x.data() + k * n_policies_, n_policies_, temp_,
                               grad ? dx.data() + k * n_policies_ : nullptr);

  const double n = static_cast<double>(mu1_.size());
  std::vector<double> alpha(grad ? n_items : 0, 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < mu1_.size(); ++i) {
    double z = 0.0;
    for (std::size_t j = offsets_[i]; j < offsets_[i + 1]; ++j) z += terms_[j].coef * value[terms_[j].item];
    double dz = 0.0;
    loss += sample_loss(z, mu1_[i], grad ? &dz : nullptr);
    if (grad)
      for (std::size_t j = offsets_[i]; j < offsets_[i + 1]; ++j) alpha[terms_[j].item] += dz / n * terms_[j].coef;
  }
  if (grad) {
    for (std::size_t k = 0; k < n_items; ++k)
      dx.segment(idx(k * n_policies_), idx(n_policies_)) *= alpha[k];
    *grad = psi_.transpose() * dx;
  }
  return loss / n;
}

LearnResult learn_partial_return(const PreferenceDataset& d, const TabularMdp& mdp, const LearnerConfig& config) {
  return minimize(PartialReturnObjective(d, mdp), config);
}

LearnResult learn_regret(const PreferenceDataset& d, const TabularMdp& mdp, const PolicySet& ps,
                         const LearnerConfig& config) {
  return minimize(RegretObjective(d, mdp, ps, config.softmax_temp), config);
}

nlohmann::json to_json(const LearnerConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"optimizer", c.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"softmax_temp", c.softmax_temp},
          {"keep_min_loss", c.keep_min_loss}};
}

LearnerConfig learner_config_from_json(const nlohmann::json& j, LearnerConfig c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  if (j.contains("optimizer")) {
    const auto o = j.at("optimizer").get<std::string>();
    if (o == "adam")
      c.optimizer = OptimizerKind::Adam;
    else if (o == "sgd")
      c.optimizer = OptimizerKind::Sgd;
    else
      throw std::invalid_argument("unknown optimizer '" + o + "'");
  }
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.softmax_temp = j.value("softmax_temp", c.softmax_temp);
  c.keep_min_loss = j.value("keep_min_loss", c.keep_min_loss);
  return c;
}

nlohmann::json weights_document(const std::string& schema, const std::vector<std::string>& names,
                                const LearnResult& r, const LearnerConfig& c, std::uint64_t seed) {
  std::vector<double> w(r.w.vec().data(), r.w.vec().data() + r.w.vec().size());
  return {{"format", "prefrl-weights"}, {"version", 1},          {"schema", schema},
          {"feature_names", names},     {"w", w},                {"config", to_json(c)},
          {"final_loss", r.final_loss}, {"best_loss", r.best_loss}, {"seed", seed}};
}

RewardWeights weights_from_document(const nlohmann::json& j) {
  if (j.value("format", std::string{}) != "prefrl-weights") throw std::invalid_argument("not a weights document");
  const auto w = j.at("w").get<std::vector<double>>();
  return RewardWeights(Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size())));
}

}  // namespace prefrl
