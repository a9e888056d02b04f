#include "helpers.hpp"

#include "prefrl/reward_learning.hpp"

#include <doctest.h>

using namespace prefrl;
using namespace prefrl::test;

namespace {

template <class Objective>
double gradient_error(const Objective& obj, const Vector& w) {
  Vector g(w.size());
  obj.evaluate(w, &g);
  Vector fd(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(w[i]));
    Vector hi = w;
    Vector lo = w;
    hi[i] += h;
    lo[i] -= h;
    fd[i] = (obj.evaluate(hi) - obj.evaluate(lo)) / (2 * h);
  }
  return (fd - g).cwiseAbs().maxCoeff() / std::max(g.cwiseAbs().maxCoeff(), 1e-6);
}

PreferenceDataset labeled(const Domain& d, const ModelSpec& spec, std::size_t n, std::uint64_t seed) {
  return generate_dataset(LabelContext::solve(d.mdp, d.schema.ground_truth), spec, n, 3, seed);
}

LearnerConfig quick(LearnerConfig c, std::size_t epochs) {
  c.epochs = epochs;
  return c;
}

}  // namespace

TEST_CASE("analytic gradients match central differences") {
  auto rng = make_rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const auto d = sample_random_mdp(rng, small_mdp_params());
    const auto data = double_with_reversal(labeled(d, partial_return_model(), 40, static_cast<std::uint64_t>(trial)));
    const auto w = random_weights(rng, d.mdp.n_features(), 1.0);

    const PartialReturnObjective pr(data, d.mdp);
    CHECK(gradient_error(pr, w.vec()) < 1e-5);
    const PartialReturnObjective pr_disc(data, d.mdp, 0.7);
    CHECK(gradient_error(pr_disc, w.vec()) < 1e-5);

    std::vector<Policy> pols{Policy::uniform(d.mdp)};
    for (int k = 0; k < 4; ++k) pols.push_back(random_deterministic_policy(d.mdp, rng));
    const auto ps = policy_set_from_policies(d.mdp, pols);
    // Random policies rarely terminate, so successor features reach ~1e3;
    // small weights keep predictions away from the probability clamp.
    for (double temp : {0.5, 5.0}) {
      const RegretObjective rg(data, d.mdp, ps, temp);
      CHECK(gradient_error(rg, 0.01 * w.vec()) < 1e-5);
    }
  }
}

TEST_CASE("cross-entropy values") {
  CHECK(xent_loss({0.5, 0.5}, {Mu{1, 0}, Mu{0.5, 0.5}}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(xent_loss({1.0}, {Mu{0, 1}}) == doctest::Approx(-std::log(kProbClamp)).epsilon(1e-4));
  CHECK(xent_loss({0.9}, {Mu{1, 0}}) == doctest::Approx(-std::log(0.9)));

  const auto task = default_delivery_task();
  const auto data = double_with_reversal(labeled(task, partial_return_model(), 50, 1));
  const PartialReturnObjective pr(data, task.mdp);
  CHECK(pr.evaluate(Vector::Zero(6)) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("a coin-only difference learns a positive coin weight") {
  const auto task = default_delivery_task();
  PreferenceDataset d;
  const auto with_coin = make_segment(task.mdp, {2, 3}, {kRight});
  const auto without = make_segment(task.mdp, {1, 2}, {kRight});
  for (int i = 0; i < 10; ++i) d.samples.push_back({with_coin, without, {1, 0}});
  const auto r = learn_partial_return(double_with_reversal(d), task.mdp, quick(partial_return_config(), 200));
  CHECK(r.w[2] > 0.0);
  for (std::size_t k : {0, 1, 3, 4, 5}) CHECK(r.w[k] == 0.0);
  CHECK(r.final_loss < 0.01);
}

TEST_CASE("a constant per-step shift has no gradient on non-terminating data") {
  const auto task = default_delivery_task();
  const auto ctx = LabelContext::solve(task.mdp, task.schema.ground_truth);
  PreferenceDataset data;
  for (const auto& s : generate_dataset(ctx, partial_return_model(), 300, 3, 2, false).samples)
    if (!s.seg1.term_index && !s.seg2.term_index) data.samples.push_back(s);
  REQUIRE(data.size() > 200);
  data = double_with_reversal(data);
  // Every non-terminal transition activates exactly one surface feature.
  Vector u = Vector::Zero(6);
  u[0] = u[1] = 1.0;
  auto rng = make_rng(3);
  const PartialReturnObjective pr(data, task.mdp);
  for (int i = 0; i < 5; ++i) {
    Vector g(6);
    pr.evaluate(random_weights(rng, 6, 2.0).vec(), &g);
    CHECK(std::abs(g.dot(u)) < 1e-12);
  }
}

TEST_CASE("learner contracts") {
  const auto task = default_delivery_task();
  const auto ps = policy_set_from_policies(task.mdp, {Policy::uniform(task.mdp)});
  SUBCASE("empty data is rejected") {
    CHECK_THROWS_AS(learn_partial_return(PreferenceDataset{}, task.mdp), LearningError);
    CHECK_THROWS_AS(learn_regret(PreferenceDataset{}, task.mdp, ps), LearningError);
    CHECK_THROWS_AS(learn_regret(labeled(task, regret_model(), 5, 1), task.mdp, PolicySet{}), std::exception);
  }
  SUBCASE("all-tie labels keep the loss at ln 2") {
    auto data = labeled(task, regret_model(), 30, 4);
    for (auto& s : data.samples) s.mu = {0.5, 0.5};
    data = double_with_reversal(data);
    const auto pr = learn_partial_return(data, task.mdp, quick(partial_return_config(), 300));
    CHECK(std::abs(pr.final_loss - std::log(2.0)) < 1e-6);
    auto rng = make_rng(5);
    std::vector<Policy> pols{Policy::uniform(task.mdp), random_deterministic_policy(task.mdp, rng)};
    const auto rg = learn_regret(data, task.mdp, policy_set_from_policies(task.mdp, pols),
                                 quick(regret_config(), 300));
    CHECK(std::abs(rg.final_loss - std::log(2.0)) < 1e-6);
  }
  SUBCASE("minimum-loss bookkeeping") {
    const auto data = double_with_reversal(labeled(task, partial_return_model(), 100, 6));
    auto cfg = quick(partial_return_config(), 500);
    cfg.history_stride = 50;
    const auto r = learn_partial_return(data, task.mdp, cfg);
    CHECK(r.best_loss <= r.final_loss);
    CHECK(r.loss_history.size() == 11);
    CHECK(r.loss_history.back() == r.final_loss);
    CHECK(r.loss_history.front() == doctest::Approx(std::log(2.0)));
  }
  SUBCASE("bad configuration") {
    const auto data = labeled(task, partial_return_model(), 10, 7);
    auto cfg = partial_return_config();
    cfg.epochs = 0;
    CHECK_THROWS_AS(learn_partial_return(data, task.mdp, cfg), LearningError);
    cfg = partial_return_config();
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(learn_partial_return(data, task.mdp, cfg), LearningError);
  }
}

TEST_CASE("scaling a separating reward sharpens the loss") {
  const auto task = default_delivery_task();
  const auto data = double_with_reversal(labeled(task, partial_return_model(true), 200, 8));
  PreferenceDataset strict;
  for (const auto& s : data.samples)
    if (s.mu[0] != 0.5) strict.samples.push_back(s);
  const PartialReturnObjective pr(strict, task.mdp);
  const auto& w = task.schema.ground_truth.vec();
  double prev = pr.evaluate(w);
  for (double c : {2.0, 4.0, 8.0}) {
    const double cur = pr.evaluate(c * w);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("noiseless regret labels on small random MDPs recover near-optimal rewards") {
  RandomMdpParams p;
  p.heights = {5};
  p.widths = {5};
  std::size_t near = 0;
  const std::size_t seeds = 10;
  for (std::size_t seed = 0; seed < seeds; ++seed) {
    auto rng = make_rng(seed, {0});
    const auto d = sample_random_mdp(rng, p);
    auto ps_rng = make_rng(seed, {2});
    const auto ps = generate_sf_policy_set(d.mdp, d.schema.ground_truth, ps_rng);
    const auto data = double_with_reversal(labeled(d, regret_model(true), 3000, seed));
    const auto r = learn_regret(data, d.mdp, ps);
    const ReturnNormalizer norm(d.mdp, d.schema.ground_truth);
    near += norm.score(greedy_policy_for(d.mdp, r.w)).normalized > 0.9;
  }
  MESSAGE("near-optimal: " << near << " of " << seeds);
  CHECK(near >= 9);
}

TEST_CASE("weights document round trip") {
  LearnResult r;
  r.w = RewardWeights{-1.0, -2.0, 1.0, -1.0, -50.0, 50.0};
  r.final_loss = 0.3;
  r.best_loss = 0.25;
  const auto doc = weights_document("delivery", delivery_feature_names(), r, regret_config(), 17);
  CHECK(doc.at("feature_names") == nlohmann::json(delivery_feature_names()));
  CHECK(weights_from_document(doc).vec() == r.w.vec());
  CHECK(weights_from_document(nlohmann::json::parse(doc.dump())).vec() == r.w.vec());
  const auto cfg = learner_config_from_json(to_json(regret_config()), partial_return_config());
  CHECK(cfg.learning_rate == regret_config().learning_rate);
  CHECK(cfg.epochs == regret_config().epochs);
  CHECK(cfg.keep_min_loss == regret_config().keep_min_loss);
  CHECK(cfg.softmax_temp == regret_config().softmax_temp);
}
