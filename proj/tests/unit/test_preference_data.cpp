#include "helpers.hpp"

#include "prefrl/preference_data.hpp"
#include "prefrl/reward_learning.hpp"

#include <doctest.h>

#include <set>

using namespace prefrl;
using namespace prefrl::test;

namespace {

struct Fixture {
  Domain task = default_delivery_task();
  LabelContext ctx = LabelContext::solve(task.mdp, task.schema.ground_truth);
  // White step (-1) and brick step (-2).
  Segment white = make_segment(task.mdp, {3, 4}, {kRight});
  Segment brick = make_segment(task.mdp, {4, 5}, {kRight});
};

PreferenceDataset replicated(const PreferenceSample& s, std::size_t n) {
  PreferenceDataset d;
  d.seg_len = s.seg1.length();
  for (std::size_t i = 0; i < n; ++i) {
    auto c = s;
    c.pair_id = std::to_string(i);
    d.samples.push_back(c);
  }
  return d;
}

}  // namespace

TEST_CASE("labeling a pair") {
  const Fixture f;
  auto rng = make_rng(1);
  SUBCASE("certain preference always labels the first segment") {
    for (int i = 0; i < 100; ++i) CHECK(label_pair(partial_return_model(true), f.white, f.brick, f.ctx, rng) == Mu{1, 0});
    CHECK(label_pair(partial_return_model(true), f.brick, f.white, f.ctx, rng) == Mu{0, 1});
  }
  SUBCASE("noiseless tie") {
    CHECK(label_pair(partial_return_model(true), f.white, f.white, f.ctx, rng) == Mu{0.5, 0.5});
    CHECK(label_pair(regret_model(true), f.brick, f.brick, f.ctx, rng) == Mu{0.5, 0.5});
  }
  SUBCASE("stochastic labels follow the preference probability") {
    auto spec = partial_return_model();
    spec.scale = std::log(3.0);
    std::size_t first = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      const auto mu = label_pair(spec, f.white, f.brick, f.ctx, rng);
      CHECK((mu == Mu{1, 0} || mu == Mu{0, 1}));
      first += mu[0] == 1.0;
    }
    CHECK(std::abs(static_cast<double>(first) / n - 0.75) < 0.02);
  }
}

TEST_CASE("dataset generation") {
  const Fixture f;
  const auto a = generate_dataset(f.ctx, partial_return_model(), 200, 3, 42);
  const auto b = generate_dataset(f.ctx, regret_model(true), 200, 3, 42);
  REQUIRE(a.size() == 200);
  CHECK(a.seg_len == 3);
  CHECK(a.seed == std::optional<std::uint64_t>(42));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.samples[i].seg1 == b.samples[i].seg1);
    CHECK(a.samples[i].seg2 == b.samples[i].seg2);
    CHECK(a.samples[i].mu[0] + a.samples[i].mu[1] == 1.0);
  }
  CHECK(dataset_to_csv(generate_dataset(f.ctx, partial_return_model(), 200, 3, 42)) == dataset_to_csv(a));
  CHECK(dataset_to_csv(generate_dataset(f.ctx, partial_return_model(), 200, 3, 43)) != dataset_to_csv(a));

  const auto no_early = generate_dataset(f.ctx, partial_return_model(), 500, 3, 7, false);
  for (const auto& s : no_early.samples) {
    CHECK_FALSE(s.seg1.terminates_early());
    CHECK_FALSE(s.seg2.terminates_early());
  }
  const auto with_early = generate_dataset(f.ctx, partial_return_model(), 500, 3, 7, true);
  std::size_t early = 0;
  for (const auto& s : with_early.samples) early += s.seg1.terminates_early() + s.seg2.terminates_early();
  CHECK(early > 0);
}

TEST_CASE("doubling with reversal") {
  const Fixture f;
  PreferenceDataset d;
  d.samples.push_back({f.white, f.brick, {1, 0}});
  d.samples.push_back({f.white, f.white, {0.5, 0.5}});
  const auto dd = double_with_reversal(d);
  REQUIRE(dd.size() == 4);
  CHECK(dd.samples[2].seg1 == f.brick);
  CHECK(dd.samples[2].seg2 == f.white);
  CHECK(dd.samples[2].mu == Mu{0, 1});
  CHECK(dd.samples[3].mu == Mu{0.5, 0.5});

  const auto g = generate_dataset(f.ctx, partial_return_model(), 100, 3, 5);
  const auto g2 = double_with_reversal(g);
  const auto g4 = double_with_reversal(g2);
  CHECK(g4.size() == 4 * g.size());
  auto rng = make_rng(9);
  const auto w = random_weights(rng, 6, 1.0);
  const double l2 = PartialReturnObjective(g2, f.task.mdp).evaluate(w.vec());
  const double l4 = PartialReturnObjective(g4, f.task.mdp).evaluate(w.vec());
  CHECK(l2 == doctest::Approx(l4).epsilon(1e-12));
}

TEST_CASE("human CSV parsing") {
  const Fixture f;
  const std::string text =
      "pair_id,subject_id,seg1,seg2,label\n"
      "p1,u1,3;1;-1,4;1;-1,left\n"
      "p2,u1,3;1;-1,4;1;-1,same\n"
      "p3,u2,3;1;-1,4;1;-1,cant_tell\n";
  const auto d = parse_human_csv(text, f.task.mdp);
  REQUIRE(d.size() == 2);
  CHECK(d.samples[0].mu == Mu{1, 0});
  CHECK(d.samples[1].mu == Mu{0.5, 0.5});
  CHECK(d.samples[0].seg1 == f.white);
  CHECK(d.samples[0].source == SampleSource::Human);
  CHECK(d.samples[1].subject_id == "u1");

  CHECK(mu_from_label("right") == std::optional<Mu>(Mu{0, 1}));
  CHECK_FALSE(mu_from_label("cant_tell"));
  CHECK_THROWS_AS(mu_from_label("maybe"), std::invalid_argument);
  CHECK(label_token({1, 0}) == "left");
  CHECK(label_token({0.5, 0.5}) == "same");

  SUBCASE("stage column") {
    const auto staged = parse_human_csv(
        "pair_id,subject_id,seg1,seg2,label,stage\np1,u1,3;1;-1,4;1;-1,right,2\n", f.task.mdp);
    CHECK(staged.samples[0].stage == std::optional<int>(2));
  }
  SUBCASE("malformed input") {
    CHECK_THROWS(parse_human_csv("a,b\n1,2\n", f.task.mdp));
    CHECK_THROWS(parse_human_csv("pair_id,subject_id,seg1,seg2,label\np1,u1,3;1;-1,4;1;-1,sideways\n", f.task.mdp));
    CHECK_THROWS(parse_human_csv("pair_id,subject_id,seg1,seg2,label\np1,u1,3;1;-1,4;1,1;-1,left\n", f.task.mdp));
  }
  SUBCASE("quoted fields") {
    CHECK(split_csv_line(R"(a,"b,c","d""e")") == std::vector<std::string>{"a", "b,c", "d\"e"});
    CHECK(csv_quote("3;1,0;-1") == "\"3;1,0;-1\"");
    CHECK(csv_quote("plain") == "plain");
  }
}

TEST_CASE("CSV and JSON round trips") {
  const Fixture f;
  const auto d = generate_dataset(f.ctx, regret_model(true), 150, 3, 11);
  const auto back = parse_human_csv(dataset_to_csv(d), f.task.mdp);
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back.samples[i].seg1 == d.samples[i].seg1);
    CHECK(back.samples[i].seg2 == d.samples[i].seg2);
    CHECK(back.samples[i].mu == d.samples[i].mu);
  }
  const auto j = dataset_from_json(dataset_to_json(d), f.task.mdp);
  REQUIRE(j.size() == d.size());
  CHECK(j.seed == d.seed);
  CHECK(j.seg_len == d.seg_len);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(j.samples[i].mu == d.samples[i].mu);
}

TEST_CASE("partitions and folds") {
  const Fixture f;
  const auto d = replicated({f.white, f.brick, {1, 0}}, 1812);
  auto rng = make_rng(3);

  const auto parts = split_partitions(d, 20, rng);
  REQUIRE(parts.size() == 20);
  std::size_t big = 0;
  std::set<std::string> seen;
  for (const auto& p : parts) {
    CHECK((p.size() == 90 || p.size() == 91));
    big += p.size() == 91;
    for (const auto& s : p.samples) CHECK(seen.insert(s.pair_id).second);
  }
  CHECK(big == 12);
  CHECK(seen.size() == 1812);

  const auto one = split_partitions(d, 1, rng);
  REQUIRE(one.size() == 1);
  CHECK(one[0].size() == d.size());

  const auto small = replicated({f.white, f.brick, {1, 0}}, 23);
  const auto folds = split_kfold(small, 10, rng);
  REQUIRE(folds.size() == 10);
  std::multiset<std::string> tested;
  for (const auto& fold : folds) {
    CHECK(fold.train.size() + fold.test.size() == 23);
    std::set<std::string> train_ids;
    for (const auto& s : fold.train.samples) train_ids.insert(s.pair_id);
    for (const auto& s : fold.test.samples) {
      CHECK(train_ids.count(s.pair_id) == 0);
      tested.insert(s.pair_id);
    }
  }
  CHECK(tested.size() == 23);
  CHECK(std::set<std::string>(tested.begin(), tested.end()).size() == 23);

  CHECK_THROWS(split_partitions(small, 24, rng));
  CHECK_THROWS(split_kfold(small, 24, rng));
}
