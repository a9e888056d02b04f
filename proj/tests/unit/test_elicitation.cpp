#include "helpers.hpp"

#include "prefrl/elicitation.hpp"

#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>
#include <thread>

using namespace prefrl;
using namespace prefrl::test;

namespace {

std::shared_ptr<const Domain> shared_task() {
  static const auto task = std::make_shared<const Domain>(default_delivery_task());
  return task;
}

std::shared_ptr<const PolicySet> small_policy_set() {
  static const auto ps = [] {
    const auto& mdp = shared_task()->mdp;
    auto rng = make_rng(81);
    std::vector<Policy> pols{Policy::uniform(mdp)};
    for (int k = 0; k < 4; ++k) pols.push_back(random_deterministic_policy(mdp, rng));
    return std::make_shared<const PolicySet>(policy_set_from_policies(mdp, pols));
  }();
  return ps;
}

std::shared_ptr<const PolicySet> delivery_policy_set() {
  static const auto ps = [] {
    const auto& task = *shared_task();
    auto rng = make_rng(0, {2});
    return std::make_shared<const PolicySet>(generate_sf_policy_set(task.mdp, task.schema.ground_truth, rng));
  }();
  return ps;
}

SessionOptions quick_options(bool background) {
  SessionOptions o;
  o.n_pairs = 40;
  o.relearn_every = 10;
  o.seed = 5;
  o.background = background;
  o.learners.regret.epochs = 100;
  o.learners.partial_return.epochs = 100;
  return o;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("prefrl_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("elicitation pool composition") {
  const auto& task = *shared_task();
  auto rng = make_rng(1);
  const auto pool = build_elicitation_pool(task, rng, 40);
  REQUIRE(pool.size() == 40);

  std::map<std::string, std::size_t> kinds;
  std::map<std::size_t, std::vector<const ElicitationPair*>> groups;
  std::set<std::pair<int, int>> bins;
  const auto ctx = LabelContext::solve(task.mdp, task.schema.ground_truth);
  std::set<std::string> keys;
  for (const auto& p : pool) {
    ++kinds[p.kind];
    CHECK(p.left.actions.size() == 3);
    CHECK(p.right.actions.size() == 3);
    CHECK(keys.insert(serialize_segment(p.left) + "|" + serialize_segment(p.right)).second);
    if (p.kind == "shifted") {
      REQUIRE(p.group);
      groups[*p.group].push_back(&p);
    } else {
      CHECK_FALSE(p.group);
    }
    if (p.kind == "stratified") bins.insert(pair_bin(task.mdp, ctx, p.left, p.right));
    if (p.kind == "terminal_vs_nonterminal") CHECK(p.left.term_index.has_value() != p.right.term_index.has_value());
  }
  CHECK(kinds["stratified"] == 24);
  CHECK(kinds["terminal_vs_nonterminal"] == 4);
  CHECK(kinds["shifted"] == 12);
  CHECK(bins.size() >= 2);

  // Each triple shares one non-terminal segment; the others terminate at
  // steps 2, 1 and 0.
  REQUIRE(groups.size() == 4);
  for (const auto& [g, members] : groups) {
    REQUIRE(members.size() == 3);
    std::map<std::string, std::size_t> counts;
    for (const auto* p : members) {
      ++counts[serialize_segment(p->left)];
      ++counts[serialize_segment(p->right)];
    }
    std::set<std::size_t> term;
    for (const auto* p : members) {
      const auto& other = counts[serialize_segment(p->left)] == 3 ? p->right : p->left;
      REQUIRE(other.term_index);
      term.insert(*other.term_index);
    }
    CHECK(term == std::set<std::size_t>{0, 1, 2});
  }

  auto rng2 = make_rng(1);
  const auto again = build_elicitation_pool(task, rng2, 40);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    CHECK(again[i].left == pool[i].left);
    CHECK(again[i].right == pool[i].right);
  }
  CHECK_THROWS_AS(build_elicitation_pool(task, rng, 0), std::invalid_argument);
  CHECK_THROWS_AS(build_elicitation_pool(task, rng, 10, 2), std::invalid_argument);
}

TEST_CASE("session pair flow and labels") {
  Session s("t1", shared_task(), small_policy_set(), quick_options(false));
  const auto first = s.next_pair();
  CHECK(first.at("done") == false);
  CHECK(first.at("number") == 1);
  CHECK(first.at("total") == 40);
  CHECK(s.next_pair() == first);
  CHECK(s.current_model().at("has_model") == false);
  CHECK_FALSE(s.current_w());

  CHECK_THROWS_AS(s.submit("maybe"), std::invalid_argument);
  CHECK(s.next_pair() == first);

  const std::vector<std::string> labels{"left", "right", "same", "cant_tell"};
  for (std::size_t i = 0; i < 9; ++i) {
    const auto r = s.submit(labels[i % 4]);
    CHECK(r.collected == i + 1);
    CHECK_FALSE(r.relearn_scheduled);
  }
  CHECK(s.next_pair().at("number") == 10);
  const auto d = s.dataset();
  REQUIRE(d.size() == 7);
  CHECK(d.samples[0].mu == Mu{1, 0});
  CHECK(d.samples[0].seg1 == s.pool()[0].left);
  CHECK(d.samples[0].seg2 == s.pool()[0].right);
  CHECK(d.samples[1].mu == Mu{0, 1});
  CHECK(d.samples[2].mu == Mu{0.5, 0.5});
  CHECK(d.samples[3].pair_id == "4");

  const auto tenth = s.submit("left");
  CHECK(tenth.relearn_scheduled);
  CHECK(tenth.learning_size == 8);
  CHECK(s.relearn_count() == 1);
  const auto model = s.current_model();
  CHECK(model.at("has_model") == true);
  CHECK(model.at("trained_on") == 8);
  CHECK(model.at("w").size() == 6);
  CHECK(model.at("grid").at("value").size() == 100);
  CHECK(model.at("grid").at("arrows").size() == 100);
  CHECK_FALSE(model.contains("w_partial_return"));

  for (int i = 0; i < 30; ++i) s.submit("right");
  CHECK(s.relearn_count() == 4);
  const auto end = s.next_pair();
  CHECK(end.at("done") == true);
  CHECK(end.at("total") == 40);
  CHECK_THROWS_AS(s.submit("left"), std::logic_error);

  const auto csv = s.export_csv();
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 41);
  CHECK(csv.find("cant_tell") != std::string::npos);
  CHECK(parse_human_csv(csv, shared_task()->mdp).size() == s.dataset().size());
}

TEST_CASE("partial-return model is reported when requested") {
  auto o = quick_options(false);
  o.learn_partial_return = true;
  o.relearn_every = 5;
  Session s("t2", shared_task(), small_policy_set(), o);
  for (int i = 0; i < 5; ++i) s.submit("left");
  CHECK(s.current_model().at("w_partial_return").size() == 6);
}

TEST_CASE("oracle labels give a model that fits them") {
  const auto task = shared_task();
  const auto ctx = LabelContext::solve(task->mdp, task->schema.ground_truth);
  auto o = quick_options(false);
  o.learners.regret.epochs = 300;
  Session s("t3", task, delivery_policy_set(), o);
  auto rng = make_rng(82);
  for (std::size_t i = 0; i < 40; ++i) {
    const auto& p = s.pool()[i];
    const auto mu = label_pair(regret_model(true), p.left, p.right, ctx, rng);
    s.submit(mu[0] > mu[1] ? "left" : mu[0] < mu[1] ? "right" : "same");
  }
  CHECK(s.current_model().at("final_loss").get<double>() < std::log(2.0));
}

TEST_CASE("labels that avoid sheep give the sheep feature a negative weight") {
  const auto task = shared_task();
  auto o = quick_options(false);
  o.n_pairs = 100;
  o.relearn_every = 100;
  o.learners.regret.epochs = 500;
  Session s("t6", task, delivery_policy_set(), o);
  const auto sheep = [&](const Segment& seg) { return segment_feature_sum(task->mdp, seg)[4] > 0.0; };
  std::size_t decisive = 0;
  for (const auto& p : s.pool()) {
    const bool l = sheep(p.left);
    const bool r = sheep(p.right);
    decisive += l != r;
    s.submit(l == r ? "same" : l ? "right" : "left");
  }
  REQUIRE(decisive > 0);
  REQUIRE(s.current_w());
  CHECK((*s.current_w())[4] < 0.0);
}

TEST_CASE("event log replay reproduces the session") {
  const auto dir = temp_dir("replay");
  auto o = quick_options(false);
  o.log_path = (dir / "s.jsonl").string();
  Session s("t4", shared_task(), small_policy_set(), o);
  const std::vector<std::string> labels{"left", "right", "same", "cant_tell", "right"};
  for (std::size_t i = 0; i < 23; ++i) s.submit(labels[i % labels.size()]);
  REQUIRE(s.current_w());

  const auto r = Session::replay(o.log_path, shared_task(), small_policy_set(), o.learners);
  CHECK(r->id() == "t4");
  CHECK(r->relearn_count() == s.relearn_count());
  CHECK(r->export_csv() == s.export_csv());
  REQUIRE(r->current_w());
  CHECK(r->current_w()->vec() == s.current_w()->vec());
  CHECK(r->next_pair() == s.next_pair());

  CHECK_THROWS(Session::replay((dir / "missing.jsonl").string(), shared_task(), small_policy_set()));
  std::filesystem::remove_all(dir);
}

TEST_CASE("concurrent submissions with background relearning") {
  Session s("t5", shared_task(), small_policy_set(), quick_options(true));
  std::atomic<std::size_t> accepted{0};
  std::atomic<std::size_t> rejected{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 6; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 10; ++i) {
        try {
          s.submit(i % 2 ? "left" : "right");
          ++accepted;
        } catch (const std::logic_error&) {
          ++rejected;
        }
        (void)s.current_model();
      }
    });
  }
  for (auto& t : threads) t.join();
  s.wait_idle();
  CHECK(accepted == 40);
  CHECK(rejected == 20);
  const auto m = s.current_model();
  CHECK(m.at("learning") == false);
  CHECK(m.at("has_model") == true);
  CHECK(m.at("trained_on") == 40);
  CHECK(s.relearn_count() >= 1);
  CHECK(s.relearn_count() <= 4);
}
