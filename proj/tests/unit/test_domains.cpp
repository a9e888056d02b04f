#include "helpers.hpp"

#include "prefrl/domains.hpp"

#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

using namespace prefrl;
using namespace prefrl::test;

namespace {

std::vector<double> features_of(const TabularMdp& mdp, std::size_t s, std::size_t a, std::size_t next) {
  const Vector f = mdp.transition_features(s, a, next);
  return {f.data(), f.data() + f.size()};
}

double reward_of(const Domain& d, std::size_t s, std::size_t a, std::size_t next) {
  return d.mdp.transition_features(s, a, next).dot(d.schema.ground_truth.vec());
}

std::size_t count_terminal(const GridSpec& g, CellTerminal kind) {
  std::size_t n = 0;
  for (const auto& c : g.cells) n += c.terminal == kind;
  return n;
}

}  // namespace

TEST_CASE("delivery task rewards for every transition type") {
  const auto task = default_delivery_task();
  REQUIRE(task.schema.names == std::vector<std::string>{"white", "brick", "coin", "roadblock", "sheep", "destination"});
  REQUIRE(task.grid);
  const auto& g = *task.grid;
  const auto at = [&](std::size_t x, std::size_t y) { return y * g.width + x; };

  SUBCASE("entering a white cell with a coin cancels the surface cost") {
    CHECK(features_of(task.mdp, at(2, 0), kRight, at(3, 0)) == std::vector<double>{1, 0, 1, 0, 0, 0});
    CHECK(reward_of(task, at(2, 0), kRight, at(3, 0)) == 0.0);
  }
  SUBCASE("bumping the boundary from brick charges the brick surface") {
    CHECK(features_of(task.mdp, at(5, 0), kUp, at(5, 0)) == std::vector<double>{0, 1, 0, 0, 0, 0});
    CHECK(reward_of(task, at(5, 0), kUp, at(5, 0)) == -2.0);
  }
  SUBCASE("entering the destination pays +50 and nothing else") {
    CHECK(features_of(task.mdp, at(7, 6), kDown, at(7, 7)) == std::vector<double>{0, 0, 0, 0, 0, 1});
    CHECK(reward_of(task, at(7, 6), kDown, at(7, 7)) == 50.0);
    CHECK(task.mdp.is_terminal(at(7, 7)));
  }
  SUBCASE("entering a sheep costs -50") {
    CHECK(features_of(task.mdp, at(7, 1), kRight, at(8, 1)) == std::vector<double>{0, 0, 0, 0, 1, 0});
    CHECK(reward_of(task, at(7, 1), kRight, at(8, 1)) == -50.0);
    CHECK(task.mdp.is_terminal(at(8, 1)));
  }
  SUBCASE("entering a roadblock adds its cost to the surface") {
    CHECK(features_of(task.mdp, at(7, 1), kLeft, at(6, 1)) == std::vector<double>{1, 0, 0, 1, 0, 0});
    CHECK(reward_of(task, at(7, 1), kLeft, at(6, 1)) == -2.0);
  }
  SUBCASE("bumping a house charges the current surface and stays put") {
    CHECK(task.mdp.transition_probability(at(3, 1), kLeft, at(3, 1)) == 1.0);
    CHECK(features_of(task.mdp, at(3, 1), kLeft, at(3, 1)) == std::vector<double>{1, 0, 0, 0, 0, 0});
    CHECK(reward_of(task, at(3, 1), kLeft, at(3, 1)) == -1.0);
  }
  SUBCASE("moving onto brick charges the brick surface") {
    CHECK(reward_of(task, at(4, 0), kRight, at(5, 0)) == -2.0);
  }
  SUBCASE("houses are unreachable and never start states") {
    const auto house = at(1, 1);
    for (std::size_t s = 0; s < task.mdp.n_states(); ++s)
      for (std::size_t a = 0; s != house && a < kGridActions; ++a)
        for (const auto& t : task.mdp.transitions(s, a)) CHECK(t.next != house);
    CHECK(task.mdp.start_dist()[house] == 0.0);
    CHECK(task.mdp.start_dist()[at(0, 0)] > 0.0);
  }
  CHECK(validate_mdp(task.mdp).empty());
}

TEST_CASE("random MDPs") {
  SUBCASE("same seed gives identical MDPs") {
    auto r1 = make_rng(99);
    auto r2 = make_rng(99);
    const auto a = sample_random_mdp(r1);
    const auto b = sample_random_mdp(r2);
    CHECK(*a.grid == *b.grid);
    CHECK(a.mdp.feature_table() == b.mdp.feature_table());
    CHECK(a.schema.ground_truth.vec() == b.schema.ground_truth.vec());
  }
  SUBCASE("dimensions and component values come from the configured sets") {
    auto rng = make_rng(1);
    const RandomMdpParams p;
    for (int i = 0; i < 30; ++i) {
      const auto d = sample_random_mdp(rng, p);
      CHECK(std::count(p.heights.begin(), p.heights.end(), d.grid->height) == 1);
      CHECK(std::count(p.widths.begin(), p.widths.end(), d.grid->width) == 1);
      const auto& w = d.schema.ground_truth;
      CHECK(std::count(p.failure_values.begin(), p.failure_values.end(), w[4]) == 1);
      CHECK(std::count(p.success_values.begin(), p.success_values.end(), w[5]) == 1);
      CHECK(std::count(p.bad_values.begin(), p.bad_values.end(), w[3]) == 1);
      CHECK(count_terminal(*d.grid, CellTerminal::Destination) == 1);
      CHECK(validate_mdp(d.mdp).empty());
    }
  }
  SUBCASE("a proportion of 0.1 failures on a 5x6 grid gives 3 cells") {
    RandomMdpParams p;
    p.heights = {5};
    p.widths = {6};
    p.failure_props = {0.1};
    auto rng = make_rng(2);
    for (int i = 0; i < 5; ++i) CHECK(count_terminal(*sample_random_mdp(rng, p).grid, CellTerminal::Sheep) == 3);
  }
  SUBCASE("fixed parameters override the sampled values") {
    RandomMdpParams p;
    p.fixed_params = delivery_default_params();
    auto rng = make_rng(3);
    const auto d = sample_random_mdp(rng, p);
    CHECK(d.schema.ground_truth.vec() == default_delivery_task().schema.ground_truth.vec());
  }
}

TEST_CASE("risk MDPs") {
  auto rng = make_rng(7);
  for (std::size_t n_risk : {1, 2, 7}) {
    const auto d = build_risk_mdp(rng, 1.0, -50.0, n_risk);
    CHECK(validate_mdp(d.mdp).empty());
    CHECK(count_terminal(*d.grid, CellTerminal::Risk) == n_risk);
    CHECK(count_terminal(*d.grid, CellTerminal::Safe) == 1);

    std::size_t gambles = 0;
    for (std::size_t s = 0; s < d.mdp.n_states(); ++s) {
      if (d.mdp.is_terminal(s)) continue;
      for (std::size_t a = 0; a < kGridActions; ++a) {
        const auto ts = d.mdp.transitions(s, a);
        double sum = 0.0;
        for (const auto& t : ts) sum += t.prob;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        if (ts.size() != 2) continue;
        ++gambles;
        std::multiset<double> rewards;
        for (const auto& t : ts) {
          CHECK(t.prob == 0.5);
          rewards.insert(d.mdp.features(t).dot(d.schema.ground_truth.vec()));
        }
        CHECK(rewards == std::multiset<double>{-50.0, 1.0});
      }
    }
    CHECK(gambles > 0);
  }
}

TEST_CASE("risk MDP with a small win prefers the safe cell next to it") {
  auto rng = make_rng(8);
  const auto d = build_risk_mdp(rng, 1.0, -50.0, 1);
  const auto& g = *d.grid;
  const auto sol = value_iteration(d.mdp, d.schema.ground_truth, d.mdp.gamma_solve());
  std::size_t checked = 0;
  for (std::size_t y = 0; y < g.height; ++y)
    for (std::size_t x = 0; x < g.width; ++x) {
      const auto s = y * g.width + x;
      if (d.mdp.is_terminal(s)) continue;
      for (std::size_t a = 0; a < kGridActions; ++a) {
        const auto ts = d.mdp.transitions(s, a);
        if (ts.size() == 1 && g.cells.size() > ts[0].next && g.cells[ts[0].next].terminal == CellTerminal::Safe) {
          CHECK(sol.q(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) ==
                doctest::Approx(sol.v[static_cast<Eigen::Index>(s)]));
          ++checked;
        }
      }
    }
  CHECK(checked > 0);
}

TEST_CASE("counterexample builders") {
  CHECK(build_chain(1, -4.0, 1.0).schema.ground_truth[1] == -1.0);
  CHECK_THROWS_AS(build_chain(1, -4.0, 3.0), std::invalid_argument);
  CHECK_THROWS_AS(build_chain_alt(1, -4.0, -5.0), std::invalid_argument);

  for (auto [n, c, c_alt] : {std::tuple{1, 1.0, -1.0}, std::tuple{2, 1.0, -0.5}}) {
    const auto chain = build_chain(static_cast<std::size_t>(n), -4.0, c);
    const auto alt = build_chain_alt(static_cast<std::size_t>(n), -4.0, c_alt);
    CHECK(validate_mdp(chain.mdp).empty());
    CHECK(validate_mdp(alt.mdp).empty());
    const auto p1 = greedy_policy_for(chain.mdp, chain.schema.ground_truth);
    const auto p2 = greedy_policy_for(alt.mdp, alt.schema.ground_truth);
    CHECK(p1.probs(0, 0) == 1.0);
    CHECK(p2.probs(0, 1) == 1.0);
  }
  CHECK(validate_mdp(build_fig3(11.0).mdp).empty());
}

TEST_CASE("layout documents round-trip byte for byte") {
  std::ifstream in(default_delivery_layout_path());
  std::stringstream buf;
  buf << in.rdbuf();
  const auto text = buf.str();
  const auto spec = grid_from_json_text(text);
  CHECK(grid_to_json_text(spec) == text);
  CHECK(grid_from_json_text(grid_to_json_text(spec)) == spec);

  for (const auto* tok : {"W", "B", "WC", "WR", "WH", "BC", "BR", "BH", "S", "G", "K", "F"})
    CHECK(cell_token(parse_cell_token(tok)) == tok);
  CHECK_THROWS_AS(parse_cell_token("X"), std::invalid_argument);
  CHECK_THROWS(grid_from_json_text(R"({"format":"prefrl-grid","version":1,"width":2,"height":1,"cells":["W"]})"));
}
