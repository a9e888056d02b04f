#pragma once

#include "prefrl/mdp.hpp"
#include "prefrl/random.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace prefrl {

enum class Surface { White, Brick };
enum class CellObject { None, Coin, Roadblock, House };
enum class CellTerminal { None, Sheep, Destination, Risk, Safe };

struct CellSpec {
  Surface surface = Surface::White;
  CellObject object = CellObject::None;
  CellTerminal terminal = CellTerminal::None;

  bool operator==(const CellSpec&) const = default;
};

/// Grid layout. Cells are row-major: cell (x, y) is cells[y * width + x], and
/// the MDP state of a cell is the same index.
struct GridSpec {
  std::string name;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<CellSpec> cells;
  std::map<std::string, double> reward_params;

  const CellSpec& at(std::size_t x, std::size_t y) const { return cells[y * width + x]; }
  CellSpec& at(std::size_t x, std::size_t y) { return cells[y * width + x]; }
  bool is_risk_layout() const;

  bool operator==(const GridSpec&) const = default;
};

struct FeatureSchema {
  std::vector<std::string> names;
  RewardWeights ground_truth;
};

/// An MDP together with its feature schema and, for grid domains, the layout
/// it was built from.
struct Domain {
  TabularMdp mdp;
  FeatureSchema schema;
  std::optional<GridSpec> grid;
};

/// Grid actions.
enum GridAction : std::size_t { kUp = 0, kRight = 1, kDown = 2, kLeft = 3 };
inline constexpr std::size_t kGridActions = 4;

/// Delivery feature order: white, brick, coin, roadblock, sheep, destination.
std::vector<std::string> delivery_feature_names();
std::map<std::string, double> delivery_default_params();

/// Delivery rules: a bump (boundary or house) leaves the agent in place and
/// charges the current cell's surface; a normal move charges the entered
/// cell's surface plus its coin or roadblock; entering a sheep or destination
/// cell is a terminal transition whose only active feature is that indicator.
/// Houses are unreachable and therefore masked out of the start distribution.
Domain build_delivery_task(const GridSpec& spec);

/// Risk-grid rules: every move or bump into a non-terminal cell activates the
/// step feature; entering the safe cell activates the safe feature; entering
/// a risk cell leads to one of two global outcome states (win, lose) with
/// probability 0.5 each. Feature order: step, safe, win, lose.
Domain build_risk_task(const GridSpec& spec);

/// Dispatches on whether the layout contains risk or safe cells.
Domain build_grid_task(const GridSpec& spec);

struct RandomMdpParams {
  std::vector<std::size_t> heights{5, 6, 10};
  std::vector<std::size_t> widths{3, 6, 10, 15};
  std::vector<double> failure_props{0.0, 0.1, 0.3};
  std::vector<double> bad_props{0.0, 0.1, 0.5, 0.8};
  std::vector<double> good_props{0.0, 0.1, 0.2};
  std::vector<double> failure_values{-5.0, -10.0, -50.0};
  std::vector<double> success_values{0.0, 1.0, 5.0, 10.0, 50.0};
  std::vector<double> bad_values{-2.0, -5.0, -10.0};
  /// When set, these replace the sampled component values (used to generate
  /// families of MDPs sharing one reward function).
  std::optional<std::map<std::string, double>> fixed_params;
};

/// Randomized delivery-domain MDP. Cell counts are floor(proportion * cells);
/// cells are assigned by shuffling and filling success, failure, mildly bad
/// (roadblock), then mildly good (coin), truncating when the grid runs out.
Domain sample_random_mdp(Rng& rng, const RandomMdpParams& params = {});

/// 5x5 grid with one safe cell and n_risk risk cells, placed uniformly
/// without overlap. When n_risk is not given it is drawn from {1, 2, 7}.
Domain build_risk_mdp(Rng& rng, double r_win, double r_lose, std::optional<std::size_t> n_risk = std::nullopt);

/// States s0 = 0, s_safe = 1, s_win = 2, s_lose = 3; actions 0 = safe, 1 = risk.
/// Features (lose, safe, win) with w = (-10, 0, r_win).
Domain build_fig3(double r_win);

/// Chain with n states right of s0 and a terminal s_term = n + 1. Action 0
/// moves right (s_n -> s_term); action 1 fails from s0 (s0 -> s_term) and moves
/// left elsewhere. Features (fail, other) with
/// w = (r_fail, c + r_fail / (n + 1)).
/// build_chain requires r_fail < 0 and 0 < c < -r_fail / (n + 1) so that
/// moving right is optimal.
Domain build_chain(std::size_t n, double r_fail, double c);
/// Same dynamics with r_fail / (n (n + 1)) < c < 0: every per-pair partial
/// return comparison over length-n segments agrees with build_chain, but
/// failing immediately from s0 is optimal.
Domain build_chain_alt(std::size_t n, double r_fail, double c);

/// Layout document I/O. The document is JSON with keys format, version, name,
/// width, height, cells (one string of space-separated tokens per row) and
/// reward_params.
GridSpec grid_from_json_text(const std::string& text);
std::string grid_to_json_text(const GridSpec& spec);
GridSpec load_grid(const std::string& path);
void save_grid(const GridSpec& spec, const std::string& path);

std::string cell_token(const CellSpec& cell);
CellSpec parse_cell_token(const std::string& token);

/// Path of the bundled 10x10 delivery layout.
std::string default_delivery_layout_path();
Domain default_delivery_task();

}  // namespace prefrl
