#include "prefrl/domains.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace prefrl {

namespace {

using ojson = nlohmann::ordered_json;

constexpr const char* kGridFormat = "prefrl-grid";
constexpr int kGridVersion = 1;

double param(const GridSpec& spec, const std::string& key, double fallback) {
  auto it = spec.reward_params.find(key);
  return it == spec.reward_params.end() ? fallback : it->second;
}

// Successor cell of (x, y) under a grid action, or nullopt on a boundary bump.
std::optional<std::size_t> neighbor(const GridSpec& g, std::size_t x, std::size_t y, std::size_t a) {
  switch (a) {
    case kUp:
      if (y == 0) return std::nullopt;
      return (y - 1) * g.width + x;
    case kRight:
      if (x + 1 >= g.width) return std::nullopt;
      return y * g.width + x + 1;
    case kDown:
      if (y + 1 >= g.height) return std::nullopt;
      return (y + 1) * g.width + x;
    default:
      if (x == 0) return std::nullopt;
      return y * g.width + x - 1;
  }
}

void check_grid(const GridSpec& g) {
  if (g.width == 0 || g.height == 0) throw std::invalid_argument("grid must be non-empty");
  if (g.cells.size() != g.width * g.height) throw std::invalid_argument("cell count does not match width * height");
  for (const auto& c : g.cells) {
    if (c.terminal != CellTerminal::None && c.object != CellObject::None)
      throw std::invalid_argument("terminal cells cannot hold objects");
  }
}

std::vector<double> one_hot(std::size_t d, std::size_t k) {
  std::vector<double> v(d, 0.0);
  v[k] = 1.0;
  return v;
}

}  // namespace

bool GridSpec::is_risk_layout() const {
  return std::any_of(cells.begin(), cells.end(), [](const CellSpec& c) {
    return c.terminal == CellTerminal::Risk || c.terminal == CellTerminal::Safe;
  });
}

std::vector<std::string> delivery_feature_names() {
  return {"white", "brick", "coin", "roadblock", "sheep", "destination"};
}

std::map<std::string, double> delivery_default_params() {
  return {{"white", -1.0}, {"brick", -2.0}, {"coin", 1.0}, {"roadblock", -1.0}, {"sheep", -50.0}, {"destination", 50.0}};
}

Domain build_delivery_task(const GridSpec& spec) {
  check_grid(spec);
  if (spec.is_risk_layout()) throw std::invalid_argument("risk layouts need build_risk_task");
  enum { kWhite, kBrick, kCoin, kRoadblock, kSheep, kDest, kD };
  const auto n = spec.cells.size();
  bool has_dest = false;
  std::vector<bool> terminal(n, false);
  for (std::size_t s = 0; s < n; ++s) {
    const auto& c = spec.cells[s];
    has_dest = has_dest || c.terminal == CellTerminal::Destination;
    terminal[s] = c.terminal != CellTerminal::None || c.object == CellObject::House;
  }
  if (!has_dest) throw std::invalid_argument("delivery grid has no destination");

  std::vector<std::vector<Outcome>> outcomes(n * kGridActions);
  for (std::size_t y = 0; y < spec.height; ++y) {
    for (std::size_t x = 0; x < spec.width; ++x) {
      const auto s = y * spec.width + x;
      if (terminal[s]) continue;
      const auto& here = spec.cells[s];
      for (std::size_t a = 0; a < kGridActions; ++a) {
        auto next = neighbor(spec, x, y, a);
        std::vector<double> phi(kD, 0.0);
        if (!next || spec.cells[*next].object == CellObject::House) {
          phi[here.surface == Surface::Brick ? kBrick : kWhite] = 1.0;
          outcomes[s * kGridActions + a].push_back({s, 1.0, phi});
          continue;
        }
        const auto& there = spec.cells[*next];
        if (there.terminal == CellTerminal::Sheep) {
          phi[kSheep] = 1.0;
        } else if (there.terminal == CellTerminal::Destination) {
          phi[kDest] = 1.0;
        } else {
          phi[there.surface == Surface::Brick ? kBrick : kWhite] = 1.0;
          if (there.object == CellObject::Coin) phi[kCoin] = 1.0;
          if (there.object == CellObject::Roadblock) phi[kRoadblock] = 1.0;
        }
        outcomes[s * kGridActions + a].push_back({*next, 1.0, phi});
      }
    }
  }
  const auto defaults = delivery_default_params();
  const auto names = delivery_feature_names();
  Vector w(kD);
  for (std::size_t k = 0; k < names.size(); ++k)
    w[static_cast<Eigen::Index>(k)] = param(spec, names[k], defaults.at(names[k]));
  return {TabularMdp(n, kGridActions, kD, std::move(outcomes), terminal), {names, RewardWeights(w)}, spec};
}

Domain build_risk_task(const GridSpec& spec) {
  check_grid(spec);
  enum { kStep, kSafe, kWin, kLose, kD };
  const auto cells = spec.cells.size();
  const auto s_win = cells;
  const auto s_lose = cells + 1;
  const auto n = cells + 2;
  std::vector<bool> terminal(n, true);
  bool has_safe = false;
  for (std::size_t s = 0; s < cells; ++s) {
    const auto& c = spec.cells[s];
    if (c.terminal == CellTerminal::Sheep || c.terminal == CellTerminal::Destination)
      throw std::invalid_argument("risk grids use only risk and safe terminals");
    has_safe = has_safe || c.terminal == CellTerminal::Safe;
    terminal[s] = c.terminal != CellTerminal::None || c.object == CellObject::House;
  }
  if (!has_safe) throw std::invalid_argument("risk grid has no safe cell");

  std::vector<std::vector<Outcome>> outcomes(n * kGridActions);
  for (std::size_t y = 0; y < spec.height; ++y) {
    for (std::size_t x = 0; x < spec.width; ++x) {
      const auto s = y * spec.width + x;
      if (terminal[s]) continue;
      for (std::size_t a = 0; a < kGridActions; ++a) {
        auto& out = outcomes[s * kGridActions + a];
        auto next = neighbor(spec, x, y, a);
        if (!next || spec.cells[*next].object == CellObject::House) {
          out.push_back({s, 1.0, one_hot(kD, kStep)});
        } else if (spec.cells[*next].terminal == CellTerminal::Safe) {
          out.push_back({*next, 1.0, one_hot(kD, kSafe)});
        } else if (spec.cells[*next].terminal == CellTerminal::Risk) {
          out.push_back({s_win, 0.5, one_hot(kD, kWin)});
          out.push_back({s_lose, 0.5, one_hot(kD, kLose)});
        } else {
          out.push_back({*next, 1.0, one_hot(kD, kStep)});
        }
      }
    }
  }
  const std::vector<std::string> names{"step", "safe", "win", "lose"};
  RewardWeights w{param(spec, "step", -1.0), param(spec, "safe", 50.0), param(spec, "win", 1.0),
                  param(spec, "lose", -50.0)};
  return {TabularMdp(n, kGridActions, kD, std::move(outcomes), terminal), {names, w}, spec};
}

Domain build_grid_task(const GridSpec& spec) {
  return spec.is_risk_layout() ? build_risk_task(spec) : build_delivery_task(spec);
}

namespace {

template <class T>
const T& pick(Rng& rng, const std::vector<T>& options) {
  if (options.empty()) throw std::invalid_argument("empty option set");
  return options[uniform_index(rng, options.size())];
}

std::size_t count_for(double prop, std::size_t cells) {
  return static_cast<std::size_t>(std::floor(prop * static_cast<double>(cells) + 1e-9));
}

}  // namespace

Domain sample_random_mdp(Rng& rng, const RandomMdpParams& params) {
  GridSpec g;
  g.name = "random";
  g.height = pick(rng, params.heights);
  g.width = pick(rng, params.widths);
  const auto cells = g.width * g.height;
  g.cells.assign(cells, CellSpec{});
  const double p_fail = pick(rng, params.failure_props);
  const double p_bad = pick(rng, params.bad_props);
  const double p_good = pick(rng, params.good_props);

  std::vector<std::size_t> order(cells);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t next = 0;
  auto fill = [&](std::size_t count, auto&& assign) {
    for (std::size_t k = 0; k < count && next < cells; ++k) assign(g.cells[order[next++]]);
  };
  fill(1, [](CellSpec& c) { c.terminal = CellTerminal::Destination; });
  // At least one non-terminal cell must remain to start from.
  const auto fail_cap = cells >= 2 ? std::min(count_for(p_fail, cells), cells - 2) : 0;
  fill(fail_cap, [](CellSpec& c) { c.terminal = CellTerminal::Sheep; });
  fill(count_for(p_bad, cells), [](CellSpec& c) { c.object = CellObject::Roadblock; });
  fill(count_for(p_good, cells), [](CellSpec& c) { c.object = CellObject::Coin; });

  g.reward_params = delivery_default_params();
  g.reward_params["sheep"] = pick(rng, params.failure_values);
  g.reward_params["destination"] = pick(rng, params.success_values);
  g.reward_params["roadblock"] = pick(rng, params.bad_values);
  if (params.fixed_params)
    for (const auto& [k, v] : *params.fixed_params) g.reward_params[k] = v;
  return build_delivery_task(g);
}

Domain build_risk_mdp(Rng& rng, double r_win, double r_lose, std::optional<std::size_t> n_risk) {
  const std::size_t n = n_risk ? *n_risk : pick(rng, std::vector<std::size_t>{1, 2, 7});
  GridSpec g;
  g.name = "risk";
  g.width = 5;
  g.height = 5;
  g.cells.assign(25, CellSpec{});
  if (n + 2 > g.cells.size()) throw std::invalid_argument("too many risk cells for a 5x5 grid");
  std::vector<std::size_t> order(g.cells.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  g.cells[order[0]].terminal = CellTerminal::Safe;
  for (std::size_t k = 0; k < n; ++k) g.cells[order[1 + k]].terminal = CellTerminal::Risk;
  g.reward_params = {{"step", -1.0}, {"safe", 50.0}, {"win", r_win}, {"lose", r_lose}};
  return build_risk_task(g);
}

Domain build_fig3(double r_win) {
  enum { kS0, kSafe, kWin, kLose };
  std::vector<std::vector<Outcome>> out(4 * 2);
  out[0].push_back({kSafe, 1.0, {0, 1, 0}});
  out[1].push_back({kWin, 0.5, {0, 0, 1}});
  out[1].push_back({kLose, 0.5, {1, 0, 0}});
  std::vector<double> d0{1, 0, 0, 0};
  TabularMdp mdp(4, 2, 3, std::move(out), {false, true, true, true}, d0);
  return {std::move(mdp), {{"lose", "safe", "win"}, RewardWeights{-10.0, 0.0, r_win}}, std::nullopt};
}

namespace {

Domain chain_mdp(std::size_t n, double r_fail, double c) {
  const auto term = n + 1;
  const auto states = n + 2;
  std::vector<std::vector<Outcome>> out(states * 2);
  for (std::size_t s = 0; s <= n; ++s) {
    out[s * 2 + 0].push_back({s + 1, 1.0, {0, 1}});
    if (s == 0)
      out[s * 2 + 1].push_back({term, 1.0, {1, 0}});
    else
      out[s * 2 + 1].push_back({s - 1, 1.0, {0, 1}});
  }
  std::vector<bool> terminal(states, false);
  terminal[term] = true;
  const double other = c + r_fail / static_cast<double>(n + 1);
  return {TabularMdp(states, 2, 2, std::move(out), terminal), {{"fail", "other"}, RewardWeights{r_fail, other}},
          std::nullopt};
}

}  // namespace

Domain build_chain(std::size_t n, double r_fail, double c) {
  if (n == 0) throw std::invalid_argument("chain needs n >= 1");
  if (!(r_fail < 0.0)) throw std::invalid_argument("chain needs r_fail < 0");
  if (!(c > 0.0 && c < -r_fail / static_cast<double>(n + 1)))
    throw std::invalid_argument("chain needs 0 < c < -r_fail / (n + 1)");
  return chain_mdp(n, r_fail, c);
}

Domain build_chain_alt(std::size_t n, double r_fail, double c) {
  if (n == 0) throw std::invalid_argument("chain needs n >= 1");
  if (!(r_fail < 0.0)) throw std::invalid_argument("chain needs r_fail < 0");
  const double nn = static_cast<double>(n);
  if (!(c < 0.0 && c > r_fail / (nn * (nn + 1.0))))
    throw std::invalid_argument("alternative chain needs r_fail / (n (n + 1)) < c < 0");
  return chain_mdp(n, r_fail, c);
}

std::string cell_token(const CellSpec& c) {
  switch (c.terminal) {
    case CellTerminal::Sheep: return "S";
    case CellTerminal::Destination: return "G";
    case CellTerminal::Risk: return "K";
    case CellTerminal::Safe: return "F";
    case CellTerminal::None: break;
  }
  std::string t = c.surface == Surface::Brick ? "B" : "W";
  switch (c.object) {
    case CellObject::Coin: return t + "C";
    case CellObject::Roadblock: return t + "R";
    case CellObject::House: return t + "H";
    case CellObject::None: break;
  }
  return t;
}

CellSpec parse_cell_token(const std::string& token) {
  if (token == "S") return {Surface::White, CellObject::None, CellTerminal::Sheep};
  if (token == "G") return {Surface::White, CellObject::None, CellTerminal::Destination};
  if (token == "K") return {Surface::White, CellObject::None, CellTerminal::Risk};
  if (token == "F") return {Surface::White, CellObject::None, CellTerminal::Safe};
  if (token.empty() || token.size() > 2 || (token[0] != 'W' && token[0] != 'B'))
    throw std::invalid_argument("unknown cell token '" + token + "'");
  CellSpec c;
  c.surface = token[0] == 'B' ? Surface::Brick : Surface::White;
  if (token.size() == 2) {
    switch (token[1]) {
      case 'C': c.object = CellObject::Coin; break;
      case 'R': c.object = CellObject::Roadblock; break;
      case 'H': c.object = CellObject::House; break;
      default: throw std::invalid_argument("unknown cell token '" + token + "'");
    }
  }
  return c;
}

GridSpec grid_from_json_text(const std::string& text) {
  const auto j = ojson::parse(text);
  if (j.value("format", std::string{}) != kGridFormat) throw std::invalid_argument("not a grid layout document");
  if (j.at("version").get<int>() != kGridVersion) throw std::invalid_argument("unsupported grid layout version");
  GridSpec g;
  g.name = j.value("name", std::string{});
  g.width = j.at("width").get<std::size_t>();
  g.height = j.at("height").get<std::size_t>();
  const auto& rows = j.at("cells");
  if (rows.size() != g.height) throw std::invalid_argument("row count does not match height");
  for (const auto& row : rows) {
    std::istringstream is(row.get<std::string>());
    std::string tok;
    std::size_t count = 0;
    while (is >> tok) {
      g.cells.push_back(parse_cell_token(tok));
      ++count;
    }
    if (count != g.width) throw std::invalid_argument("row length does not match width");
  }
  if (j.contains("reward_params"))
    for (const auto& [k, v] : j.at("reward_params").items()) g.reward_params[k] = v.get<double>();
  return g;
}

std::string grid_to_json_text(const GridSpec& g) {
  ojson j;
  j["format"] = kGridFormat;
  j["version"] = kGridVersion;
  j["name"] = g.name;
  j["width"] = g.width;
  j["height"] = g.height;
  ojson rows = ojson::array();
  for (std::size_t y = 0; y < g.height; ++y) {
    std::string row;
    for (std::size_t x = 0; x < g.width; ++x) {
      if (x) row += ' ';
      row += cell_token(g.at(x, y));
    }
    rows.push_back(row);
  }
  j["cells"] = rows;
  ojson params = ojson::object();
  for (const auto& [k, v] : g.reward_params) params[k] = v;
  j["reward_params"] = params;
  return j.dump(2) + "\n";
}

GridSpec load_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open layout file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return grid_from_json_text(ss.str());
}

void save_grid(const GridSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write layout file " + path);
  out << grid_to_json_text(spec);
}

std::string default_delivery_layout_path() { return std::string(PREFRL_DATA_DIR) + "/delivery_10x10.json"; }

Domain default_delivery_task() { return build_delivery_task(load_grid(default_delivery_layout_path())); }

}  // namespace prefrl
