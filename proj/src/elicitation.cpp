#include "prefrl/elicitation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace prefrl {

namespace {

constexpr std::size_t kMaxSegmentDraws = 200000;

int signed_log_bin(double x) {
  const double m = std::floor(std::log2(1.0 + std::abs(x)));
  const int b = static_cast<int>(std::min(m, 4.0)) + (std::abs(x) > 1e-9 ? 1 : 0);
  return x < 0.0 ? -b : b;
}

nlohmann::json segment_json(const Segment& s) {
  return {{"text", serialize_segment(s)},
          {"states", s.states},
          {"actions", s.actions},
          {"term_index", s.term_index ? nlohmann::json(*s.term_index) : nlohmann::json(nullptr)},
          {"terminates_early", s.terminates_early()}};
}

bool ends_in_terminal(const Segment& s) { return s.term_index && *s.term_index + 1 == s.length(); }

// Draws segments until `accept` holds; throws when none turns up.
template <class Pred>
Segment draw_segment(const TabularMdp& mdp, std::size_t n, Rng& rng, Pred accept, const char* what) {
  for (std::size_t i = 0; i < kMaxSegmentDraws; ++i) {
    auto s = sample_segment(mdp, n, rng);
    if (accept(s)) return s;
  }
  throw std::runtime_error(std::string("could not find a ") + what + " segment");
}

const char* action_name(std::size_t a) {
  static const char* names[] = {"up", "right", "down", "left"};
  return a < 4 ? names[a] : "?";
}

}  // namespace

std::pair<int, int> pair_bin(const TabularMdp& mdp, const LabelContext& ctx, const Segment& a, const Segment& b) {
  const auto sa = segment_stats(mdp, a, ctx.w, ctx.sol);
  const auto sb = segment_stats(mdp, b, ctx.w, ctx.sol);
  return {signed_log_bin(sa.partial_return - sb.partial_return), signed_log_bin(sa.statechg - sb.statechg)};
}

std::vector<ElicitationPair> build_elicitation_pool(const Domain& task, Rng& rng, std::size_t n_pairs,
                                                    std::size_t seg_len) {
  if (n_pairs == 0) throw std::invalid_argument("pool needs at least one pair");
  if (seg_len < 3) throw std::invalid_argument("pool segments need length >= 3 for shifted pairs");
  const auto& mdp = task.mdp;
  const auto ctx = LabelContext::solve(mdp, task.schema.ground_truth);

  const std::size_t n_groups = n_pairs / 10;
  const std::size_t n_term = n_pairs / 10;
  const std::size_t n_strat = n_pairs - 3 * n_groups - n_term;

  std::vector<ElicitationPair> pool;
  std::set<std::pair<std::string, std::string>> seen;
  auto fresh = [&](const Segment& a, const Segment& b) {
    if (a == b) return false;
    return seen.insert({serialize_segment(a), serialize_segment(b)}).second &&
           seen.insert({serialize_segment(b), serialize_segment(a)}).second;
  };

  // Stratified pairs: bucket candidates by coordinate bin, then take one per
  // bin in turn.
  std::map<std::pair<int, int>, std::vector<std::pair<Segment, Segment>>> buckets;
  std::set<std::pair<std::string, std::string>> candidate_keys;
  const std::size_t n_candidates = 20 * n_strat;
  for (std::size_t i = 0, tries = 0; i < n_candidates && tries < 50 * n_candidates + 1000; ++tries) {
    auto a = sample_segment(mdp, seg_len, rng);
    auto b = sample_segment(mdp, seg_len, rng);
    if (a == b || !candidate_keys.insert({serialize_segment(a), serialize_segment(b)}).second) continue;
    buckets[pair_bin(mdp, ctx, a, b)].push_back({std::move(a), std::move(b)});
    ++i;
  }
  std::map<std::pair<int, int>, std::size_t> next;
  while (pool.size() < n_strat) {
    bool took = false;
    for (auto& [bin, pairs] : buckets) {
      auto& k = next[bin];
      while (k < pairs.size() && !fresh(pairs[k].first, pairs[k].second)) ++k;
      if (k == pairs.size()) continue;
      pool.push_back({pairs[k].first, pairs[k].second, "stratified", std::nullopt});
      ++k;
      took = true;
      if (pool.size() == n_strat) break;
    }
    if (!took) throw std::runtime_error("too few distinct segment pairs for the pool");
  }

  auto nonterminal = [](const Segment& s) { return !s.term_index; };
  for (std::size_t i = 0; i < n_term; ++i) {
    for (std::size_t tries = 0;; ++tries) {
      if (tries > 1000) throw std::runtime_error("too few distinct terminal segment pairs");
      auto t = draw_segment(mdp, seg_len, rng, [](const Segment& s) { return s.term_index.has_value(); }, "terminal");
      auto u = draw_segment(mdp, seg_len, rng, nonterminal, "non-terminal");
      if (!fresh(t, u)) continue;
      pool.push_back({std::move(t), std::move(u), "terminal_vs_nonterminal", std::nullopt});
      break;
    }
  }

  for (std::size_t g = 0; g < n_groups; ++g) {
    for (std::size_t tries = 0;; ++tries) {
      if (tries > 1000) throw std::runtime_error("too few distinct segments for shifted pairs");
      auto t = draw_segment(mdp, seg_len, rng, ends_in_terminal, "late-terminating");
      auto u = draw_segment(mdp, seg_len, rng, nonterminal, "non-terminal");
      auto t1 = shift_for_early_termination(t, 1);
      auto t2 = shift_for_early_termination(t, 2);
      const auto before = seen;
      if (!fresh(t, u) || !fresh(t1, u) || !fresh(t2, u)) {
        seen = before;
        continue;
      }
      pool.push_back({std::move(t), u, "shifted", g});
      pool.push_back({std::move(t1), u, "shifted", g});
      pool.push_back({std::move(t2), std::move(u), "shifted", g});
      break;
    }
  }

  std::shuffle(pool.begin(), pool.end(), rng);
  for (auto& p : pool)
    if (uniform01(rng) < 0.5) std::swap(p.left, p.right);
  return pool;
}

nlohmann::json grid_model_payload(const Domain& task, const RewardWeights& w) {
  const auto& mdp = task.mdp;
  const auto sol = value_iteration(mdp, w, mdp.gamma_solve());
  const Policy pi = max_entropy_optimal_policy(sol);
  const Vector r = mdp.expected_features() * w.vec();
  const std::size_t width = task.grid ? task.grid->width : mdp.n_states();
  const std::size_t height = task.grid ? task.grid->height : 1;
  nlohmann::json value = nlohmann::json::array();
  nlohmann::json reward = nlohmann::json::array();
  nlohmann::json arrows = nlohmann::json::array();
  for (std::size_t s = 0; s < width * height; ++s) {
    const auto si = static_cast<Eigen::Index>(s);
    value.push_back(sol.v[si]);
    double mean_r = 0.0;
    nlohmann::json acts = nlohmann::json::array();
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      mean_r += r[static_cast<Eigen::Index>(mdp.sa(s, a))] / static_cast<double>(mdp.n_actions());
      if (!mdp.is_terminal(s) && pi.probs(si, static_cast<Eigen::Index>(a)) > 0.0)
        acts.push_back(task.grid ? nlohmann::json(action_name(a)) : nlohmann::json(a));
    }
    reward.push_back(mean_r);
    arrows.push_back(acts);
  }
  return {{"width", width}, {"height", height}, {"value", value}, {"reward", reward}, {"arrows", arrows}};
}

Session::Session(std::string id, std::shared_ptr<const Domain> task, std::shared_ptr<const PolicySet> ps,
                 SessionOptions options)
    : id_(std::move(id)), task_(std::move(task)), ps_(std::move(ps)), options_(std::move(options)) {
  if (!task_) throw std::invalid_argument("session needs a task");
  if (options_.relearn_every == 0) throw std::invalid_argument("relearn_every must be positive");
  auto rng = make_rng(options_.seed, {7});
  pool_ = build_elicitation_pool(*task_, rng, options_.n_pairs, options_.seg_len);
  if (!options_.log_path.empty()) write_header();
  if (options_.background) worker_ = std::thread([this] { worker_loop(); });
}

Session::~Session() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

void Session::write_header() {
  std::ofstream out(options_.log_path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open session log " + options_.log_path);
  const nlohmann::json header{{"format", "prefrl-session-log"},
                              {"version", 1},
                              {"id", id_},
                              {"n_pairs", options_.n_pairs},
                              {"seg_len", options_.seg_len},
                              {"relearn_every", options_.relearn_every},
                              {"learn_partial_return", options_.learn_partial_return},
                              {"seed", options_.seed}};
  out << header.dump() << "\n";
}

void Session::append_event(const Event& e) {
  std::ofstream out(options_.log_path, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to session log " + options_.log_path);
  out << nlohmann::json{{"index", e.index}, {"label", e.label}}.dump() << "\n";
  out.flush();
}

nlohmann::json Session::next_pair() const {
  std::lock_guard lock(mutex_);
  const auto cursor = events_.size();
  if (cursor >= pool_.size()) return {{"done", true}, {"index", cursor}, {"total", pool_.size()}};
  const auto& p = pool_[cursor];
  nlohmann::json j{{"done", false},
                   {"index", cursor},
                   {"number", cursor + 1},
                   {"total", pool_.size()},
                   {"kind", p.kind},
                   {"left", segment_json(p.left)},
                   {"right", segment_json(p.right)}};
  if (p.group) j["group"] = *p.group;
  return j;
}

PreferenceDataset Session::snapshot_locked() const {
  PreferenceDataset d;
  d.mdp_ref = "session:" + id_;
  d.seg_len = options_.seg_len;
  for (const auto& e : events_) {
    const auto mu = mu_from_label(e.label);
    if (!mu) continue;
    PreferenceSample s;
    s.seg1 = pool_[e.index].left;
    s.seg2 = pool_[e.index].right;
    s.mu = *mu;
    s.source = SampleSource::Human;
    s.subject_id = id_;
    s.pair_id = std::to_string(e.index);
    d.samples.push_back(std::move(s));
  }
  return d;
}

Session::Model Session::learn(const PreferenceDataset& d) const {
  Model m;
  const auto doubled = double_with_reversal(d);
  auto config = options_.learners.regret;
  config.history_stride = std::max<std::size_t>(1, config.epochs / 100);
  if (!ps_ || ps_->empty()) throw LearningError("session has no policy set for regret learning");
  const auto r = learn_regret(doubled, task_->mdp, *ps_, config);
  m.w = r.w;
  m.loss_history = r.loss_history;
  m.final_loss = r.final_loss;
  if (options_.learn_partial_return) m.w_partial = learn_partial_return(doubled, task_->mdp, options_.learners.partial_return).w;
  m.trained_on = d.size();
  return m;
}

SubmitResult Session::submit(const std::string& label) {
  mu_from_label(label);  // validates
  std::unique_lock lock(mutex_);
  if (events_.size() >= pool_.size()) throw std::logic_error("no pair is pending");
  const Event e{events_.size(), label};
  if (!options_.log_path.empty()) append_event(e);
  events_.push_back(e);
  SubmitResult out;
  out.collected = events_.size();
  auto snap = snapshot_locked();
  out.learning_size = snap.size();
  if (events_.size() % options_.relearn_every != 0 || snap.empty()) return out;
  out.relearn_scheduled = true;
  if (options_.background) {
    queued_ = std::move(snap);
    lock.unlock();
    cv_.notify_all();
    return out;
  }
  busy_ = true;
  lock.unlock();
  std::optional<Model> m;
  std::string error;
  try {
    m = learn(snap);
  } catch (const std::exception& ex) {
    error = ex.what();
  }
  lock.lock();
  busy_ = false;
  if (m) {
    model_ = std::move(m);
    ++relearns_;
  }
  last_error_ = error;
  return out;
}

void Session::worker_loop() {
  std::unique_lock lock(mutex_);
  for (;;) {
    cv_.wait(lock, [&] { return stopping_ || queued_; });
    if (stopping_) return;
    auto snap = std::move(*queued_);
    queued_.reset();
    busy_ = true;
    lock.unlock();
    std::optional<Model> m;
    std::string error;
    try {
      m = learn(snap);
    } catch (const std::exception& ex) {
      error = ex.what();
    }
    lock.lock();
    busy_ = false;
    if (m) {
      model_ = std::move(m);
      ++relearns_;
    }
    last_error_ = error;
    cv_.notify_all();
  }
}

void Session::wait_idle() const {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return stopping_ || (!queued_ && !busy_); });
}

nlohmann::json Session::current_model() const {
  std::optional<Model> m;
  nlohmann::json j;
  {
    std::lock_guard lock(mutex_);
    m = model_;
    j = {{"has_model", model_.has_value()},
         {"relearns", relearns_},
         {"collected", events_.size()},
         {"learning", busy_ || queued_.has_value()}};
    if (!last_error_.empty()) j["error"] = last_error_;
  }
  if (!m) return j;
  std::vector<double> w(m->w.vec().data(), m->w.vec().data() + m->w.vec().size());
  j["w"] = w;
  j["feature_names"] = task_->schema.names;
  j["trained_on"] = m->trained_on;
  j["final_loss"] = m->final_loss;
  j["loss_history"] = m->loss_history;
  j["grid"] = grid_model_payload(*task_, m->w);
  if (m->w_partial) {
    std::vector<double> wp(m->w_partial->vec().data(), m->w_partial->vec().data() + m->w_partial->vec().size());
    j["w_partial_return"] = wp;
  }
  return j;
}

std::string Session::export_csv() const {
  std::lock_guard lock(mutex_);
  std::ostringstream os;
  os << "pair_id,subject_id,seg1,seg2,label\n";
  for (const auto& e : events_) {
    const auto& p = pool_[e.index];
    os << e.index << ',' << csv_quote(id_) << ',' << csv_quote(serialize_segment(p.left)) << ','
       << csv_quote(serialize_segment(p.right)) << ',' << e.label << "\n";
  }
  return os.str();
}

PreferenceDataset Session::dataset() const {
  std::lock_guard lock(mutex_);
  return snapshot_locked();
}

std::optional<RewardWeights> Session::current_w() const {
  std::lock_guard lock(mutex_);
  if (!model_) return std::nullopt;
  return model_->w;
}

std::size_t Session::relearn_count() const {
  std::lock_guard lock(mutex_);
  return relearns_;
}

std::unique_ptr<Session> Session::replay(const std::string& log_path, std::shared_ptr<const Domain> task,
                                         std::shared_ptr<const PolicySet> ps, LearnerSettings learners) {
  std::ifstream in(log_path);
  if (!in) throw std::runtime_error("cannot open session log " + log_path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty session log " + log_path);
  const auto header = nlohmann::json::parse(line);
  if (header.value("format", std::string{}) != "prefrl-session-log") throw std::runtime_error("not a session log");
  SessionOptions o;
  o.n_pairs = header.at("n_pairs").get<std::size_t>();
  o.seg_len = header.at("seg_len").get<std::size_t>();
  o.relearn_every = header.at("relearn_every").get<std::size_t>();
  o.learn_partial_return = header.at("learn_partial_return").get<bool>();
  o.seed = header.at("seed").get<std::uint64_t>();
  o.learners = std::move(learners);
  o.background = false;
  auto s = std::make_unique<Session>(header.at("id").get<std::string>(), std::move(task), std::move(ps), o);
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto e = nlohmann::json::parse(line);
    if (e.at("index").get<std::size_t>() != expected) throw std::runtime_error("session log events out of order");
    s->submit(e.at("label").get<std::string>());
    ++expected;
  }
  return s;
}

}  // namespace prefrl
