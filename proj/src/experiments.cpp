#include "prefrl/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

namespace prefrl {

namespace {

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::string generator_name(const ModelSpec& g) {
  std::string s = to_string(g.kind) + (g.noiseless ? "/noiseless" : "/stochastic");
  if (g.uniform_c) s += "/c=" + fmt(*g.uniform_c);
  return s;
}

// "regret/noiseless" -> ("regret", "noiseless").
std::pair<std::string, std::string> split_generator(const std::string& g) {
  const auto a = g.find('/');
  if (a == std::string::npos) return {g, ""};
  const auto b = g.find('/', a + 1);
  return {g.substr(0, a), g.substr(a + 1, b == std::string::npos ? std::string::npos : b - a - 1)};
}

void sort_rows(std::vector<ResultRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.condition, a.seg_len, a.dataset_size, a.generator, a.learner, a.mdp_id) <
           std::tie(b.condition, b.seg_len, b.dataset_size, b.generator, b.learner, b.mdp_id);
  });
}

bool needs_policy_set(const std::vector<ModelKind>& learners) {
  return std::any_of(learners.begin(), learners.end(), [](ModelKind k) { return k != ModelKind::PartialReturn; });
}

double mean(const std::vector<double>& xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

}  // namespace

std::string ExperimentResult::to_csv() const {
  std::ostringstream out;
  out << "mdp_id,condition,generator,learner,dataset_size,seg_len,seed,raw_return,normalized_return,near_optimal,"
         "better_than_random,error,learned_w\n";
  for (const auto& r : rows) {
    std::string w;
    for (std::size_t i = 0; i < r.learned_w.size(); ++i) w += (i ? ";" : "") + fmt(r.learned_w[i]);
    out << r.mdp_id << ',' << csv_quote(r.condition) << ',' << csv_quote(r.generator) << ',' << csv_quote(r.learner)
        << ',' << r.dataset_size << ',' << r.seg_len << ',' << r.seed << ',' << fmt(r.raw_return) << ','
        << fmt(r.normalized_return) << ',' << (r.near_optimal ? 1 : 0) << ',' << (r.better_than_random ? 1 : 0) << ','
        << csv_quote(r.error) << ',' << csv_quote(w) << '\n';
  }
  return out.str();
}

void score_row(ResultRow& row, const ReturnNormalizer& normalizer, const TabularMdp& mdp, const RewardWeights& w) {
  const auto s = normalizer.score(greedy_policy_for(mdp, w));
  row.raw_return = s.raw;
  row.normalized_return = s.normalized;
  row.near_optimal = s.normalized > kNearOptimal;
  row.better_than_random = s.normalized > 0.0;
}

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  auto rng = make_rng(seed, tags);
  return rng();
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<SweepCell> SweepConfig::default_cells() {
  std::vector<SweepCell> cells;
  for (bool noiseless : {true, false}) {
    cells.push_back({partial_return_model(noiseless), ModelKind::PartialReturn});
    cells.push_back({regret_model(noiseless), ModelKind::Regret});
  }
  return cells;
}

ResultRow learn_and_score(const PreferenceDataset& d, ModelKind learner, const TabularMdp& mdp,
                          const ReturnNormalizer& normalizer, const PolicySet* ps, const LearnerSettings& settings) {
  ResultRow row;
  row.learner = to_string(learner);
  row.dataset_size = d.size();
  row.seg_len = d.seg_len;
  row.seed = d.seed.value_or(0);
  row.normalized_return = std::numeric_limits<double>::quiet_NaN();
  row.raw_return = std::numeric_limits<double>::quiet_NaN();
  try {
    const auto doubled = double_with_reversal(d);
    LearnResult r;
    if (learner == ModelKind::PartialReturn) {
      r = learn_partial_return(doubled, mdp, settings.partial_return);
    } else if (learner == ModelKind::Regret) {
      if (!ps) throw LearningError("regret learning needs a policy set");
      r = learn_regret(doubled, mdp, *ps, settings.regret);
    } else {
      throw LearningError("no learner for model " + to_string(learner));
    }
    row.learned_w.assign(r.w.vec().data(), r.w.vec().data() + r.w.vec().size());
    score_row(row, normalizer, mdp, r.w);
  } catch (const std::exception& e) {
    row.error = e.what();
    row.near_optimal = false;
    row.better_than_random = false;
  }
  return row;
}

ExperimentResult run_random_mdp_sweep(const SweepConfig& config, const ProgressFn& progress) {
  if (config.cells.empty()) throw std::invalid_argument("sweep has no cells");
  std::vector<ModelKind> learners;
  for (const auto& c : config.cells) learners.push_back(c.learner);
  const bool with_ps = needs_policy_set(learners);

  std::vector<std::vector<ResultRow>> per_mdp(config.n_mdps);
  std::mutex progress_mutex;
  parallel_for(config.n_mdps, config.threads, [&](std::size_t m) {
    auto rng = make_rng(config.seed, {0, m});
    const auto domain = sample_random_mdp(rng, config.mdp_params);
    const auto& mdp = domain.mdp;
    const auto& w_true = domain.schema.ground_truth;
    std::optional<ReturnNormalizer> normalizer;
    std::string setup_error;
    try {
      normalizer.emplace(mdp, w_true);
    } catch (const std::exception& e) {
      setup_error = e.what();
    }
    std::optional<PolicySet> ps;
    if (with_ps && setup_error.empty()) {
      auto ps_rng = make_rng(config.seed, {2, m});
      ps = generate_sf_policy_set(mdp, w_true, ps_rng, config.learners.policy_set);
    }
    const auto ctx = LabelContext::solve(mdp, w_true);
    auto& rows = per_mdp[m];
    for (bool early : config.include_early_term) {
      for (auto seg_len : config.seg_lens) {
        for (auto size : config.dataset_sizes) {
          const auto data_seed = derive_seed(config.seed, {1, m, seg_len, size, early ? 1u : 0u});
          for (const auto& cell : config.cells) {
            ResultRow row;
            if (setup_error.empty()) {
              try {
                const auto d = generate_dataset(ctx, cell.generator, size, seg_len, data_seed, early);
                row = learn_and_score(d, cell.learner, mdp, *normalizer, ps ? &*ps : nullptr, config.learners);
              } catch (const std::exception& e) {
                row.error = e.what();
              }
            } else {
              row.error = setup_error;
            }
            row.mdp_id = m;
            row.condition = early ? "early_term=1" : "early_term=0";
            row.generator = generator_name(cell.generator);
            row.learner = to_string(cell.learner);
            row.dataset_size = size;
            row.seg_len = seg_len;
            row.seed = data_seed;
            if (!row.ok()) row.normalized_return = row.raw_return = std::numeric_limits<double>::quiet_NaN();
            rows.push_back(std::move(row));
          }
        }
      }
    }
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress("mdp " + std::to_string(m + 1) + "/" + std::to_string(config.n_mdps) + " done" +
               (ps ? " (" + std::to_string(ps->size()) + " policies)" : ""));
    }
  });

  ExperimentResult out{"random_mdp_sweep", {}};
  for (auto& rows : per_mdp)
    for (auto& r : rows) out.rows.push_back(std::move(r));
  sort_rows(out.rows);
  return out;
}

ExperimentResult run_risk_table(const RiskTableConfig& config, const ProgressFn& progress) {
  std::vector<SweepCell> cells;
  for (bool noiseless : {true, false}) {
    cells.push_back({regret_model(noiseless), ModelKind::Regret});
    cells.push_back({partial_return_model(noiseless), ModelKind::PartialReturn});
  }
  const std::size_t n = config.conditions.size() * config.seeds;
  std::vector<std::vector<ResultRow>> per_task(n);
  std::mutex progress_mutex;
  parallel_for(n, config.threads, [&](std::size_t task) {
    const auto ci = task / config.seeds;
    const auto si = task % config.seeds;
    const auto& cond = config.conditions[ci];
    const std::string name = "r_win=" + fmt(cond.r_win) + ",r_lose=" + fmt(cond.r_lose);
    auto rng = make_rng(config.seed, {3, ci, si});
    const auto domain = build_risk_mdp(rng, cond.r_win, cond.r_lose);
    const auto& mdp = domain.mdp;
    const auto& w_true = domain.schema.ground_truth;
    const auto data_seed = derive_seed(config.seed, {1, ci, si});
    for (const auto& cell : cells) {
      ResultRow row;
      try {
        const ReturnNormalizer normalizer(mdp, w_true);
        const auto ctx = LabelContext::solve(mdp, w_true);
        std::optional<PolicySet> ps;
        if (cell.learner == ModelKind::Regret) {
          auto ps_rng = make_rng(config.seed, {2, ci, si});
          ps = generate_sf_policy_set(mdp, w_true, ps_rng, config.learners.policy_set);
        }
        const auto d = generate_dataset(ctx, cell.generator, config.n_pairs, config.seg_len, data_seed);
        row = learn_and_score(d, cell.learner, mdp, normalizer, ps ? &*ps : nullptr, config.learners);
      } catch (const std::exception& e) {
        row.error = e.what();
        row.normalized_return = row.raw_return = std::numeric_limits<double>::quiet_NaN();
      }
      row.mdp_id = si;
      row.condition = name;
      row.generator = generator_name(cell.generator);
      row.learner = to_string(cell.learner);
      row.dataset_size = config.n_pairs;
      row.seg_len = config.seg_len;
      row.seed = data_seed;
      per_task[task].push_back(std::move(row));
    }
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(name + " seed " + std::to_string(si) + " done");
    }
  });
  ExperimentResult out{"risk_table", {}};
  for (auto& rows : per_task)
    for (auto& r : rows) out.rows.push_back(std::move(r));
  sort_rows(out.rows);
  return out;
}

PreferenceDataset filter_dataset(const PreferenceDataset& d, const HumanEvalFilters& filters) {
  PreferenceDataset out = d;
  out.samples.clear();
  for (const auto& s : d.samples) {
    if (filters.stage1_only) {
      if (!s.stage) throw std::invalid_argument("stage filter requested but sample " + s.pair_id + " has no stage");
      if (*s.stage != 1) continue;
    }
    if (filters.drop_early_terminating && (s.seg1.terminates_early() || s.seg2.terminates_early())) continue;
    out.samples.push_back(s);
  }
  return out;
}

ExperimentResult run_human_partition_eval(const PreferenceDataset& d, const Domain& task, const HumanEvalConfig& config,
                                          const ProgressFn& progress) {
  const auto data = filter_dataset(d, config.filters);
  for (auto k : config.k_list)
    if (k == 0 || k > data.size())
      throw std::invalid_argument("cannot split " + std::to_string(data.size()) + " samples into " + std::to_string(k) +
                                  " partitions");
  const auto& mdp = task.mdp;
  const auto& w_true = task.schema.ground_truth;
  const ReturnNormalizer normalizer(mdp, w_true);
  auto ps_rng = make_rng(config.seed, {2});
  const auto ps = generate_sf_policy_set(mdp, w_true, ps_rng, config.learners.policy_set);

  struct Job {
    std::size_t k;
    std::size_t part;
    const PreferenceDataset* data;
  };
  std::vector<std::vector<PreferenceDataset>> partitions;
  for (auto k : config.k_list) {
    auto rng = make_rng(config.seed, {4, k});
    partitions.push_back(split_partitions(data, k, rng));
  }
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < config.k_list.size(); ++i)
    for (std::size_t p = 0; p < partitions[i].size(); ++p) jobs.push_back({config.k_list[i], p, &partitions[i][p]});

  std::vector<std::vector<ResultRow>> per_job(jobs.size());
  std::mutex progress_mutex;
  std::atomic<std::size_t> done{0};
  parallel_for(jobs.size(), config.threads, [&](std::size_t j) {
    for (auto learner : {ModelKind::PartialReturn, ModelKind::Regret}) {
      auto row = learn_and_score(*jobs[j].data, learner, mdp, normalizer, &ps, config.learners);
      row.mdp_id = jobs[j].part;
      row.condition = "k=" + std::to_string(jobs[j].k);
      row.generator = "human";
      row.seed = config.seed;
      per_job[j].push_back(std::move(row));
    }
    const auto n = ++done;
    if (progress && (n % 10 == 0 || n == jobs.size())) {
      std::lock_guard lock(progress_mutex);
      progress(std::to_string(n) + "/" + std::to_string(jobs.size()) + " partitions learned");
    }
  });
  ExperimentResult out{"human_partition_eval", {}};
  for (auto& rows : per_job)
    for (auto& r : rows) out.rows.push_back(std::move(r));
  sort_rows(out.rows);
  return out;
}

ExperimentResult run_generalization(const ExperimentResult& learned, const FeatureSchema& schema,
                                    const GeneralizationConfig& config, const ProgressFn& progress) {
  std::vector<const ResultRow*> sources;
  for (const auto& r : learned.rows) {
    if (!r.ok() || r.learned_w.empty()) continue;
    if (r.learned_w.size() != schema.names.size())
      throw std::invalid_argument("learned weights have " + std::to_string(r.learned_w.size()) +
                                  " entries but the schema has " + std::to_string(schema.names.size()));
    sources.push_back(&r);
  }
  auto params = config.mdp_params;
  std::map<std::string, double> fixed;
  for (std::size_t i = 0; i < schema.names.size(); ++i) fixed[schema.names[i]] = schema.ground_truth[i];
  params.fixed_params = fixed;

  std::vector<std::vector<ResultRow>> per_mdp(config.n_mdps);
  std::mutex progress_mutex;
  parallel_for(config.n_mdps, config.threads, [&](std::size_t m) {
    auto rng = make_rng(config.seed, {5, m});
    const auto domain = sample_random_mdp(rng, params);
    if (domain.schema.names != schema.names) throw std::invalid_argument("generated MDP does not share the schema");
    std::optional<ReturnNormalizer> normalizer;
    std::string setup_error;
    try {
      normalizer.emplace(domain.mdp, domain.schema.ground_truth);
    } catch (const std::exception& e) {
      setup_error = e.what();
    }
    for (const auto* src : sources) {
      ResultRow row;
      row.mdp_id = m;
      row.condition = src->condition;
      row.generator = src->generator + "#" + std::to_string(src->mdp_id);
      row.learner = src->learner;
      row.dataset_size = src->dataset_size;
      row.seg_len = src->seg_len;
      row.seed = config.seed;
      row.learned_w = src->learned_w;
      if (!setup_error.empty()) {
        row.error = setup_error;
        row.normalized_return = row.raw_return = std::numeric_limits<double>::quiet_NaN();
      } else {
        const RewardWeights w(Eigen::Map<const Vector>(src->learned_w.data(),
                                                        static_cast<Eigen::Index>(src->learned_w.size())));
        score_row(row, *normalizer, domain.mdp, w);
      }
      per_mdp[m].push_back(std::move(row));
    }
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress("mdp " + std::to_string(m + 1) + "/" + std::to_string(config.n_mdps) + " scored");
    }
  });
  ExperimentResult out{"generalization", {}};
  for (auto& rows : per_mdp)
    for (auto& r : rows) out.rows.push_back(std::move(r));
  sort_rows(out.rows);
  return out;
}

std::vector<LikelihoodRow> run_likelihood_cv(const PreferenceDataset& d, const LabelContext& ctx,
                                             const LikelihoodConfig& config) {
  if (d.size() < config.folds) throw std::invalid_argument("fewer samples than folds");
  auto rng = make_rng(config.seed, {6});
  const auto folds = split_kfold(d, config.folds, rng);

  struct Entry {
    std::string name;
    StatFitSpec spec;
  };
  const std::vector<Entry> entries{
      {"partial_return", {StatFitKind::Scale, ModelKind::PartialReturn, false}},
      {"regret", {StatFitKind::Scale, ModelKind::Regret, false}},
      {"loglin", {StatFitKind::LogLin, ModelKind::PartialReturn, false}},
      {"partial_return+uniform", {StatFitKind::Scale, ModelKind::PartialReturn, true}},
      {"regret+uniform", {StatFitKind::Scale, ModelKind::Regret, true}},
      {"loglin+uniform", {StatFitKind::LogLin, ModelKind::PartialReturn, true}},
  };

  std::vector<LikelihoodRow> out;
  {
    // p = 0.5 everywhere: ln 2 for any labels.
    std::vector<double> losses;
    for (const auto& f : folds) {
      std::vector<double> p(f.test.size(), 0.5);
      std::vector<Mu> mu;
      for (const auto& s : f.test.samples) mu.push_back(s.mu);
      losses.push_back(xent_loss(p, mu));
    }
    out.push_back({"uninformed", mean(losses), {}, std::nullopt});
  }
  for (const auto& e : entries) {
    std::vector<double> losses;
    std::vector<std::vector<double>> params;
    std::vector<double> uniform;
    for (const auto& f : folds) {
      const auto r = fit_statistic_model(f.train, f.test, e.spec, ctx, config.fit);
      losses.push_back(r.test_loss);
      params.push_back(r.params);
      if (r.c) uniform.push_back(logistic(*r.c));
    }
    LikelihoodRow row{e.name, mean(losses), {}, std::nullopt};
    for (std::size_t j = 0; j < params.front().size(); ++j) {
      std::vector<double> col;
      for (const auto& p : params) col.push_back(p[j]);
      row.mean_params.push_back(mean(col));
    }
    if (!uniform.empty()) row.mean_uniform_prob = mean(uniform);
    out.push_back(std::move(row));
  }
  return out;
}

nlohmann::json summarize_rows(const ExperimentResult& r) {
  using Key = std::tuple<std::string, std::string, std::string, std::size_t, std::size_t>;
  struct Acc {
    std::size_t runs = 0, errors = 0, near = 0, better = 0;
    std::vector<double> normalized;
  };
  std::map<Key, Acc> groups;
  for (const auto& row : r.rows) {
    auto& a = groups[{row.condition, row.generator, row.learner, row.dataset_size, row.seg_len}];
    ++a.runs;
    if (!row.ok()) {
      ++a.errors;
      continue;
    }
    a.near += row.near_optimal;
    a.better += row.better_than_random;
    a.normalized.push_back(row.normalized_return);
  }
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [k, a] : groups) {
    const double n = static_cast<double>(a.runs);
    out.push_back({{"condition", std::get<0>(k)},
                   {"generator", std::get<1>(k)},
                   {"learner", std::get<2>(k)},
                   {"dataset_size", std::get<3>(k)},
                   {"seg_len", std::get<4>(k)},
                   {"runs", a.runs},
                   {"errors", a.errors},
                   {"near_optimal_pct", 100.0 * static_cast<double>(a.near) / n},
                   {"better_than_random_pct", 100.0 * static_cast<double>(a.better) / n},
                   {"mean_normalized_return", a.normalized.empty() ? nlohmann::json(nullptr)
                                                                   : nlohmann::json(mean(a.normalized))}});
  }
  return out;
}

namespace {

// Matched rows (generator kind == learner) of the two models per MDP.
struct Matched {
  const ResultRow* regret = nullptr;
  const ResultRow* partial = nullptr;
};
using MatchKey = std::tuple<std::string, std::size_t, std::string, std::size_t>;  // condition, seg_len, noise, size

std::map<MatchKey, std::map<std::size_t, Matched>> match_rows(const ExperimentResult& r) {
  std::map<MatchKey, std::map<std::size_t, Matched>> out;
  for (const auto& row : r.rows) {
    const auto [kind, noise] = split_generator(row.generator);
    if (kind != row.learner) continue;
    auto& m = out[{row.condition, row.seg_len, noise, row.dataset_size}][row.mdp_id];
    if (row.learner == "regret") m.regret = &row;
    if (row.learner == "partial_return") m.partial = &row;
  }
  return out;
}

nlohmann::json key_json(const MatchKey& k) {
  return {{"condition", std::get<0>(k)},
          {"seg_len", std::get<1>(k)},
          {"noise", std::get<2>(k)},
          {"dataset_size", std::get<3>(k)}};
}

}  // namespace

nlohmann::json outcome_counts(const ExperimentResult& r) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [key, by_mdp] : match_rows(r)) {
    std::size_t both = 0, only_regret = 0, only_partial = 0, neither = 0;
    for (const auto& [id, m] : by_mdp) {
      if (!m.regret || !m.partial) continue;
      const bool a = m.regret->near_optimal;
      const bool b = m.partial->near_optimal;
      (a && b ? both : a ? only_regret : b ? only_partial : neither) += 1;
    }
    auto j = key_json(key);
    j["both"] = both;
    j["only_regret"] = only_regret;
    j["only_partial_return"] = only_partial;
    j["neither"] = neither;
    out.push_back(j);
  }
  return out;
}

nlohmann::json paired_tests(const ExperimentResult& r) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [key, by_mdp] : match_rows(r)) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& [id, m] : by_mdp) {
      if (!m.regret || !m.partial) continue;
      // Failed runs count as the worst clipped score.
      xs.push_back(m.regret->ok() ? m.regret->normalized_return : -1.0);
      ys.push_back(m.partial->ok() ? m.partial->normalized_return : -1.0);
    }
    if (xs.empty()) continue;
    const auto w = wilcoxon_signed_rank(clip_normalized(xs), clip_normalized(ys));
    auto j = key_json(key);
    j["n_pairs"] = xs.size();
    j["n_nonzero"] = w.n;
    j["w"] = w.w;
    j["w_plus"] = w.w_plus;
    j["p"] = w.p;
    j["exact"] = w.exact;
    j["degenerate"] = w.degenerate;
    out.push_back(j);
  }
  return out;
}

nlohmann::json risk_table_summary(const ExperimentResult& r) {
  std::map<std::string, std::map<std::string, std::pair<std::size_t, std::size_t>>> table;
  for (const auto& row : r.rows) {
    auto& cell = table[row.generator][row.condition];
    cell.first += row.near_optimal;
    cell.second += 1;
  }
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [gen, conds] : table)
    for (const auto& [cond, c] : conds)
      out[gen][cond] = static_cast<double>(c.first) / static_cast<double>(c.second);
  return out;
}

nlohmann::json likelihood_summary(const std::vector<LikelihoodRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j{{"model", r.model}, {"mean_test_loss", r.mean_test_loss}, {"mean_params", r.mean_params}};
    if (r.mean_uniform_prob) j["mean_uniform_prob"] = *r.mean_uniform_prob;
    out.push_back(j);
  }
  return out;
}

}  // namespace prefrl
