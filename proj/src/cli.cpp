#include "prefrl/cli.hpp"

#include "prefrl/experiments.hpp"
#include "prefrl/identifiability.hpp"
#include "prefrl/service.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace prefrl {

namespace {

namespace fs = std::filesystem;

// Reads CLI11 configuration from a JSON object. Nested objects address
// subcommands: {"seed": 1, "sweep": {"n-mdps": 5}}.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    nlohmann::json j;
    for (const CLI::Option* opt : app->get_options({})) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const auto name = opt->get_lnames().front();
      if (opt->count() > 0) {
        const auto& r = opt->results();
        j[name] = r.size() == 1 ? nlohmann::json(r.front()) : nlohmann::json(r);
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    for (const CLI::App* sub : app->get_subcommands({})) j[sub->get_name()] = nlohmann::json::parse(to_config(sub, default_also, false, ""));
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    input >> j;
    std::vector<CLI::ConfigItem> items;
    collect(j, "", {}, items);
    return items;
  }

 private:
  static void collect(const nlohmann::json& j, const std::string& name, std::vector<std::string> prefix,
                      std::vector<CLI::ConfigItem>& items) {
    if (j.is_object()) {
      if (!name.empty()) prefix.push_back(name);
      for (const auto& [k, v] : j.items()) collect(v, k, prefix, items);
      return;
    }
    CLI::ConfigItem item;
    item.parents = prefix;
    item.name = name;
    auto text = [](const nlohmann::json& v) {
      if (v.is_string()) return v.get<std::string>();
      if (v.is_boolean()) return std::string(v.get<bool>() ? "true" : "false");
      return v.dump();
    };
    if (j.is_array()) {
      for (const auto& v : j) item.inputs.push_back(text(v));
    } else {
      item.inputs.push_back(text(j));
    }
    items.push_back(std::move(item));
  }
};

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return nlohmann::json::parse(in);
}

Domain load_task(const std::string& layout) {
  return build_grid_task(load_grid(layout.empty() ? default_delivery_layout_path() : layout));
}

std::vector<bool> early_term_values(const std::string& mode) {
  if (mode == "include") return {true};
  if (mode == "exclude") return {false};
  if (mode == "both") return {true, false};
  throw std::invalid_argument("--early-term must be include, exclude or both");
}

std::vector<bool> noise_values(const std::string& mode) {
  if (mode == "noiseless") return {true};
  if (mode == "stochastic") return {false};
  if (mode == "both") return {true, false};
  throw std::invalid_argument("--noise must be noiseless, stochastic or both");
}

ProgressFn progress_printer(bool quiet) {
  if (quiet) return {};
  return [](const std::string& msg) { std::cerr << msg << "\n"; };
}

// One row per generator, one column per condition.
std::string risk_table_csv(const nlohmann::json& summary, const std::vector<RiskCondition>& conditions) {
  std::ostringstream out;
  out << "generator";
  std::vector<std::string> names;
  for (const auto& c : conditions) {
    std::ostringstream n;
    n << "r_win=" << c.r_win << ",r_lose=" << c.r_lose;
    names.push_back(n.str());
    out << ',' << csv_quote(n.str());
  }
  out << '\n';
  for (const auto& [gen, row] : summary.items()) {
    out << csv_quote(gen);
    for (const auto& n : names) out << ',' << (row.contains(n) ? row[n].dump() : "");
    out << '\n';
  }
  return out.str();
}

void print_summary(const nlohmann::json& rows) {
  for (const auto& r : rows) {
    std::cout << r.value("condition", "") << " " << r.value("generator", "") << " -> " << r.value("learner", "")
              << " |D|=" << r.value("dataset_size", 0) << ": near-optimal " << r.value("near_optimal_pct", 0.0)
              << "%, errors " << r.value("errors", 0) << "\n";
  }
}

PolicySet policy_set_source(const std::string& source, const Domain& task, std::uint64_t seed) {
  if (source == "generate") {
    auto rng = make_rng(seed, {2});
    return generate_sf_policy_set(task.mdp, task.schema.ground_truth, rng, {});
  }
  // A JSON document {"weights": [[...], ...]}; the set holds each reward's
  // max-entropy optimal policy.
  const auto j = read_json(source);
  std::vector<Policy> policies;
  for (const auto& w : j.at("weights")) {
    const auto v = w.get<std::vector<double>>();
    policies.push_back(greedy_policy_for(task.mdp, RewardWeights(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())))));
  }
  return policy_set_from_policies(task.mdp, policies);
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Reward learning from pairwise preferences: partial-return and regret preference models"};
  app.require_subcommand(1);
  app.fallthrough();
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON config file mirroring the flags");
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::string out_dir = "results";
  bool quiet = false;
  app.add_option("--seed", seed, "Root random seed")->capture_default_str();
  app.add_option("--threads", threads, "Worker threads (0 = all cores)")->capture_default_str();
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();
  app.add_flag("--quiet", quiet, "Suppress progress output");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Random-MDP sweep comparing the two learners");
  std::size_t n_mdps = 30;
  std::vector<std::size_t> sizes{30, 300, 3000};
  std::vector<std::size_t> seg_lens{3};
  std::string noise = "both";
  std::string early = "include";
  bool mixed = false;
  bool full = false;
  std::size_t pr_epochs = partial_return_config().epochs;
  std::size_t regret_epochs = regret_config().epochs;
  sweep->add_option("--n-mdps", n_mdps, "Number of random MDPs")->capture_default_str();
  sweep->add_option("--sizes", sizes, "Dataset sizes")->capture_default_str();
  sweep->add_option("--seg-lens", seg_lens, "Segment lengths")->capture_default_str();
  sweep->add_option("--noise", noise, "noiseless, stochastic or both")->capture_default_str();
  sweep->add_option("--early-term", early, "include, exclude or both")->capture_default_str();
  sweep->add_flag("--mixed", mixed, "Also learn each model from the other model's labels");
  sweep->add_flag("--full", full, "Use 100 MDPs");
  sweep->add_option("--pr-epochs", pr_epochs, "Partial-return learner epochs")->capture_default_str();
  sweep->add_option("--regret-epochs", regret_epochs, "Regret learner epochs")->capture_default_str();

  // risk-table
  auto* risk = app.add_subcommand("risk-table", "Near-optimal proportions on stochastic risk MDPs");
  std::size_t pairs = 3000;
  std::size_t risk_seeds = 10;
  std::size_t seg_len = 3;
  risk->add_option("--pairs", pairs, "Preferences per dataset")->capture_default_str();
  risk->add_option("--seeds", risk_seeds, "MDPs per condition")->capture_default_str();
  risk->add_option("--seg-len", seg_len, "Segment length")->capture_default_str();

  // identifiability
  auto* ident = app.add_subcommand("identifiability", "Exact counterexample checks");
  bool ident_json = false;
  ident->add_flag("--json", ident_json, "Print the report as JSON");

  // human-eval and generalize share their data options.
  std::string data_path;
  std::string layout;
  std::vector<std::size_t> k_list{1, 2, 5, 10, 20, 50, 100};
  bool stage1_only = false;
  bool drop_early = false;
  auto* human = app.add_subcommand("human-eval", "Learn from partitions of a human dataset");
  auto* gen = app.add_subcommand("generalize", "Score partition-learned rewards on random MDPs");
  for (auto* sub : {human, gen}) {
    sub->add_option("--data", data_path, "Preference CSV")->required();
    sub->add_option("--layout", layout, "Grid layout JSON (default: bundled delivery task)");
    sub->add_option("--k", k_list, "Partition counts")->capture_default_str();
    sub->add_flag("--stage1-only", stage1_only, "Keep only stage-1 samples");
    sub->add_flag("--drop-early-term", drop_early, "Drop pairs with an early-terminating segment");
  }
  std::size_t gen_mdps = 100;
  gen->add_option("--n-mdps", gen_mdps, "Random MDPs sharing the task reward")->capture_default_str();

  // likelihood
  auto* lik = app.add_subcommand("likelihood", "Cross-validated likelihood of preference models");
  std::size_t folds = 10;
  lik->add_option("--data", data_path, "Preference CSV")->required();
  lik->add_option("--layout", layout, "Grid layout JSON (default: bundled delivery task)");
  lik->add_option("--folds", folds, "Cross-validation folds")->capture_default_str();

  // gen-data
  auto* gd = app.add_subcommand("gen-data", "Generate a synthetic preference dataset on a grid task");
  std::string model = "regret";
  bool noiseless = false;
  bool no_early = false;
  std::string data_out;
  gd->add_option("--layout", layout, "Grid layout JSON (default: bundled delivery task)");
  gd->add_option("--model", model, "Generating preference model")->capture_default_str();
  gd->add_flag("--noiseless", noiseless, "Deterministic labels");
  gd->add_option("--pairs", pairs, "Number of pairs")->capture_default_str();
  gd->add_option("--seg-len", seg_len, "Segment length")->capture_default_str();
  gd->add_flag("--no-early-term", no_early, "Resample segments that terminate early");
  gd->add_option("--output", data_out, "Output file (.csv or .json)")->required();

  // learn
  auto* learn = app.add_subcommand("learn", "Learn a reward from a preference dataset");
  std::string ps_source;
  std::string weights_out;
  double lr = 0.0;
  std::size_t epochs = 0;
  learn->add_option("--data", data_path, "Preference CSV")->required();
  learn->add_option("--layout", layout, "Grid layout JSON (default: bundled delivery task)");
  learn->add_option("--model", model, "partial_return or regret")->capture_default_str();
  learn->add_option("--policy-set", ps_source, "Regret only: 'generate' or a JSON file of reward weights");
  learn->add_option("--lr", lr, "Learning rate (default per model)");
  learn->add_option("--epochs", epochs, "Epochs (default per model)");
  learn->add_option("--output", weights_out, "Weights JSON")->required();

  // score
  auto* score = app.add_subcommand("score", "Normalized return of a learned reward");
  std::string weights_in;
  score->add_option("--weights", weights_in, "Weights JSON")->required();
  score->add_option("--layout", layout, "Grid layout JSON (default: bundled delivery task)");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "HTTP service for live preference elicitation");
  std::string log_dir;
  std::string listen;
  std::size_t n_pairs = 40;
  std::size_t relearn_every = 10;
  serve_cmd->add_option("--layout", layout, "Grid layout JSON (default: bundled delivery task)");
  serve_cmd->add_option("--log-dir", log_dir, "Directory for session event logs");
  serve_cmd->add_option("--listen", listen, "host:port (default: PREFRL_LISTEN or 127.0.0.1:8080)");
  serve_cmd->add_option("--n-pairs", n_pairs, "Pairs per session")->capture_default_str();
  serve_cmd->add_option("--relearn-every", relearn_every, "Submissions between relearns")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const fs::path out(out_dir);
    const auto progress = progress_printer(quiet);

    if (*sweep) {
      SweepConfig c;
      c.n_mdps = full ? 100 : n_mdps;
      c.dataset_sizes = sizes;
      c.seg_lens = seg_lens;
      c.include_early_term = early_term_values(early);
      for (bool nl : noise_values(noise)) {
        c.cells.push_back({partial_return_model(nl), ModelKind::PartialReturn});
        c.cells.push_back({regret_model(nl), ModelKind::Regret});
        if (mixed) {
          c.cells.push_back({partial_return_model(nl), ModelKind::Regret});
          c.cells.push_back({regret_model(nl), ModelKind::PartialReturn});
        }
      }
      c.learners.partial_return.epochs = pr_epochs;
      c.learners.regret.epochs = regret_epochs;
      c.seed = seed;
      c.threads = threads;
      const auto r = run_random_mdp_sweep(c, progress);
      const auto summary = summarize_rows(r);
      nlohmann::json doc{{"summary", summary},
                         {"outcome_counts", outcome_counts(r)},
                         {"wilcoxon", paired_tests(r)}};
      write_file(out / "sweep.csv", r.to_csv());
      write_file(out / "sweep_summary.json", doc.dump(2) + "\n");
      print_summary(summary);
      return 0;
    }

    if (*risk) {
      RiskTableConfig c;
      c.n_pairs = pairs;
      c.seeds = risk_seeds;
      c.seg_len = seg_len;
      c.seed = seed;
      c.threads = threads;
      const auto r = run_risk_table(c, progress);
      const auto table = risk_table_summary(r);
      write_file(out / "risk_rows.csv", r.to_csv());
      write_file(out / "risk_table.csv", risk_table_csv(table, c.conditions));
      write_file(out / "risk_summary.json", nlohmann::json{{"risk_table", table}}.dump(2) + "\n");
      std::cout << risk_table_csv(table, c.conditions);
      return 0;
    }

    if (*ident) {
      const auto report = run_identifiability_checks();
      std::cout << (ident_json ? report.to_json().dump(2) + "\n" : report.to_text());
      return report.all_passed() ? 0 : 1;
    }

    if (*human || *gen) {
      const auto task = load_task(layout);
      const auto data = load_human_csv(data_path, task.mdp);
      HumanEvalConfig c;
      c.k_list = k_list;
      c.filters = {stage1_only, drop_early};
      c.seed = seed;
      c.threads = threads;
      const auto r = run_human_partition_eval(data, task, c, progress);
      if (*human) {
        write_file(out / "human_eval.csv", r.to_csv());
        write_file(out / "human_eval_summary.json",
                   nlohmann::json{{"summary", summarize_rows(r)}}.dump(2) + "\n");
        print_summary(summarize_rows(r));
        return 0;
      }
      GeneralizationConfig g;
      g.n_mdps = gen_mdps;
      g.seed = seed;
      g.threads = threads;
      const auto gr = run_generalization(r, task.schema, g, progress);
      write_file(out / "generalization.csv", gr.to_csv());
      write_file(out / "generalization_summary.json",
                 nlohmann::json{{"summary", summarize_rows(gr)}}.dump(2) + "\n");
      std::cout << "scored " << gr.rows.size() << " (weights, MDP) pairs\n";
      return 0;
    }

    if (*lik) {
      const auto task = load_task(layout);
      const auto data = load_human_csv(data_path, task.mdp);
      LikelihoodConfig c;
      c.folds = folds;
      c.seed = seed;
      const auto rows = run_likelihood_cv(data, LabelContext::solve(task.mdp, task.schema.ground_truth), c);
      const auto j = likelihood_summary(rows);
      write_file(out / "likelihood_summary.json", nlohmann::json{{"likelihood", j}}.dump(2) + "\n");
      for (const auto& r : rows) std::cout << r.model << ": " << r.mean_test_loss << "\n";
      return 0;
    }

    if (*gd) {
      const auto task = load_task(layout);
      ModelSpec spec;
      spec.kind = parse_model_kind(model);
      spec.noiseless = noiseless;
      const auto ctx = LabelContext::solve(task.mdp, task.schema.ground_truth);
      const auto d = generate_dataset(ctx, spec, pairs, seg_len, seed, !no_early);
      const fs::path p(data_out);
      write_file(p, p.extension() == ".json" ? dataset_to_json(d).dump(2) + "\n" : dataset_to_csv(d));
      std::cout << "wrote " << d.size() << " pairs to " << p.string() << "\n";
      return 0;
    }

    if (*learn) {
      const auto kind = parse_model_kind(model);
      if (kind == ModelKind::Regret && ps_source.empty()) throw std::invalid_argument("regret learning needs --policy-set");
      const auto task = load_task(layout);
      const auto data = double_with_reversal(load_human_csv(data_path, task.mdp));
      LearnResult r;
      LearnerConfig config;
      if (kind == ModelKind::PartialReturn) {
        config = partial_return_config();
      } else if (kind == ModelKind::Regret) {
        config = regret_config();
      } else {
        throw std::invalid_argument("no learner for model " + model);
      }
      if (lr > 0.0) config.learning_rate = lr;
      if (epochs > 0) config.epochs = epochs;
      if (kind == ModelKind::PartialReturn) {
        r = learn_partial_return(data, task.mdp, config);
      } else {
        r = learn_regret(data, task.mdp, policy_set_source(ps_source, task, seed), config);
      }
      const auto doc = weights_document(task.grid ? task.grid->name : "task", task.schema.names, r, config, seed);
      write_file(weights_out, doc.dump(2) + "\n");
      std::cout << "final loss " << r.final_loss << ", best loss " << r.best_loss << "\n";
      return 0;
    }

    if (*score) {
      const auto task = load_task(layout);
      const auto doc = read_json(weights_in);
      if (doc.contains("feature_names") && doc["feature_names"].get<std::vector<std::string>>() != task.schema.names)
        throw std::invalid_argument("weights were learned for a different feature schema");
      const auto w = weights_from_document(doc);
      const ReturnNormalizer normalizer(task.mdp, task.schema.ground_truth);
      ResultRow row;
      score_row(row, normalizer, task.mdp, w);
      std::cout << nlohmann::json{{"raw_return", row.raw_return},
                                  {"normalized_return", row.normalized_return},
                                  {"near_optimal", row.near_optimal},
                                  {"better_than_random", row.better_than_random}}
                       .dump(2)
                << "\n";
      return 0;
    }

    if (*serve_cmd) {
      ServiceOptions o;
      o.task = std::make_shared<const Domain>(load_task(layout));
      o.session_defaults.n_pairs = n_pairs;
      o.session_defaults.relearn_every = relearn_every;
      o.log_dir = log_dir;
      o.seed = seed;
      ElicitationService service(o);
      const auto [host, port] = listen.empty() ? listen_address() : parse_host_port(listen);
      std::cerr << "listening on " << host << ":" << port << "\n";
      serve(service, host, port);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace prefrl
