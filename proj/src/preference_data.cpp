#include "prefrl/preference_data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace prefrl {

LabelContext LabelContext::solve(const TabularMdp& mdp, const RewardWeights& w) {
  return {&mdp, w, value_iteration(mdp, w, mdp.gamma_solve())};
}

Mu label_pair(const ModelSpec& spec, const Segment& seg1, const Segment& seg2, const LabelContext& ctx, Rng& rng) {
  const auto s1 = segment_stats(*ctx.mdp, seg1, ctx.w, ctx.sol, spec.gamma_tilde);
  const auto s2 = segment_stats(*ctx.mdp, seg2, ctx.w, ctx.sol, spec.gamma_tilde);
  const double p = preference_probability(spec, s1, s2);
  if (spec.noiseless && !spec.uniform_c) {
    if (p == 0.5) return {0.5, 0.5};
    return p > 0.5 ? Mu{1.0, 0.0} : Mu{0.0, 1.0};
  }
  return uniform01(rng) < p ? Mu{1.0, 0.0} : Mu{0.0, 1.0};
}

std::vector<std::pair<Segment, Segment>> sample_segment_pairs(const TabularMdp& mdp, std::size_t n_pairs,
                                                              std::size_t seg_len, Rng& rng,
                                                              bool include_early_term) {
  constexpr std::size_t kMaxAttempts = 10000;
  auto draw = [&]() {
    for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
      auto seg = sample_segment(mdp, seg_len, rng);
      if (include_early_term || !seg.terminates_early()) return seg;
    }
    throw std::runtime_error("could not sample a segment without early termination");
  };
  std::vector<std::pair<Segment, Segment>> pairs;
  pairs.reserve(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    auto a = draw();
    auto b = draw();
    pairs.emplace_back(std::move(a), std::move(b));
  }
  return pairs;
}

PreferenceDataset generate_dataset(const LabelContext& ctx, const ModelSpec& spec, std::size_t n_pairs,
                                   std::size_t seg_len, std::uint64_t seed, bool include_early_term) {
  Rng pair_rng = make_rng(seed, {1});
  Rng label_rng = make_rng(seed, {2});
  PreferenceDataset d;
  d.seg_len = seg_len;
  d.seed = seed;
  for (auto& [a, b] : sample_segment_pairs(*ctx.mdp, n_pairs, seg_len, pair_rng, include_early_term)) {
    PreferenceSample s;
    s.mu = label_pair(spec, a, b, ctx, label_rng);
    s.seg1 = std::move(a);
    s.seg2 = std::move(b);
    d.samples.push_back(std::move(s));
  }
  return d;
}

PreferenceDataset double_with_reversal(const PreferenceDataset& d) {
  PreferenceDataset out = d;
  out.samples.reserve(2 * d.samples.size());
  for (const auto& s : d.samples) {
    PreferenceSample r = s;
    std::swap(r.seg1, r.seg2);
    r.mu = {s.mu[1], s.mu[0]};
    out.samples.push_back(std::move(r));
  }
  return out;
}

std::string label_token(const Mu& mu) {
  if (mu[0] > mu[1]) return "left";
  if (mu[0] < mu[1]) return "right";
  return "same";
}

std::optional<Mu> mu_from_label(const std::string& label) {
  if (label == "left") return Mu{1.0, 0.0};
  if (label == "right") return Mu{0.0, 1.0};
  if (label == "same") return Mu{0.5, 0.5};
  if (label == "cant_tell") return std::nullopt;
  throw std::invalid_argument("unknown preference label '" + label + "'");
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  if (quoted) throw std::invalid_argument("unterminated quote in CSV line");
  out.push_back(std::move(field));
  return out;
}

std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

PreferenceDataset parse_human_csv(const std::string& text, const TabularMdp& mdp, std::optional<std::size_t> seg_len) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty preference CSV");
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto c_pair = column("pair_id");
  const auto c_subject = column("subject_id");
  const auto c_seg1 = column("seg1");
  const auto c_seg2 = column("seg2");
  const auto c_label = column("label");
  const auto c_stage = column("stage");
  if (!c_pair || !c_subject || !c_seg1 || !c_seg2 || !c_label)
    throw std::invalid_argument("preference CSV header must contain pair_id,subject_id,seg1,seg2,label");

  PreferenceDataset d;
  d.mdp_ref = "human";
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size())
      throw std::invalid_argument("preference CSV line " + std::to_string(line_no) + " has wrong column count");
    const auto mu = mu_from_label(f[*c_label]);
    if (!mu) continue;
    PreferenceSample s;
    s.seg1 = parse_segment(mdp, f[*c_seg1]);
    s.seg2 = parse_segment(mdp, f[*c_seg2]);
    s.mu = *mu;
    s.source = SampleSource::Human;
    s.subject_id = f[*c_subject];
    s.pair_id = f[*c_pair];
    if (c_stage && !f[*c_stage].empty()) s.stage = std::stoi(f[*c_stage]);
    const auto n = s.seg1.length();
    if (s.seg2.length() != n) throw std::invalid_argument("segments in one pair differ in length");
    if (seg_len && n != *seg_len) throw std::invalid_argument("segment length does not match the requested length");
    if (d.seg_len == 0) d.seg_len = n;
    if (n != d.seg_len) throw std::invalid_argument("preference CSV mixes segment lengths");
    d.samples.push_back(std::move(s));
  }
  if (d.seg_len == 0 && seg_len) d.seg_len = *seg_len;
  return d;
}

PreferenceDataset load_human_csv(const std::string& path, const TabularMdp& mdp, std::optional<std::size_t> seg_len) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open preference CSV " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_human_csv(ss.str(), mdp, seg_len);
}

std::string dataset_to_csv(const PreferenceDataset& d) {
  bool staged = std::any_of(d.samples.begin(), d.samples.end(), [](const auto& s) { return s.stage.has_value(); });
  std::ostringstream os;
  os << "pair_id,subject_id,seg1,seg2,label" << (staged ? ",stage" : "") << "\n";
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    const auto& s = d.samples[i];
    os << csv_quote(s.pair_id.empty() ? std::to_string(i) : s.pair_id) << ',' << csv_quote(s.subject_id) << ','
       << csv_quote(serialize_segment(s.seg1)) << ',' << csv_quote(serialize_segment(s.seg2)) << ','
       << label_token(s.mu);
    if (staged) os << ',' << (s.stage ? std::to_string(*s.stage) : "");
    os << "\n";
  }
  return os.str();
}

nlohmann::json dataset_to_json(const PreferenceDataset& d) {
  nlohmann::json j;
  j["format"] = "prefrl-preferences";
  j["version"] = 1;
  j["mdp_ref"] = d.mdp_ref;
  j["seg_len"] = d.seg_len;
  if (d.seed) j["seed"] = *d.seed;
  auto& rows = j["samples"] = nlohmann::json::array();
  for (const auto& s : d.samples) {
    nlohmann::json r;
    r["seg1"] = serialize_segment(s.seg1);
    r["seg2"] = serialize_segment(s.seg2);
    r["mu"] = s.mu;
    r["source"] = s.source == SampleSource::Human ? "human" : "synthetic";
    if (!s.subject_id.empty()) r["subject_id"] = s.subject_id;
    if (s.stage) r["stage"] = *s.stage;
    rows.push_back(std::move(r));
  }
  return j;
}

PreferenceDataset dataset_from_json(const nlohmann::json& j, const TabularMdp& mdp) {
  if (j.value("format", std::string{}) != "prefrl-preferences") throw std::invalid_argument("not a preference document");
  PreferenceDataset d;
  d.mdp_ref = j.value("mdp_ref", std::string{});
  d.seg_len = j.at("seg_len").get<std::size_t>();
  if (j.contains("seed")) d.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& r : j.at("samples")) {
    PreferenceSample s;
    s.seg1 = parse_segment(mdp, r.at("seg1").get<std::string>());
    s.seg2 = parse_segment(mdp, r.at("seg2").get<std::string>());
    s.mu = r.at("mu").get<Mu>();
    s.source = r.value("source", std::string{"synthetic"}) == "human" ? SampleSource::Human : SampleSource::Synthetic;
    s.subject_id = r.value("subject_id", std::string{});
    if (r.contains("stage")) s.stage = r.at("stage").get<int>();
    if (s.seg1.length() != d.seg_len || s.seg2.length() != d.seg_len)
      throw std::invalid_argument("sample segment length differs from dataset seg_len");
    d.samples.push_back(std::move(s));
  }
  return d;
}

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

PreferenceDataset subset(const PreferenceDataset& d, const std::vector<std::size_t>& order, std::size_t lo,
                         std::size_t hi) {
  PreferenceDataset out;
  out.mdp_ref = d.mdp_ref;
  out.seg_len = d.seg_len;
  out.seed = d.seed;
  for (std::size_t i = lo; i < hi; ++i) out.samples.push_back(d.samples[order[i]]);
  return out;
}

// Boundaries of k contiguous groups whose sizes differ by at most one.
std::vector<std::size_t> group_bounds(std::size_t n, std::size_t k) {
  std::vector<std::size_t> b{0};
  for (std::size_t g = 0; g < k; ++g) b.push_back(b.back() + n / k + (g < n % k ? 1 : 0));
  return b;
}

}  // namespace

std::vector<PreferenceDataset> split_partitions(const PreferenceDataset& d, std::size_t k, Rng& rng) {
  if (k == 0) throw std::invalid_argument("number of partitions must be positive");
  if (k > d.size()) throw std::invalid_argument("more partitions than samples");
  const auto order = shuffled_indices(d.size(), rng);
  const auto b = group_bounds(d.size(), k);
  std::vector<PreferenceDataset> out;
  for (std::size_t g = 0; g < k; ++g) out.push_back(subset(d, order, b[g], b[g + 1]));
  return out;
}

std::vector<Fold> split_kfold(const PreferenceDataset& d, std::size_t k, Rng& rng) {
  if (k == 0) throw std::invalid_argument("number of folds must be positive");
  if (k > d.size()) throw std::invalid_argument("more folds than samples");
  const auto order = shuffled_indices(d.size(), rng);
  const auto b = group_bounds(d.size(), k);
  std::vector<Fold> out;
  for (std::size_t g = 0; g < k; ++g) {
    Fold f;
    f.test = subset(d, order, b[g], b[g + 1]);
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < order.size(); ++i)
      if (i < b[g] || i >= b[g + 1]) rest.push_back(order[i]);
    PreferenceDataset train;
    train.mdp_ref = d.mdp_ref;
    train.seg_len = d.seg_len;
    train.seed = d.seed;
    for (auto i : rest) train.samples.push_back(d.samples[i]);
    f.train = std::move(train);
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace prefrl
