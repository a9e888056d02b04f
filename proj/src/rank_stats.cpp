#include "prefrl/rank_stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace prefrl {

namespace {

void check_paired(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("paired statistics need equal-length inputs");
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) throw std::invalid_argument("non-finite input");
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// Exact two-sided p for W+ under the null, where ranks may be midranks.
// Doubled ranks are integers, so the null distribution is a subset-sum count.
double exact_p(const std::vector<double>& ranks, double w_plus) {
  std::vector<int> r2;
  int total = 0;
  for (double r : ranks) {
    r2.push_back(static_cast<int>(std::lround(2.0 * r)));
    total += r2.back();
  }
  std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
  count[0] = 1.0;
  int reach = 0;
  for (int r : r2) {
    reach += r;
    for (int s = reach; s >= r; --s) count[static_cast<std::size_t>(s)] += count[static_cast<std::size_t>(s - r)];
  }
  const double all = std::ldexp(1.0, static_cast<int>(ranks.size()));
  const int w2 = static_cast<int>(std::lround(2.0 * w_plus));
  double lower = 0.0;
  double upper = 0.0;
  for (int s = 0; s <= total; ++s) {
    if (s <= w2) lower += count[static_cast<std::size_t>(s)];
    if (s >= w2) upper += count[static_cast<std::size_t>(s)];
  }
  return std::min(1.0, 2.0 * std::min(lower, upper) / all);
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

std::vector<double> midranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> xs, std::span<const double> ys) {
  check_paired(xs, ys);
  std::vector<double> diff;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (xs[i] != ys[i]) diff.push_back(xs[i] - ys[i]);
  WilcoxonResult out;
  out.n = diff.size();
  if (diff.empty()) {
    out.degenerate = true;
    return out;
  }
  std::vector<double> mags(diff.size());
  std::transform(diff.begin(), diff.end(), mags.begin(), [](double d) { return std::abs(d); });
  const auto ranks = midranks(mags);
  for (std::size_t i = 0; i < diff.size(); ++i) (diff[i] > 0.0 ? out.w_plus : out.w_minus) += ranks[i];
  out.w = std::min(out.w_plus, out.w_minus);

  const double n = static_cast<double>(out.n);
  if (out.n <= 25) {
    out.exact = true;
    out.p = exact_p(ranks, out.w_plus);
    return out;
  }
  double tie_term = 0.0;
  auto sorted = mags;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  const double mean = n * (n + 1.0) / 4.0;
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
  const double z = (std::abs(out.w_plus - mean) - 0.5) / std::sqrt(var);
  out.p = std::min(1.0, 2.0 * normal_sf(std::max(z, 0.0)));
  return out;
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
  check_paired(xs, ys);
  if (xs.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  return pearson(midranks(xs), midranks(ys));
}

double kendall_tau(std::span<const double> xs, std::span<const double> ys) {
  check_paired(xs, ys);
  double concordant = 0.0;
  double discordant = 0.0;
  double tie_x = 0.0;
  double tie_y = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = i + 1; j < xs.size(); ++j) {
      const double dx = xs[i] - xs[j];
      const double dy = ys[i] - ys[j];
      if (dx == 0.0 && dy == 0.0) continue;
      if (dx == 0.0) {
        tie_x += 1.0;
      } else if (dy == 0.0) {
        tie_y += 1.0;
      } else if ((dx > 0.0) == (dy > 0.0)) {
        concordant += 1.0;
      } else {
        discordant += 1.0;
      }
    }
  }
  const double denom = std::sqrt((concordant + discordant + tie_x) * (concordant + discordant + tie_y));
  if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (concordant - discordant) / denom;
}

std::vector<double> clip_normalized(std::span<const double> xs) {
  std::vector<double> out(xs.begin(), xs.end());
  for (auto& x : out) x = std::clamp(x, -1.0, 1.0);
  return out;
}

}  // namespace prefrl
