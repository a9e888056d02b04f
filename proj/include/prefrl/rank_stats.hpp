#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace prefrl {

struct WilcoxonResult {
  double w = 0.0;        // min(W+, W-)
  double w_plus = 0.0;
  double w_minus = 0.0;
  double p = 1.0;        // two-sided
  std::size_t n = 0;     // non-zero differences
  bool exact = false;
  bool degenerate = false;  // every difference was zero
};

/// Midranks (1-based) of xs; ties share the average rank.
std::vector<double> midranks(std::span<const double> xs);

/// Paired signed-rank test on xs - ys. Zero differences are dropped. Exact
/// two-sided p for n <= 25, otherwise the normal approximation with tie and
/// continuity corrections.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> xs, std::span<const double> ys);

/// Pearson correlation of midranks. NaN when either input is constant.
double spearman(std::span<const double> xs, std::span<const double> ys);

/// Kendall tau-b. NaN when either input is constant.
double kendall_tau(std::span<const double> xs, std::span<const double> ys);

/// Clips normalized returns to [-1, 1] before a signed-rank comparison.
std::vector<double> clip_normalized(std::span<const double> xs);

}  // namespace prefrl
