#include "prefrl/random.hpp"
#include "prefrl/rank_stats.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace prefrl;

namespace {

// Two-sided exact p by enumerating every sign assignment of the midranks.
double brute_force_p(const std::vector<double>& diffs) {
  std::vector<double> nz;
  for (double d : diffs)
    if (d != 0.0) nz.push_back(d);
  std::vector<double> abs;
  for (double d : nz) abs.push_back(std::abs(d));
  const auto r = midranks(abs);
  double w_plus = 0.0;
  for (std::size_t i = 0; i < nz.size(); ++i)
    if (nz[i] > 0) w_plus += r[i];
  const double total = static_cast<double>(nz.size() * (nz.size() + 1)) / 2.0;
  const double w = std::min(w_plus, total - w_plus);
  std::size_t below = 0;
  const std::size_t n_sets = std::size_t{1} << nz.size();
  for (std::size_t mask = 0; mask < n_sets; ++mask) {
    double s = 0.0;
    for (std::size_t i = 0; i < nz.size(); ++i)
      if (mask >> i & 1) s += r[i];
    below += s <= w + 1e-9;
  }
  return std::min(1.0, 2.0 * static_cast<double>(below) / static_cast<double>(n_sets));
}

double naive_tau_b(const std::vector<double>& x, const std::vector<double>& y) {
  double conc = 0, disc = 0, tx = 0, ty = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double a = x[i] - x[j];
      const double b = y[i] - y[j];
      if (a == 0 && b == 0) continue;
      if (a == 0) {
        ++tx;
      } else if (b == 0) {
        ++ty;
      } else if (a * b > 0) {
        ++conc;
      } else {
        ++disc;
      }
    }
  return (conc - disc) / std::sqrt((conc + disc + tx) * (conc + disc + ty));
}

}  // namespace

TEST_CASE("midranks average ties") {
  const std::vector<double> xs{10, 20, 20, 30};
  CHECK(midranks(xs) == std::vector<double>{1, 2.5, 2.5, 4});
  const std::vector<double> ys{3, 1, 2};
  CHECK(midranks(ys) == std::vector<double>{3, 1, 2});
}

TEST_CASE("rank correlations") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> up{10, 20, 30, 40, 50};
  const std::vector<double> down{5, 4, 3, 2, 1};
  CHECK(spearman(x, up) == doctest::Approx(1.0));
  CHECK(kendall_tau(x, up) == doctest::Approx(1.0));
  CHECK(spearman(x, down) == doctest::Approx(-1.0));
  CHECK(kendall_tau(x, down) == doctest::Approx(-1.0));
  const std::vector<double> flat{2, 2, 2, 2, 2};
  CHECK(std::isnan(spearman(x, flat)));
  CHECK(std::isnan(kendall_tau(flat, x)));

  auto rng = make_rng(61);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(12);
    std::vector<double> b(12);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = static_cast<double>(uniform_index(rng, 5));
      b[i] = static_cast<double>(uniform_index(rng, 5));
    }
    if (std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; })) continue;
    if (std::all_of(b.begin(), b.end(), [&](double v) { return v == b[0]; })) continue;
    CHECK(kendall_tau(a, b) == doctest::Approx(naive_tau_b(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("exact signed-rank test") {
  SUBCASE("five positive differences") {
    const std::vector<double> x{2, 3, 4, 5, 6};
    const std::vector<double> y{1, 1, 1, 1, 1};
    const auto r = wilcoxon_signed_rank(x, y);
    CHECK(r.w == 0.0);
    CHECK(r.w_plus == 15.0);
    CHECK(r.n == 5);
    CHECK(r.exact);
    CHECK(r.p == doctest::Approx(0.0625).epsilon(1e-12));
  }
  SUBCASE("zero differences are dropped") {
    const std::vector<double> x{1, 2, 3, 4};
    const std::vector<double> y{1, 2, 0, 0};
    const auto r = wilcoxon_signed_rank(x, y);
    CHECK(r.n == 2);
    CHECK(r.p == doctest::Approx(0.5));
  }
  SUBCASE("all differences zero") {
    const std::vector<double> x{1, 2, 3};
    const auto r = wilcoxon_signed_rank(x, x);
    CHECK(r.degenerate);
    CHECK(r.n == 0);
    CHECK(r.p == 1.0);
  }
  SUBCASE("matches brute-force enumeration with ties") {
    auto rng = make_rng(62);
    for (int trial = 0; trial < 30; ++trial) {
      const auto n = 4 + uniform_index(rng, 10);
      std::vector<double> x(n);
      std::vector<double> y(n, 0.0);
      for (auto& v : x) v = static_cast<double>(static_cast<int>(uniform_index(rng, 9)) - 4);
      const auto r = wilcoxon_signed_rank(x, y);
      if (r.degenerate) continue;
      CHECK(r.p == doctest::Approx(brute_force_p(x)).epsilon(1e-12));
    }
  }
  CHECK_THROWS(wilcoxon_signed_rank(std::vector<double>{1, 2}, std::vector<double>{1}));
}

TEST_CASE("normal approximation above 25 pairs") {
  std::vector<double> x(30);
  std::vector<double> y(30, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i + 1);
  const auto r = wilcoxon_signed_rank(x, y);
  CHECK_FALSE(r.exact);
  CHECK(r.w == 0.0);
  const double mean = 30.0 * 31.0 / 4.0;
  const double sd = std::sqrt(30.0 * 31.0 * 61.0 / 24.0);
  const double z = (0.0 - mean + 0.5) / sd;
  CHECK(r.p == doctest::Approx(std::erfc(std::abs(z) / std::sqrt(2.0))).epsilon(1e-12));
}

TEST_CASE("clipping normalized returns") {
  const std::vector<double> x{-12.7, -0.5, 0.999, 3.0};
  CHECK(clip_normalized(x) == std::vector<double>{-1.0, -0.5, 0.999, 1.0});
}
