#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace prefrl {

using Rng = std::mt19937_64;

/// Independent stream for (seed, tags...). Tags name the purpose of the
/// stream (mdp id, pair sampling vs labeling, ...) so that streams never alias.
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * tags.size());
  words.push_back(static_cast<std::uint32_t>(seed));
  words.push_back(static_cast<std::uint32_t>(seed >> 32));
  for (auto t : tags) {
    words.push_back(static_cast<std::uint32_t>(t));
    words.push_back(static_cast<std::uint32_t>(t >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

/// Draw an index from a discrete distribution given by non-negative weights.
template <class Weights>
std::size_t sample_discrete(Rng& rng, const Weights& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = uniform01(rng) * total;
  std::size_t last_positive = 0;
  std::size_t i = 0;
  for (double w : weights) {
    if (w > 0.0) {
      last_positive = i;
      if (u < w) return i;
      u -= w;
    }
    ++i;
  }
  return last_positive;
}

}  // namespace prefrl
