#pragma once

// Deliberately naive metric definitions used as test oracles. They share no
// code with the library and favour directness over speed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace guirerank::testing {

struct NaiveCase {
  std::vector<std::string> ranking;
  std::map<std::string, int> grades;
  int threshold = 2;
};

inline bool naive_relevant(const NaiveCase& c, const std::string& id) {
  auto it = c.grades.find(id);
  return it != c.grades.end() && it->second >= c.threshold;
}

inline double naive_ap(const NaiveCase& c) {
  int total_relevant = 0;
  for (const auto& [id, g] : c.grades) total_relevant += g >= c.threshold ? 1 : 0;
  double sum = 0.0;
  for (std::size_t r = 1; r <= c.ranking.size(); ++r) {
    if (!naive_relevant(c, c.ranking[r - 1])) continue;
    int hits = 0;
    for (std::size_t j = 1; j <= r; ++j) hits += naive_relevant(c, c.ranking[j - 1]) ? 1 : 0;
    sum += static_cast<double>(hits) / static_cast<double>(r);
  }
  return sum / total_relevant;
}

inline double naive_rr(const NaiveCase& c) {
  for (std::size_t r = 1; r <= c.ranking.size(); ++r) {
    if (naive_relevant(c, c.ranking[r - 1])) return 1.0 / static_cast<double>(r);
  }
  return 0.0;
}

inline double naive_precision(const NaiveCase& c, std::size_t k) {
  int hits = 0;
  for (std::size_t r = 0; r < k && r < c.ranking.size(); ++r) hits += naive_relevant(c, c.ranking[r]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(k);
}

inline double naive_hits(const NaiveCase& c, std::size_t k) { return naive_precision(c, k) > 0.0 ? 1.0 : 0.0; }

inline double naive_ndcg(const NaiveCase& c, std::size_t k, bool exponential) {
  auto gain = [&](int g) { return exponential ? std::pow(2.0, g) - 1.0 : static_cast<double>(g); };
  double dcg = 0.0;
  for (std::size_t i = 0; i < k && i < c.ranking.size(); ++i) {
    auto it = c.grades.find(c.ranking[i]);
    const int g = it == c.grades.end() ? 0 : it->second;
    dcg += gain(g) / std::log2(static_cast<double>(i) + 2.0);
  }
  std::vector<int> ideal;
  for (const auto& [id, g] : c.grades) ideal.push_back(g);
  std::sort(ideal.rbegin(), ideal.rend());
  double idcg = 0.0;
  for (std::size_t i = 0; i < k && i < ideal.size(); ++i) idcg += gain(ideal[i]) / std::log2(static_cast<double>(i) + 2.0);
  return idcg == 0.0 ? 0.0 : dcg / idcg;
}

// Expected AP of a uniformly random permutation of n items with R relevant:
// (1/n) * (H_n + (R - 1) / (n - 1) * (n - H_n)), H_n the n-th harmonic number.
inline double expected_random_ap(std::size_t n, std::size_t relevant) {
  double h = 0.0;
  for (std::size_t i = 1; i <= n; ++i) h += 1.0 / static_cast<double>(i);
  if (n == 1) return 1.0;
  const double r = static_cast<double>(relevant);
  const double nn = static_cast<double>(n);
  return (h + (r - 1.0) / (nn - 1.0) * (nn - h)) / nn;
}

}  // namespace guirerank::testing
