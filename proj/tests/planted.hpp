#pragma once
// Planted-structure fixtures shared by the unit tests and the acceptance run.
#include <map>
#include <random>
#include <string>
#include <vector>

#include "docmap/linalg.hpp"
#include "docmap/topics.hpp"

namespace docmap::testing {

// Documents x tokens matrix with `blocks` diagonal blocks of strong weight
// over weak uniform noise. Token t belongs to block t / tokens_per_block.
inline Matrix planted_blocks(int blocks, int docs_per_block, int tokens_per_block, std::uint64_t seed,
                             double noise = 0.03) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> strong(0.5, 1.0), weak(0.0, noise);
  Matrix v(blocks * docs_per_block, blocks * tokens_per_block);
  for (long d = 0; d < v.rows(); ++d)
    for (long t = 0; t < v.cols(); ++t)
      v(d, t) = (d / docs_per_block == t / tokens_per_block) ? strong(rng) : weak(rng);
  return v;
}

inline std::vector<std::string> planted_vocab(long tokens) {
  std::vector<std::string> vocab;
  for (long t = 0; t < tokens; ++t) vocab.push_back("tok" + std::to_string(t));
  return vocab;
}

struct PurityReport {
  double purity = 0.0;          // listed tokens that sit in their topic's majority block
  bool top_tokens_in_block = true;  // every topic's heaviest token is in that block
  bool distinct_blocks = true;      // no two topics share a majority block
};

inline PurityReport topic_purity(const topics::TopicDecomposition& d, int tokens_per_block, double threshold) {
  const auto vocab = planted_vocab(d.h.cols());
  PurityReport r;
  std::size_t listed = 0, pure = 0;
  std::vector<int> majority_of;
  for (int k = 0; k < d.k; ++k) {
    const auto toks = topics::top_tokens(d, vocab, k, threshold);
    std::map<int, std::size_t> counts;
    for (const auto& t : toks) ++counts[std::stoi(t.token.substr(3)) / tokens_per_block];
    int majority = -1;
    std::size_t best = 0;
    for (const auto& [block, n] : counts)
      if (n > best) best = n, majority = block;
    listed += toks.size();
    pure += best;
    if (toks.empty() || std::stoi(toks.front().token.substr(3)) / tokens_per_block != majority)
      r.top_tokens_in_block = false;
    for (int m : majority_of)
      if (m == majority) r.distinct_blocks = false;
    majority_of.push_back(majority);
  }
  r.purity = listed ? static_cast<double>(pure) / static_cast<double>(listed) : 0.0;
  return r;
}

}  // namespace docmap::testing
