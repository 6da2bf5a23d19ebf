#pragma once

// Corpus-level attention topics: a documents x tokens matrix of softmax
// attention mass, factorised V ~ W H with Frobenius multiplicative updates.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "docmap/embedding.hpp"
#include "docmap/linalg.hpp"
#include "docmap/pam.hpp"

namespace docmap::topics {

struct AttentionMatrix {
  Matrix v;  // n_docs x n_tokens, non-negative
  std::vector<std::string> doc_ids;
  std::vector<std::string> vocab;
};

struct TopicDecomposition {
  Matrix w;  // n_docs x k
  Matrix h;  // k x n_tokens, each row rescaled so its maximum is 1
  int k = 0;
  double reconstruction_error = 0.0;  // ||V - WH||_F
  std::vector<double> error_history;  // initial error, then one per iteration
};

inline constexpr std::size_t kDefaultVocabCap = 5000;

// V[d, t] = total softmax weight document d puts on occurrences of token t.
// Vocabulary is in first-appearance order; above vocab_cap tokens only the
// highest total-attention ones are kept.
AttentionMatrix build_attention_matrix(const pam::PromptResult& result, const EmbeddingStore& store,
                                       std::size_t vocab_cap = kDefaultVocabCap);

TopicDecomposition nmf(const Matrix& v, int k, int iters, std::uint64_t seed);

struct TopicCountSelection {
  int k = 1;
  std::vector<std::pair<int, double>> stability;  // (k, score) per candidate
};

// Consensus stability of dominant-topic assignments across seeded restarts:
// score(k) = 1 - 2 * mean |C - round(C)| over document pairs (k = 1 scores 1).
// Merging two planted topics is as stable as keeping them apart, so the
// highest score alone cannot pick k. Candidates are scanned upwards and the
// scan stops at the first k that leaves a topic without documents in some
// restart, falls below kStableThreshold, or is less stable than the previous
// candidate; the last k before the stop wins (1 if none qualifies, when 1 is
// in range).
inline constexpr double kStableThreshold = 0.9;
TopicCountSelection select_topic_count(const Matrix& v, const std::vector<int>& k_range, int restarts,
                                       int iters, std::uint64_t seed);

struct TokenWeight {
  std::string token;
  double weight = 0.0;
};

// Tokens with H[topic, t] >= threshold, heaviest first (ties by vocab order).
std::vector<TokenWeight> top_tokens(const TopicDecomposition& decomp, const std::vector<std::string>& vocab,
                                    int topic, double threshold);

// {k, topics:[{id, tokens:[{t, w}]}], doc_topic_weights}
nlohmann::json topics_json(const TopicDecomposition& decomp, const AttentionMatrix& v, double threshold);

}  // namespace docmap::topics
