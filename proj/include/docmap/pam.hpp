#pragma once

// Prompt-conditioned attention over frozen token embeddings.
//
//   attn(p, t)  = (W_Q e_p) . (W_K e_t)
//   r(p, d)     = sum_t attn(p, t)
//   e_{d|p}     = sum_t softmax(attn / sqrt(dim))_t e_t
//
// Training minimises the softmax cross-entropy of the positive document's
// relevance against n-1 sampled negatives.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "docmap/embedding.hpp"
#include "docmap/kernels.hpp"
#include "docmap/linalg.hpp"

namespace docmap::pam {

struct AttentionLayer {
  Matrix w_q;
  Matrix w_k;

  long dim() const { return w_q.rows(); }

  static AttentionLayer identity(long dim);
  // Identity plus init_scale * N(0, 1) on every entry of both matrices.
  static AttentionLayer initialized(long dim, double init_scale, std::uint64_t seed);

  // Throws unless both matrices are square, equal-sized and finite.
  void validate() const;
  // W_K^T W_Q e_p: dotting token vectors with it yields attention scores.
  Vector key_query(const Vector& prompt) const;
  // Softmax temperature sqrt(dim).
  double temperature() const;
};

struct PromptResult {
  PromptEmbedding prompt;
  std::vector<DocumentScore> documents;  // parallel to the store's documents
};

Vector attention(const AttentionLayer& layer, const PromptEmbedding& prompt,
                 const DocumentEmbeddings& doc);
// Sum of attention(); O(tokens * dim).
double relevance(const AttentionLayer& layer, const PromptEmbedding& prompt,
                 const DocumentEmbeddings& doc);
// (W_Q e_p) . (W_K s_d) with s_d the token sum; algebraically equal to relevance().
double relevance_token_sum(const AttentionLayer& layer, const PromptEmbedding& prompt,
                           const Vector& token_sum);
Vector dynamic_embedding(const AttentionLayer& layer, const PromptEmbedding& prompt,
                         const DocumentEmbeddings& doc);

// Scores every document of the store (OpenMP over documents).
PromptResult score_corpus(const AttentionLayer& layer, const PromptEmbedding& prompt,
                          const EmbeddingStore& store);

struct ContrastiveBatch {
  PromptEmbedding prompt;
  const DocumentEmbeddings* positive = nullptr;
  std::vector<const DocumentEmbeddings*> negatives;

  void validate() const;
};

struct LayerGradient {
  Matrix d_w_q;
  Matrix d_w_k;
};

// -log(exp(r+) / (exp(r+) + sum exp(r-))), via log-sum-exp.
double contrastive_loss(const AttentionLayer& layer, const ContrastiveBatch& batch);
LayerGradient loss_gradient(const AttentionLayer& layer, const ContrastiveBatch& batch);

// Same quantities from precomputed token sums, positive first. Used by the
// trainer so each step costs O(n * dim^2) regardless of document length.
double contrastive_loss(const AttentionLayer& layer, const Vector& prompt,
                        std::span<const Vector* const> token_sums);
LayerGradient loss_gradient(const AttentionLayer& layer, const Vector& prompt,
                            std::span<const Vector* const> token_sums);

struct TrainConfig {
  double learning_rate = 0.03;
  int epochs = 40;
  int n = 16;  // batch size: one positive plus n-1 negatives
  std::uint64_t seed = 0;
  double init_scale = 0.01;

  void validate() const;
};

struct TrainingTriplet {
  std::string prompt;
  std::string positive_doc_id;
};

struct TrainResult {
  AttentionLayer layer;
  std::vector<double> loss_history;  // mean batch loss per epoch
};

using PromptEmbedder = std::function<PromptEmbedding(const std::string&)>;

// Plain SGD, one step per triplet, triplets reshuffled every epoch and
// negatives drawn uniformly without replacement (positive excluded).
// Starts from AttentionLayer::initialized(dim, init_scale, seed).
TrainResult train(const EmbeddingStore& store, const std::vector<TrainingTriplet>& triplets,
                  const TrainConfig& cfg, const PromptEmbedder& embed);
// Continues from an existing layer.
TrainResult train(const EmbeddingStore& store, const std::vector<TrainingTriplet>& triplets,
                  const TrainConfig& cfg, const PromptEmbedder& embed, AttentionLayer start);

struct PromptWeighting {
  std::vector<PromptEmbedding> prompts;
  std::vector<double> weights;

  // Throws InvalidArgument on length mismatch, negative weights, or a sum
  // off 1 by more than 1e-9.
  void validate() const;
};

// Weighted sum of per-prompt results: token attention, relevance, softmax
// weights and embeddings are all combined with the same weights.
PromptResult compose_prompts(const AttentionLayer& layer, const PromptWeighting& weighting,
                             const EmbeddingStore& store);
PromptResult compose_results(std::span<const PromptResult> results, std::span<const double> weights);

// Share of (min-shifted, non-negative) attention that lands on answer_tokens.
double rar(const AttentionLayer& layer, const PromptEmbedding& prompt, const DocumentEmbeddings& doc,
           std::span<const std::size_t> answer_tokens);

// Checkpoint: magic "DMAL", u32 dim, then row-major f64 W_Q followed by W_K.
void save_layer(const AttentionLayer& layer, const std::filesystem::path& path);
AttentionLayer load_layer(const std::filesystem::path& path);

// JSON-lines {prompt, positive_doc_id}.
std::vector<TrainingTriplet> load_triplets(const std::filesystem::path& path);
void save_triplets(const std::vector<TrainingTriplet>& triplets, const std::filesystem::path& path);

}  // namespace docmap::pam
