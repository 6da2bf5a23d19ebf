#pragma once
// End-to-end evaluation drivers shared by the CLI and the acceptance suite.
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "docmap/corpus.hpp"
#include "docmap/pam.hpp"
#include "docmap/relmap.hpp"

namespace docmap::eval {

struct DigitsReport {
  double omega_s = 0.0;
  double omega_r = 0.0;
  double silhouette = 0.0;  // digit labels over assigned cell coordinates
  double rpc_initial = 0.0;
  double rpc = 0.0;
  double spearman_layer = 0.0;  // digit value vs assigned ring
  std::vector<double> loss_history;
  std::vector<double> layer_gamma;
  int layer_count = 0;
  double seconds = 0.0;
};

// Map config tuned for the 1797-sample digits set.
relmap::MapConfig digits_map_config();

// Relevance 1 / (digit + 1) is min-max normalised before fitting.
DigitsReport evaluate_digits(const corpus::DigitsDataset& data, const relmap::MapConfig& cfg,
                             relmap::FitResult* fit_out = nullptr);
nlohmann::json to_json(const DigitsReport& r);

struct RetrievalSetup {
  corpus::SynthSpec spec;       // 200 docs, 4 groups
  std::uint64_t corpus_seed = 11;
  pam::TrainConfig train;       // seed 3
  int held_out = 40;            // last question of every (n_docs / held_out)-th doc
  int top_k = 10;
  RetrievalSetup();
};

struct RetrievalReport {
  double baseline_accuracy = 0.0;  // identity layer
  double trained_accuracy = 0.0;
  std::size_t train_prompts = 0;
  std::size_t held_out_prompts = 0;
  std::vector<double> loss_history;
  double seconds = 0.0;
};

// Every question except each document's last trains the layer; the held-out
// prompts are never seen in training.
RetrievalReport evaluate_retrieval(const RetrievalSetup& setup, pam::AttentionLayer* trained_out = nullptr);
nlohmann::json to_json(const RetrievalReport& r);

// Rank of doc_index by relevance (0 = best; ties count against the target).
std::size_t relevance_rank(const pam::PromptResult& result, std::size_t doc_index);

struct ClusteringSetup {
  corpus::SynthSpec spec;  // two label systems of 4 groups, light filler
  std::uint64_t corpus_seed = 11;
  pam::TrainConfig train;
  int kmeans_restarts = 10;
  std::uint64_t kmeans_seed = 1;
  ClusteringSetup();
};

struct ClusteringReport {
  std::vector<std::string> systems;
  std::vector<double> static_ari;  // k-means on mean-pooled token vectors
  std::vector<double> pam_ari;     // k-means on PAM embeddings under the system prompt
  double seconds = 0.0;
};

// The layer is trained on the corpus's question/entity triplets, then each
// label system is clustered under its own system prompt.
ClusteringReport evaluate_clustering(const ClusteringSetup& setup);
nlohmann::json to_json(const ClusteringReport& r);

}  // namespace docmap::eval
