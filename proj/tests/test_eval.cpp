#include <gtest/gtest.h>

#include <numeric>

#include "docmap/eval.hpp"
#include "docmap/stats.hpp"
#include "test_support.hpp"

namespace docmap {
namespace {

const corpus::DigitsDataset& digits() {
  static const auto d = corpus::load_digits_csv(std::string(DOCMAP_TEST_DATA_DIR) + "/digits.csv");
  return d;
}

void expect_fit_invariants(const relmap::FitResult& fit, std::size_t n) {
  EXPECT_NO_THROW(relmap::check_invariants(fit.map, n));
  ASSERT_GE(fit.loss_history.size(), 2u);
  EXPECT_LT(fit.loss_history.back(), fit.loss_history.front());
}

TEST(EvalDigits, RelevanceOnlyOrdersRingsByDigit) {
  auto cfg = eval::digits_map_config();
  cfg.omega_s = 0.0;
  cfg.omega_r = 1.0;
  relmap::FitResult fit;
  const auto r = eval::evaluate_digits(digits(), cfg, &fit);
  expect_fit_invariants(fit, digits().items.size());
  EXPECT_GE(r.spearman_layer, 0.9);
  EXPECT_GT(r.rpc, r.rpc_initial);
  // Learned ring relevance falls from the centre outwards.
  std::vector<double> ring(r.layer_gamma.size());
  std::iota(ring.begin(), ring.end(), 1.0);
  EXPECT_LE(stats::spearman(ring, r.layer_gamma), -0.9);
  EXPECT_EQ(static_cast<int>(r.layer_gamma.size()), r.layer_count);
}

TEST(EvalDigits, ShortRunIsDeterministic) {
  auto cfg = eval::digits_map_config();
  cfg.epochs = 2;
  relmap::FitResult a, b;
  const auto ra = eval::evaluate_digits(digits(), cfg, &a);
  const auto rb = eval::evaluate_digits(digits(), cfg, &b);
  expect_fit_invariants(a, digits().items.size());
  EXPECT_EQ(a.map.assignment, b.map.assignment);
  EXPECT_EQ(a.map.gamma, b.map.gamma);
  EXPECT_EQ(ra.silhouette, rb.silhouette);
  EXPECT_EQ(eval::to_json(ra)["rpc"], eval::to_json(rb)["rpc"]);
}

TEST(EvalRetrieval, TrainedLayerBeatsIdentity) {
  eval::RetrievalSetup setup;
  pam::AttentionLayer layer = pam::AttentionLayer::identity(setup.spec.dim);
  const auto r = eval::evaluate_retrieval(setup, &layer);
  EXPECT_EQ(r.held_out_prompts, 40u);
  EXPECT_EQ(r.train_prompts, 400u);
  EXPECT_GT(r.trained_accuracy, r.baseline_accuracy);
  EXPECT_LT(r.loss_history.back(), r.loss_history.front());
  const auto again = eval::evaluate_retrieval(setup);
  EXPECT_EQ(again.trained_accuracy, r.trained_accuracy);
  EXPECT_EQ(again.loss_history, r.loss_history);
}

TEST(EvalRetrieval, RelevanceRankCountsTies) {
  pam::PromptResult res;
  for (double rel : {0.5, 2.0, 0.5, -1.0}) {
    DocumentScore s;
    s.relevance = rel;
    res.documents.push_back(s);
  }
  EXPECT_EQ(eval::relevance_rank(res, 1), 0u);
  EXPECT_EQ(eval::relevance_rank(res, 0), 2u);
  EXPECT_EQ(eval::relevance_rank(res, 2), 2u);
  EXPECT_EQ(eval::relevance_rank(res, 3), 3u);
}

TEST(EvalClustering, PromptedBeatsStaticPerSystem) {
  const auto r = eval::evaluate_clustering(eval::ClusteringSetup{});
  ASSERT_EQ(r.systems.size(), 2u);
  for (std::size_t s = 0; s < 2; ++s) EXPECT_GT(r.pam_ari[s], r.static_ari[s]) << r.systems[s];
}

}  // namespace
}  // namespace docmap
