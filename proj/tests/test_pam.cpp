#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "docmap/corpus.hpp"
#include "docmap/error.hpp"
#include "docmap/pam.hpp"
#include "test_support.hpp"

namespace docmap {
namespace {

using pam::AttentionLayer;
using testing::random_document;
using testing::random_matrix;
using testing::random_vector;
using testing::rel_err;

AttentionLayer random_layer(long dim, std::mt19937_64& rng) {
  AttentionLayer l;
  l.w_q = random_matrix(dim, dim, rng);
  l.w_k = random_matrix(dim, dim, rng);
  return l;
}

PromptEmbedding prompt_of(const Vector& v) { return {"p", v}; }

DocumentEmbeddings doc_of(std::initializer_list<std::initializer_list<double>> rows, const std::string& id = "d") {
  DocumentEmbeddings d;
  d.doc_id = id;
  d.vectors.resize(static_cast<long>(rows.size()), static_cast<long>(rows.begin()->size()));
  long r = 0;
  for (const auto& row : rows) {
    long c = 0;
    for (double x : row) d.vectors(r, c++) = x;
    d.tokens.push_back("t" + std::to_string(r++));
  }
  return d;
}

// Plain loops, independent of Eigen products.
double naive_attention(const Matrix& wq, const Matrix& wk, const Vector& p, const Vector& t) {
  const long n = wq.rows();
  double s = 0.0;
  for (long i = 0; i < n; ++i) {
    double q = 0.0, k = 0.0;
    for (long j = 0; j < n; ++j) {
      q += wq(i, j) * p(j);
      k += wk(i, j) * t(j);
    }
    s += q * k;
  }
  return s;
}

double naive_loss(const std::vector<double>& r) {
  double denom = 0.0;
  for (double x : r) denom += std::exp(x);
  return -std::log(std::exp(r[0]) / denom);
}

TEST(Attention, IdentityReducesToDotProduct) {
  const auto l = AttentionLayer::identity(2);
  const auto a = pam::attention(l, prompt_of(Vector::Unit(2, 0)), doc_of({{0.5, 0.5}, {0.0, 1.0}}));
  EXPECT_DOUBLE_EQ(a(0), 0.5);
  EXPECT_DOUBLE_EQ(a(1), 0.0);
}

TEST(Attention, MatchesNaiveOracle) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const auto l = random_layer(3, rng);
    const Vector p = random_vector(3, rng);
    const auto d = random_document("d", 2, 3, rng);
    const auto a = pam::attention(l, prompt_of(p), d);
    ASSERT_EQ(a.size(), 2);
    for (long t = 0; t < 2; ++t)
      EXPECT_NEAR(a(t), naive_attention(l.w_q, l.w_k, p, d.vectors.row(t).transpose()), 1e-12);
  }
}

TEST(Attention, RejectsDimensionMismatch) {
  const auto l = AttentionLayer::identity(3);
  EXPECT_THROW(pam::attention(l, prompt_of(Vector::Ones(2)), doc_of({{1, 0, 0}})), DimensionMismatch);
  EXPECT_THROW(pam::attention(l, prompt_of(Vector::Ones(3)), doc_of({{1, 0}})), DimensionMismatch);
  EXPECT_THROW(pam::relevance(l, prompt_of(Vector::Ones(3)), doc_of({{1, 0}})), DimensionMismatch);
  EXPECT_THROW(pam::dynamic_embedding(l, prompt_of(Vector::Ones(3)), doc_of({{1, 0}})), DimensionMismatch);
}

TEST(Relevance, SumOfDotProducts) {
  const auto l = AttentionLayer::identity(2);
  EXPECT_DOUBLE_EQ(pam::relevance(l, prompt_of(Vector::Unit(2, 0)), doc_of({{1, 0}, {0, 1}})), 1.0);
  EXPECT_DOUBLE_EQ(pam::relevance(l, prompt_of(Vector::Unit(2, 0)), doc_of({{0, 0}, {0, 0}})), 0.0);
}

TEST(Relevance, TokenSumIdentityHoldsOnRandomInstances) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 1000; ++rep) {
    const long dim = 2 + rep % 7;
    const auto l = random_layer(dim, rng);
    const Vector p = random_vector(dim, rng);
    const auto d = random_document("d", 1 + rep % 9, dim, rng);
    const double summed = pam::attention(l, prompt_of(p), d).sum();
    const double fast = pam::relevance_token_sum(l, prompt_of(p), d.token_sum());
    EXPECT_LE(rel_err(summed, fast), 1e-9) << rep;
    EXPECT_LE(rel_err(pam::relevance(l, prompt_of(p), d), summed), 1e-9) << rep;
  }
}

TEST(DynamicEmbedding, EqualAttentionGivesMean) {
  const auto l = AttentionLayer::identity(2);
  // Both tokens have dot product 0 with the prompt.
  const auto e = pam::dynamic_embedding(l, prompt_of(Vector::Unit(2, 0)), doc_of({{0, 1}, {0, 3}}));
  EXPECT_NEAR(e(0), 0.0, 1e-15);
  EXPECT_NEAR(e(1), 2.0, 1e-15);
}

TEST(DynamicEmbedding, SingleTokenIsExact) {
  std::mt19937_64 rng(3);
  const auto l = random_layer(4, rng);
  const auto d = random_document("d", 1, 4, rng);
  EXPECT_EQ(pam::dynamic_embedding(l, prompt_of(random_vector(4, rng)), d), d.vectors.row(0).transpose());
}

TEST(DynamicEmbedding, SaturatesOnDominantToken) {
  const auto l = AttentionLayer::identity(2);
  // Token 0 scores 1000 above the others; temperature sqrt(2) leaves a gap of ~707.
  const auto d = doc_of({{1000, 1}, {0, 1}, {0, -1}});
  const auto e = pam::dynamic_embedding(l, prompt_of(Vector::Unit(2, 0)), d);
  EXPECT_LE((e - d.vectors.row(0).transpose()).norm(), 1e-6);
}

TEST(DynamicEmbedding, WeightsFormDistribution) {
  std::mt19937_64 rng(4);
  EmbeddingStore store(5);
  for (int i = 0; i < 30; ++i) store.add(random_document("d" + std::to_string(i), 1 + i % 11, 5, rng));
  const auto l = random_layer(5, rng);
  const auto res = pam::score_corpus(l, prompt_of(random_vector(5, rng, 3.0)), store);
  ASSERT_EQ(res.documents.size(), store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& s = res.documents[i];
    EXPECT_GE(s.weights.minCoeff(), 0.0);
    EXPECT_NEAR(s.weights.sum(), 1.0, 1e-9);
    EXPECT_LE(rel_err(s.relevance, s.token_attention.sum()), 1e-6);
    Vector mix = store[i].vectors.transpose() * s.weights;
    EXPECT_TRUE(mix.isApprox(s.embedding, 1e-12));
  }
}

// Builds a batch whose documents own their storage.
struct BatchFixture {
  std::vector<DocumentEmbeddings> docs;
  pam::ContrastiveBatch batch;
  BatchFixture(long dim, int n, std::mt19937_64& rng, long tokens = 3) {
    for (int i = 0; i < n; ++i) docs.push_back(random_document("d" + std::to_string(i), tokens, dim, rng));
    batch.prompt = {"p", random_vector(dim, rng)};
    batch.positive = &docs[0];
    for (int i = 1; i < n; ++i) batch.negatives.push_back(&docs[static_cast<std::size_t>(i)]);
  }
};

TEST(ContrastiveLoss, UniformScoresGiveLogN) {
  // Zero prompt makes every relevance 0.
  std::mt19937_64 rng(5);
  BatchFixture f(4, 16, rng);
  f.batch.prompt.vector.setZero();
  EXPECT_NEAR(pam::contrastive_loss(AttentionLayer::identity(4), f.batch), std::log(16.0), 1e-12);
  EXPECT_NEAR(std::log(16.0), 2.7725887, 1e-7);
}

TEST(ContrastiveLoss, VanishesWhenPositiveDominates) {
  DocumentEmbeddings pos = doc_of({{1e4, 0}}, "pos");
  DocumentEmbeddings neg = doc_of({{0, 1}}, "neg");
  pam::ContrastiveBatch b{{"p", Vector::Unit(2, 0)}, &pos, {&neg}};
  EXPECT_NEAR(pam::contrastive_loss(AttentionLayer::identity(2), b), 0.0, 1e-12);
}

TEST(ContrastiveLoss, AccurateWhenNearlySeparated) {
  // Extended-precision oracle for losses down to ~1e-12, where the positive's
  // score exceeds every negative's by 25 or more.
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 50; ++rep) {
    BatchFixture f(4, 2 + rep % 6, rng);
    const auto l = AttentionLayer::identity(4);
    const double margin = 25.0 + rep % 5;
    std::vector<double> r;
    for (const auto* d : f.batch.negatives) r.push_back(pam::relevance(l, f.batch.prompt, *d));
    // Shift the positive so it leads the strongest negative by `margin`.
    const double top = *std::max_element(r.begin(), r.end());
    const double r0 = pam::relevance(l, f.batch.prompt, *f.batch.positive);
    const double scale = (top + margin - r0) / f.batch.prompt.vector.squaredNorm() / f.docs[0].size();
    for (long t = 0; t < f.docs[0].vectors.rows(); ++t) f.docs[0].vectors.row(t) += scale * f.batch.prompt.vector.transpose();
    const double pos = pam::relevance(l, f.batch.prompt, *f.batch.positive);
    long double sum = 0.0L;
    for (double x : r) sum += std::exp(static_cast<long double>(x) - static_cast<long double>(pos));
    const long double expected = std::log1p(sum);
    EXPECT_LT(std::abs(pam::contrastive_loss(l, f.batch) - static_cast<double>(expected)) / static_cast<double>(expected),
              1e-9)
        << rep;
  }
}

TEST(ContrastiveLoss, MatchesNaiveFormulaAndIsNonNegative) {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 200; ++rep) {
    const long dim = 2 + rep % 5;
    BatchFixture f(dim, 2 + rep % 15, rng);
    f.batch.prompt.vector *= 0.2;  // keeps scores moderate for the unstabilised oracle
    const auto l = random_layer(dim, rng);
    std::vector<double> r{pam::relevance(l, f.batch.prompt, *f.batch.positive)};
    for (const auto* d : f.batch.negatives) r.push_back(pam::relevance(l, f.batch.prompt, *d));
    const double loss = pam::contrastive_loss(l, f.batch);
    EXPECT_GE(loss, 0.0);
    EXPECT_LE(rel_err(loss, naive_loss(r)), 1e-9) << rep;
  }
}

TEST(ContrastiveLoss, StableForHugeScores) {
  DocumentEmbeddings pos = doc_of({{1e6, 0}}, "pos");
  DocumentEmbeddings neg = doc_of({{2e6, 0}}, "neg");
  pam::ContrastiveBatch b{{"p", Vector::Unit(2, 0)}, &pos, {&neg}};
  EXPECT_NEAR(pam::contrastive_loss(AttentionLayer::identity(2), b), 1e6, 1e-3);
}

TEST(ContrastiveBatch, Validation) {
  DocumentEmbeddings a = doc_of({{1, 0}}, "a");
  pam::ContrastiveBatch no_neg{{"p", Vector::Unit(2, 0)}, &a, {}};
  EXPECT_THROW(no_neg.validate(), InvalidArgument);
  pam::ContrastiveBatch self{{"p", Vector::Unit(2, 0)}, &a, {&a}};
  EXPECT_THROW(self.validate(), InvalidArgument);
  EXPECT_THROW(pam::contrastive_loss(AttentionLayer::identity(2), self), InvalidArgument);
}

// Max entrywise deviation relative to the largest finite-difference entry.
double gradient_error(const AttentionLayer& l, const pam::ContrastiveBatch& b) {
  const double h = 1e-5;
  const auto g = pam::loss_gradient(l, b);
  double max_diff = 0.0, max_ref = 0.0;
  for (int which = 0; which < 2; ++which) {
    const Matrix& analytic = which == 0 ? g.d_w_q : g.d_w_k;
    for (long i = 0; i < l.dim(); ++i)
      for (long j = 0; j < l.dim(); ++j) {
        auto plus = l, minus = l;
        (which == 0 ? plus.w_q : plus.w_k)(i, j) += h;
        (which == 0 ? minus.w_q : minus.w_k)(i, j) -= h;
        const double fd = (pam::contrastive_loss(plus, b) - pam::contrastive_loss(minus, b)) / (2 * h);
        max_diff = std::max(max_diff, std::abs(fd - analytic(i, j)));
        max_ref = std::max(max_ref, std::abs(fd));
      }
  }
  return max_ref > 0.0 ? max_diff / max_ref : max_diff;
}

TEST(LossGradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 100; ++rep) {
    const long dim = 2 + rep % 7;
    BatchFixture f(dim, 2 + rep % 15, rng, 1 + rep % 4);
    const auto l = random_layer(dim, rng);
    EXPECT_LT(gradient_error(l, f.batch), 1e-4) << "instance " << rep;
  }
}

TEST(LossGradient, VanishesUnderPerfectSeparation) {
  DocumentEmbeddings pos = doc_of({{1e4, 0}}, "pos");
  DocumentEmbeddings neg = doc_of({{0, 1}}, "neg");
  pam::ContrastiveBatch b{{"p", Vector::Unit(2, 0)}, &pos, {&neg}};
  const auto g = pam::loss_gradient(AttentionLayer::identity(2), b);
  EXPECT_LT(g.d_w_q.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(g.d_w_k.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LossGradient, SymmetricInIdenticalNegatives) {
  std::mt19937_64 rng(8);
  BatchFixture f(4, 4, rng);
  f.docs[2] = f.docs[1];
  f.docs[2].doc_id = "copy";
  const auto l = random_layer(4, rng);
  const auto g1 = pam::loss_gradient(l, f.batch);
  std::swap(f.batch.negatives[0], f.batch.negatives[1]);
  const auto g2 = pam::loss_gradient(l, f.batch);
  EXPECT_EQ(g1.d_w_q, g2.d_w_q);
  EXPECT_EQ(g1.d_w_k, g2.d_w_k);
}

TEST(LossGradient, TokenSumOverloadAgrees) {
  std::mt19937_64 rng(9);
  BatchFixture f(5, 6, rng);
  const auto l = random_layer(5, rng);
  std::vector<Vector> sums{f.batch.positive->token_sum()};
  for (const auto* d : f.batch.negatives) sums.push_back(d->token_sum());
  std::vector<const Vector*> ptrs;
  for (const auto& s : sums) ptrs.push_back(&s);
  EXPECT_NEAR(pam::contrastive_loss(l, f.batch.prompt.vector, ptrs), pam::contrastive_loss(l, f.batch), 1e-12);
  const auto a = pam::loss_gradient(l, f.batch.prompt.vector, ptrs);
  const auto b = pam::loss_gradient(l, f.batch);
  EXPECT_TRUE(a.d_w_q.isApprox(b.d_w_q, 1e-12));
  EXPECT_TRUE(a.d_w_k.isApprox(b.d_w_k, 1e-12));
}

TEST(Layer, InitialisationAndValidation) {
  const auto id = AttentionLayer::identity(3);
  EXPECT_EQ(id.w_q, Matrix::Identity(3, 3));
  EXPECT_DOUBLE_EQ(id.temperature(), std::sqrt(3.0));
  const auto a = AttentionLayer::initialized(3, 0.01, 5);
  const auto b = AttentionLayer::initialized(3, 0.01, 5);
  EXPECT_EQ(a.w_q, b.w_q);
  EXPECT_EQ(a.w_k, b.w_k);
  EXPECT_NE(a.w_q, id.w_q);
  EXPECT_LT((a.w_q - id.w_q).cwiseAbs().maxCoeff(), 0.1);
  EXPECT_EQ(AttentionLayer::initialized(3, 0.0, 5).w_k, id.w_k);
  AttentionLayer bad = id;
  bad.w_k = Matrix::Identity(2, 2);
  EXPECT_THROW(bad.validate(), DimensionMismatch);
  bad = id;
  bad.w_q(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(Layer, CheckpointRoundTrip) {
  testing::TempDir dir("layer");
  std::mt19937_64 rng(10);
  const auto l = random_layer(6, rng);
  pam::save_layer(l, dir / "l.dmal");
  const auto back = pam::load_layer(dir / "l.dmal");
  EXPECT_EQ(back.w_q, l.w_q);
  EXPECT_EQ(back.w_k, l.w_k);
  const auto bytes = testing::read_file(dir / "l.dmal");
  EXPECT_EQ(bytes.size(), 4u + 4u + 2u * 36u * 8u);
  EXPECT_EQ(bytes.substr(0, 4), "DMAL");
  testing::write_file(dir / "short.dmal", bytes.substr(0, bytes.size() - 1));
  EXPECT_THROW(pam::load_layer(dir / "short.dmal"), FormatError);
}

TEST(Triplets, JsonlRoundTrip) {
  testing::TempDir dir("triplets");
  const std::vector<pam::TrainingTriplet> t{{"what is x", "d1"}, {"line\nbreak \"q\"", "d2"}};
  pam::save_triplets(t, dir / "t.jsonl");
  const auto back = pam::load_triplets(dir / "t.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].prompt, t[1].prompt);
  EXPECT_EQ(back[1].positive_doc_id, "d2");
}

class TrainingTest : public ::testing::Test {
 protected:
  void SetUp() override {
    corpus::SynthSpec spec;
    spec.n_docs = 60;
    spec.dim = 16;
    spec.filler_max = 20;
    c = corpus::synth_corpus(spec, 3);
    embed = [this](const std::string& text) { return toy_embed_prompt(text, c.store.dim(), c.embed_seed); };
  }
  corpus::SynthCorpus c;
  pam::PromptEmbedder embed;
};

TEST_F(TrainingTest, LossDecreases) {
  pam::TrainConfig cfg;
  cfg.epochs = 8;
  cfg.seed = 1;
  const auto r = pam::train(c.store, c.triplets, cfg, embed);
  ASSERT_EQ(r.loss_history.size(), 8u);
  EXPECT_LT(r.loss_history.back(), r.loss_history.front());
  EXPECT_NO_THROW(r.layer.validate());
}

TEST_F(TrainingTest, ZeroEpochsReturnsInitialisation) {
  pam::TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 9;
  const auto r = pam::train(c.store, c.triplets, cfg, embed);
  const auto init = AttentionLayer::initialized(c.store.dim(), cfg.init_scale, cfg.seed);
  EXPECT_EQ(r.layer.w_q, init.w_q);
  EXPECT_EQ(r.layer.w_k, init.w_k);
  EXPECT_TRUE(r.loss_history.empty());
}

TEST_F(TrainingTest, DeterministicUnderSeed) {
  pam::TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 4;
  const auto a = pam::train(c.store, c.triplets, cfg, embed);
  const auto b = pam::train(c.store, c.triplets, cfg, embed);
  EXPECT_EQ(a.loss_history, b.loss_history);
  EXPECT_EQ(a.layer.w_q, b.layer.w_q);
  EXPECT_EQ(a.layer.w_k, b.layer.w_k);
  cfg.seed = 5;
  EXPECT_NE(pam::train(c.store, c.triplets, cfg, embed).loss_history, a.loss_history);
}

TEST_F(TrainingTest, RejectsBadInput) {
  pam::TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(pam::train(c.store, {{"q", "nope"}}, cfg, embed), NotFound);
  cfg.n = 100;
  EXPECT_THROW(pam::train(c.store, c.triplets, cfg, embed), InvalidArgument);
  cfg.n = 1;
  EXPECT_THROW(pam::train(c.store, c.triplets, cfg, embed), InvalidArgument);
  cfg.n = 16;
  cfg.learning_rate = 0.0;
  EXPECT_THROW(pam::train(c.store, c.triplets, cfg, embed), InvalidArgument);
}

class CompositionTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::mt19937_64 rng(11);
    store = EmbeddingStore(6);
    for (int i = 0; i < 12; ++i) store.add(random_document("d" + std::to_string(i), 2 + i % 5, 6, rng));
    layer = random_layer(6, rng);
    p1 = {"one", random_vector(6, rng)};
    p2 = {"two", random_vector(6, rng)};
  }
  EmbeddingStore store;
  AttentionLayer layer;
  PromptEmbedding p1, p2;
};

TEST_F(CompositionTest, DegenerateWeightsReproduceSinglePrompt) {
  const auto single = pam::score_corpus(layer, p1, store);
  const auto comp = pam::compose_prompts(layer, {{p1, p2}, {1.0, 0.0}}, store);
  for (std::size_t d = 0; d < store.size(); ++d) {
    EXPECT_EQ(comp.documents[d].relevance, single.documents[d].relevance);
    EXPECT_EQ(comp.documents[d].token_attention, single.documents[d].token_attention);
    EXPECT_EQ(comp.documents[d].weights, single.documents[d].weights);
    EXPECT_EQ(comp.documents[d].embedding, single.documents[d].embedding);
  }
}

TEST_F(CompositionTest, IdenticalPromptsHalfWeights) {
  const auto single = pam::score_corpus(layer, p1, store);
  const auto comp = pam::compose_prompts(layer, {{p1, p1}, {0.5, 0.5}}, store);
  for (std::size_t d = 0; d < store.size(); ++d) {
    EXPECT_NEAR(comp.documents[d].relevance, single.documents[d].relevance, 1e-12);
    EXPECT_TRUE(comp.documents[d].embedding.isApprox(single.documents[d].embedding, 1e-12));
  }
}

TEST_F(CompositionTest, CompositeIsConvexCombination) {
  const auto r1 = pam::score_corpus(layer, p1, store);
  const auto r2 = pam::score_corpus(layer, p2, store);
  const auto comp = pam::compose_prompts(layer, {{p1, p2}, {0.8, 0.2}}, store);
  for (std::size_t d = 0; d < store.size(); ++d) {
    EXPECT_NEAR(comp.documents[d].relevance, 0.8 * r1.documents[d].relevance + 0.2 * r2.documents[d].relevance,
                1e-12);
    for (long t = 0; t < comp.documents[d].weights.size(); ++t) {
      EXPECT_NEAR(comp.documents[d].token_attention(t),
                  0.8 * r1.documents[d].token_attention(t) + 0.2 * r2.documents[d].token_attention(t), 1e-12);
      EXPECT_NEAR(comp.documents[d].weights(t), 0.8 * r1.documents[d].weights(t) + 0.2 * r2.documents[d].weights(t),
                  1e-12);
    }
    EXPECT_NEAR(comp.documents[d].weights.sum(), 1.0, 1e-9);
  }
}

TEST_F(CompositionTest, ArgmaxInvariantUnderCommonScaling) {
  // Same direction of weights, different normalisations of the prompt pair.
  const auto a = pam::compose_prompts(layer, {{p1, p2}, {0.25, 0.75}}, store);
  const auto r1 = pam::score_corpus(layer, p1, store);
  const auto r2 = pam::score_corpus(layer, p2, store);
  std::size_t best = 0, best_scaled = 0;
  for (std::size_t d = 1; d < store.size(); ++d) {
    if (a.documents[d].relevance > a.documents[best].relevance) best = d;
    const auto scaled = [&](std::size_t i) { return 3.0 * r1.documents[i].relevance + 9.0 * r2.documents[i].relevance; };
    if (scaled(d) > scaled(best_scaled)) best_scaled = d;
  }
  EXPECT_EQ(best, best_scaled);
}

TEST_F(CompositionTest, RejectsBadWeights) {
  EXPECT_THROW(pam::compose_prompts(layer, {{p1, p2}, {0.6, 0.6}}, store), InvalidArgument);
  EXPECT_THROW(pam::compose_prompts(layer, {{p1, p2}, {1.0}}, store), InvalidArgument);
  EXPECT_THROW(pam::compose_prompts(layer, {{p1, p2}, {1.5, -0.5}}, store), InvalidArgument);
  EXPECT_THROW(pam::compose_prompts(layer, {{}, {}}, store), InvalidArgument);
  EXPECT_NO_THROW(pam::compose_prompts(layer, {{p1, p2}, {0.3, 0.7 + 5e-10}}, store));
}

TEST(Rar, WholeDocumentIsOne) {
  std::mt19937_64 rng(12);
  const auto l = random_layer(4, rng);
  const auto d = random_document("d", 5, 4, rng);
  EXPECT_NEAR(pam::rar(l, {"p", random_vector(4, rng)}, d, std::vector<std::size_t>{0, 1, 2, 3, 4}), 1.0, 1e-12);
}

TEST(Rar, AnswerHoldingAllAttention) {
  const auto l = AttentionLayer::identity(2);
  // Attention (5, 0, 0): after the min shift only token 0 is positive.
  const auto d = doc_of({{5, 0}, {0, 1}, {0, -1}});
  EXPECT_DOUBLE_EQ(pam::rar(l, {"p", Vector::Unit(2, 0)}, d, std::vector<std::size_t>{0}), 1.0);
  EXPECT_DOUBLE_EQ(pam::rar(l, {"p", Vector::Unit(2, 0)}, d, std::vector<std::size_t>{1}), 0.0);
}

TEST(Rar, Errors) {
  const auto l = AttentionLayer::identity(2);
  const auto d = doc_of({{1, 0}, {1, 0}});
  EXPECT_THROW(pam::rar(l, {"p", Vector::Unit(2, 0)}, d, std::vector<std::size_t>{}), InvalidArgument);
  EXPECT_THROW(pam::rar(l, {"p", Vector::Unit(2, 0)}, d, std::vector<std::size_t>{2}), InvalidArgument);
  EXPECT_THROW(pam::rar(l, {"p", Vector::Unit(2, 0)}, d, std::vector<std::size_t>{0}), InvalidArgument);
}

TEST(Rar, BoundedOnRandomInstances) {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 100; ++rep) {
    const auto l = random_layer(3, rng);
    const auto d = random_document("d", 4, 3, rng);
    const double v = pam::rar(l, {"p", random_vector(3, rng)}, d, std::vector<std::size_t>{static_cast<std::size_t>(rep % 4)});
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

}  // namespace
}  // namespace docmap
