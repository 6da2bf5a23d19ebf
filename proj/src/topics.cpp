#include "docmap/topics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "docmap/error.hpp"
#include "docmap/rng.hpp"

namespace docmap::topics {

namespace {

constexpr double kEps = 1e-16;

void check_nonnegative(const Matrix& v) {
  if (!v.allFinite()) throw InvalidArgument("attention matrix has non-finite entries");
  if (v.size() > 0 && v.minCoeff() < 0.0) throw InvalidArgument("attention matrix has a negative entry");
}

std::vector<int> dominant_topics(const Matrix& w) {
  std::vector<int> out(static_cast<std::size_t>(w.rows()));
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < w.cols(); ++j)
      if (w(i, j) > w(i, best)) best = j;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

struct Consensus {
  double stability = 1.0;
  bool uses_all_topics = true;  // every restart assigns some document to each topic
};

Consensus consensus_stability(const Matrix& v, int k, int restarts, int iters, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(v.rows());
  std::vector<std::vector<int>> runs(static_cast<std::size_t>(restarts));
#pragma omp parallel for schedule(dynamic, 1)
  for (int r = 0; r < restarts; ++r) {
    const auto s = derive_seed(seed, static_cast<std::uint64_t>(k) * 7919ULL + static_cast<std::uint64_t>(r));
    runs[static_cast<std::size_t>(r)] = dominant_topics(nmf(v, k, iters, s).w);
  }
  Consensus out;
  for (const auto& run : runs) {
    std::vector<int> sorted = run;
    std::sort(sorted.begin(), sorted.end());
    if (std::unique(sorted.begin(), sorted.end()) - sorted.begin() < k) out.uses_all_topics = false;
  }
  if (n < 2) return out;
  double dispersion = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      int together = 0;
      for (const auto& run : runs) together += run[i] == run[j];
      const double c = static_cast<double>(together) / restarts;
      dispersion += std::abs(c - std::round(c));
      ++pairs;
    }
  }
  out.stability = 1.0 - 2.0 * dispersion / static_cast<double>(pairs);
  return out;
}

}  // namespace

AttentionMatrix build_attention_matrix(const pam::PromptResult& result, const EmbeddingStore& store,
                                       std::size_t vocab_cap) {
  if (store.empty()) throw InvalidArgument("attention matrix over an empty corpus");
  if (result.documents.size() != store.size())
    throw InvalidArgument("prompt result does not cover the store");

  AttentionMatrix out;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& doc : store.documents())
    for (const auto& tok : doc.tokens)
      if (index.emplace(tok, out.vocab.size()).second) out.vocab.push_back(tok);

  Matrix v = Matrix::Zero(static_cast<Eigen::Index>(store.size()), static_cast<Eigen::Index>(out.vocab.size()));
  for (std::size_t d = 0; d < store.size(); ++d) {
    const auto& doc = store[d];
    const auto& weights = result.documents[d].weights;
    if (weights.size() != static_cast<Eigen::Index>(doc.size()))
      throw InvalidArgument("prompt result token count differs for '" + doc.doc_id + "'");
    out.doc_ids.push_back(doc.doc_id);
    for (std::size_t t = 0; t < doc.size(); ++t)
      v(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(index.at(doc.tokens[t]))) +=
          weights[static_cast<Eigen::Index>(t)];
  }

  if (vocab_cap > 0 && out.vocab.size() > vocab_cap) {
    const Vector mass = v.colwise().sum().transpose();
    std::vector<std::size_t> order(out.vocab.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return mass[static_cast<Eigen::Index>(a)] > mass[static_cast<Eigen::Index>(b)]; });
    order.resize(vocab_cap);
    std::sort(order.begin(), order.end());
    Matrix capped(v.rows(), static_cast<Eigen::Index>(vocab_cap));
    std::vector<std::string> vocab;
    for (std::size_t c = 0; c < order.size(); ++c) {
      capped.col(static_cast<Eigen::Index>(c)) = v.col(static_cast<Eigen::Index>(order[c]));
      vocab.push_back(out.vocab[order[c]]);
    }
    v = std::move(capped);
    out.vocab = std::move(vocab);
  }
  out.v = std::move(v);
  return out;
}

TopicDecomposition nmf(const Matrix& v, int k, int iters, std::uint64_t seed) {
  check_nonnegative(v);
  const auto n = v.rows();
  const auto m = v.cols();
  if (k < 1 || k > std::min(n, m))
    throw InvalidArgument("nmf: k=" + std::to_string(k) + " outside [1, min(n, m)]");
  if (iters < 0) throw InvalidArgument("nmf: iters must be non-negative");

  const double mean = v.mean();
  const double scale = mean > 0.0 ? std::sqrt(mean / k) : 1.0;
  Rng rng(derive_seed(seed, 0x4e4d46));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  TopicDecomposition out;
  out.k = k;
  out.w.resize(n, k);
  out.h.resize(k, m);
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index i = 0; i < n; ++i) out.w(i, j) = scale * unif(rng);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < k; ++i) out.h(i, j) = scale * unif(rng);

  out.error_history.reserve(static_cast<std::size_t>(iters) + 1);
  out.error_history.push_back((v - out.w * out.h).norm());
  for (int it = 0; it < iters; ++it) {
    const Matrix wt_v = out.w.transpose() * v;
    const Matrix wt_w_h = (out.w.transpose() * out.w) * out.h;
    out.h = out.h.cwiseProduct(wt_v).cwiseQuotient((wt_w_h.array() + kEps).matrix());
    const Matrix v_ht = v * out.h.transpose();
    const Matrix w_h_ht = out.w * (out.h * out.h.transpose());
    out.w = out.w.cwiseProduct(v_ht).cwiseQuotient((w_h_ht.array() + kEps).matrix());
    out.error_history.push_back((v - out.w * out.h).norm());
  }
  out.reconstruction_error = out.error_history.back();

  for (Eigen::Index t = 0; t < k; ++t) {
    const double mx = out.h.row(t).maxCoeff();
    if (mx > 0.0) {
      out.h.row(t) /= mx;
      out.w.col(t) *= mx;
    }
  }
  return out;
}

TopicCountSelection select_topic_count(const Matrix& v, const std::vector<int>& k_range, int restarts,
                                       int iters, std::uint64_t seed) {
  if (k_range.empty()) throw InvalidArgument("select_topic_count: empty k range");
  if (restarts < 2) throw InvalidArgument("select_topic_count: needs at least two restarts");
  check_nonnegative(v);
  const long k_max = std::min(v.rows(), v.cols());
  std::vector<int> ks = k_range;
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  for (int k : ks)
    if (k < 1 || k > k_max)
      throw InvalidArgument("select_topic_count: k=" + std::to_string(k) + " out of range");

  TopicCountSelection out;
  // Walk up from the smallest candidate and stop where stability begins to
  // fall: the chosen k is the last one that uses all its topics, reaches
  // kStableThreshold and is no less stable than its predecessor.
  int chosen = ks.front() == 1 ? 1 : 0;
  bool walking = true;
  double previous = -1.0;
  for (int k : ks) {
    if (k == 1) {
      out.stability.emplace_back(1, 1.0);
      continue;
    }
    const auto c = consensus_stability(v, k, restarts, iters, seed);
    out.stability.emplace_back(k, c.stability);
    if (walking && c.uses_all_topics && c.stability >= kStableThreshold && c.stability >= previous - 1e-12) {
      chosen = k;
      previous = c.stability;
    } else {
      walking = false;
    }
  }
  out.k = chosen == 0 ? ks.front() : chosen;
  return out;
}

std::vector<TokenWeight> top_tokens(const TopicDecomposition& decomp, const std::vector<std::string>& vocab,
                                    int topic, double threshold) {
  if (topic < 0 || topic >= decomp.k) throw InvalidArgument("top_tokens: topic out of range");
  if (static_cast<Eigen::Index>(vocab.size()) != decomp.h.cols())
    throw InvalidArgument("top_tokens: vocabulary size differs from H");
  std::vector<TokenWeight> out;
  for (std::size_t t = 0; t < vocab.size(); ++t) {
    const double w = decomp.h(topic, static_cast<Eigen::Index>(t));
    if (w >= threshold) out.push_back({vocab[t], w});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.weight > b.weight; });
  return out;
}

nlohmann::json topics_json(const TopicDecomposition& decomp, const AttentionMatrix& v, double threshold) {
  nlohmann::json topics = nlohmann::json::array();
  for (int t = 0; t < decomp.k; ++t) {
    nlohmann::json toks = nlohmann::json::array();
    for (const auto& tw : top_tokens(decomp, v.vocab, t, threshold)) toks.push_back({{"t", tw.token}, {"w", tw.weight}});
    topics.push_back({{"id", t}, {"tokens", std::move(toks)}});
  }
  nlohmann::json doc_weights = nlohmann::json::object();
  for (std::size_t d = 0; d < v.doc_ids.size(); ++d) {
    std::vector<double> row(static_cast<std::size_t>(decomp.k));
    for (int t = 0; t < decomp.k; ++t) row[static_cast<std::size_t>(t)] = decomp.w(static_cast<Eigen::Index>(d), t);
    doc_weights[v.doc_ids[d]] = row;
  }
  return {{"k", decomp.k}, {"topics", std::move(topics)}, {"doc_topic_weights", std::move(doc_weights)}};
}

}  // namespace docmap::topics
