#include "docmap/eval.hpp"

#include <chrono>

#include "docmap/analysis.hpp"
#include "docmap/error.hpp"
#include "docmap/service.hpp"

namespace docmap::eval {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

relmap::MapConfig digits_map_config() {
  relmap::MapConfig cfg;
  cfg.epochs = 10;
  cfg.lr0 = 1.0;
  cfg.sigma0 = 0.0;  // automatic
  cfg.slack = 4.0;
  cfg.seed = 2;
  return cfg;
}

DigitsReport evaluate_digits(const corpus::DigitsDataset& data, const relmap::MapConfig& cfg,
                             relmap::FitResult* fit_out) {
  const auto t0 = std::chrono::steady_clock::now();
  auto items = data.items;
  std::vector<double> raw;
  for (const auto& it : items) raw.push_back(it.relevance);
  const auto rel = relmap::normalize_relevance(raw);
  for (std::size_t i = 0; i < items.size(); ++i) items[i].relevance = rel[i];

  auto fit = relmap::fit(items, cfg);
  const auto& map = fit.map;
  DigitsReport r;
  r.omega_s = cfg.omega_s;
  r.omega_r = cfg.omega_r;
  RowMatrix xy(static_cast<Eigen::Index>(items.size()), 2);
  std::vector<double> digit, ring;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto c = static_cast<std::size_t>(map.assignment[i]);
    xy(static_cast<Eigen::Index>(i), 0) = map.x[c];
    xy(static_cast<Eigen::Index>(i), 1) = map.y[c];
    digit.push_back(data.labels[i]);
    ring.push_back(map.layer[c]);
  }
  r.silhouette = analysis::silhouette(xy, data.labels);
  r.rpc_initial = relmap::rpc(map, items, true);
  r.rpc = relmap::rpc(map, items);
  r.spearman_layer = analysis::spearman(digit, ring);
  r.loss_history = fit.loss_history;
  r.layer_gamma = service::layer_gamma(map);
  r.layer_count = map.layer_count;
  r.seconds = seconds_since(t0);
  if (fit_out) *fit_out = std::move(fit);
  return r;
}

nlohmann::json to_json(const DigitsReport& r) {
  return {{"omega_s", r.omega_s},         {"omega_r", r.omega_r},     {"silhouette", r.silhouette},
          {"rpc_initial", r.rpc_initial}, {"rpc", r.rpc},             {"spearman_layer", r.spearman_layer},
          {"loss_history", r.loss_history}, {"layer_gamma", r.layer_gamma}, {"layer_count", r.layer_count},
          {"seconds", r.seconds}};
}

RetrievalSetup::RetrievalSetup() {
  spec.groups = {4};
  train.seed = 3;
}

std::size_t relevance_rank(const pam::PromptResult& result, std::size_t doc_index) {
  const double target = result.documents.at(doc_index).relevance;
  std::size_t rank = 0;
  for (std::size_t d = 0; d < result.documents.size(); ++d)
    if (d != doc_index && result.documents[d].relevance >= target) ++rank;
  return rank;
}

RetrievalReport evaluate_retrieval(const RetrievalSetup& setup, pam::AttentionLayer* trained_out) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& spec = setup.spec;
  if (spec.questions_per_doc < 2) throw InvalidArgument("retrieval needs at least two questions per document");
  if (setup.held_out < 1 || setup.held_out > spec.n_docs)
    throw InvalidArgument("held_out must lie in [1, n_docs]");
  const auto c = corpus::synth_corpus(spec, setup.corpus_seed);
  const auto q = static_cast<std::size_t>(spec.questions_per_doc);
  const auto n = c.store.size();

  std::vector<pam::TrainingTriplet> train;
  for (std::size_t d = 0; d < n; ++d)
    for (std::size_t j = 0; j + 1 < q; ++j) train.push_back(c.triplets[d * q + j]);
  std::vector<std::size_t> held;
  const std::size_t step = n / static_cast<std::size_t>(setup.held_out);
  for (std::size_t i = 0; i < static_cast<std::size_t>(setup.held_out); ++i) held.push_back(i * step);

  const auto embed = [&](const std::string& text) { return toy_embed_prompt(text, c.store.dim(), c.embed_seed); };
  auto accuracy = [&](const pam::AttentionLayer& layer) {
    std::size_t hits = 0;
    for (std::size_t d : held) {
      const auto res = pam::score_corpus(layer, embed(c.qa[d * q + q - 1].question), c.store);
      if (relevance_rank(res, d) < static_cast<std::size_t>(setup.top_k)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(held.size());
  };

  RetrievalReport r;
  r.train_prompts = train.size();
  r.held_out_prompts = held.size();
  r.baseline_accuracy = accuracy(pam::AttentionLayer::identity(c.store.dim()));
  auto trained = pam::train(c.store, train, setup.train, embed);
  r.trained_accuracy = accuracy(trained.layer);
  r.loss_history = trained.loss_history;
  r.seconds = seconds_since(t0);
  if (trained_out) *trained_out = std::move(trained.layer);
  return r;
}

nlohmann::json to_json(const RetrievalReport& r) {
  return {{"baseline_accuracy", r.baseline_accuracy},
          {"trained_accuracy", r.trained_accuracy},
          {"train_prompts", r.train_prompts},
          {"held_out_prompts", r.held_out_prompts},
          {"loss_history", r.loss_history},
          {"seconds", r.seconds}};
}

ClusteringSetup::ClusteringSetup() {
  spec.groups = {4, 4};
  spec.signature_vocab = 2;
  spec.signature_per_doc = 3;
  spec.background_per_doc = 8;
  spec.filler_min = 2;
  spec.filler_max = 12;
  train.seed = 5;
}

ClusteringReport evaluate_clustering(const ClusteringSetup& setup) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto c = corpus::synth_corpus(setup.spec, setup.corpus_seed);
  const auto embed = [&](const std::string& text) { return toy_embed_prompt(text, c.store.dim(), c.embed_seed); };
  const auto layer = pam::train(c.store, c.triplets, setup.train, embed).layer;

  const auto n = static_cast<Eigen::Index>(c.store.size());
  RowMatrix pooled(n, c.store.dim());
  for (Eigen::Index d = 0; d < n; ++d) {
    const auto& doc = c.store[static_cast<std::size_t>(d)];
    pooled.row(d) = doc.token_sum().transpose() / static_cast<double>(doc.size());
  }

  ClusteringReport r;
  for (std::size_t s = 0; s < c.system_names.size(); ++s) {
    const int k = setup.spec.groups[s];
    const auto res = pam::score_corpus(layer, embed(c.system_prompts[s]), c.store);
    RowMatrix dyn(n, c.store.dim());
    for (Eigen::Index d = 0; d < n; ++d) dyn.row(d) = res.documents[static_cast<std::size_t>(d)].embedding.transpose();
    const auto& truth = c.labels[s];
    r.systems.push_back(c.system_names[s]);
    r.static_ari.push_back(
        analysis::ari(analysis::kmeans(pooled, k, setup.kmeans_seed, 300, setup.kmeans_restarts).labels, truth));
    r.pam_ari.push_back(
        analysis::ari(analysis::kmeans(dyn, k, setup.kmeans_seed, 300, setup.kmeans_restarts).labels, truth));
  }
  r.seconds = seconds_since(t0);
  return r;
}

nlohmann::json to_json(const ClusteringReport& r) {
  nlohmann::json systems = nlohmann::json::array();
  for (std::size_t s = 0; s < r.systems.size(); ++s)
    systems.push_back({{"system", r.systems[s]}, {"static_ari", r.static_ari[s]}, {"pam_ari", r.pam_ari[s]}});
  return {{"systems", std::move(systems)}, {"seconds", r.seconds}};
}

}  // namespace docmap::eval
