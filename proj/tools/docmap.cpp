// docmap command-line driver.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "docmap/corpus.hpp"
#include "docmap/error.hpp"
#include "docmap/eval.hpp"
#include "docmap/service.hpp"

#ifndef DOCMAP_DEFAULT_DATA_DIR
#define DOCMAP_DEFAULT_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace docmap;

namespace {

fs::path data_dir() {
  if (const char* dir = std::getenv(service::kDataDirEnv); dir != nullptr && *dir != '\0') return dir;
  return DOCMAP_DEFAULT_DATA_DIR;
}

EmbeddingStore read_store(const fs::path& path) {
  return path.extension() == ".jsonl" ? load_store_jsonl(path) : load_store(path);
}

void write_store(const EmbeddingStore& store, const fs::path& path) {
  if (path.extension() == ".jsonl")
    save_store_jsonl(store, path);
  else
    save_store(store, path);
}

// Writes to `path`, or stdout when it is empty or "-".
void emit(const json& doc, const std::string& path) {
  const auto text = doc.dump(2);
  if (path.empty() || path == "-") {
    std::cout << text << '\n';
    return;
  }
  std::ofstream out(path);
  out << text << '\n';
  if (!out) throw Error("cannot write " + path);
}

struct Common {
  long dim = 64;
  std::uint64_t seed = 0;
};

struct MapOptions {
  std::string store;
  std::vector<std::string> prompts;
  std::vector<double> weights;
  std::string checkpoint;
  std::uint64_t embed_seed = 0;
  double omega_s = 1.0;
  double omega_r = 0.0;
  int epochs = 20;
  double lr = 0.5;
  double sigma0 = 0.0;
  double slack = 0.2;
  int k_max = 8;
  std::string output;
};

void add_map_options(CLI::App* cmd, MapOptions& o, bool map_flags) {
  cmd->add_option("--store", o.store, "Embedding store (.dmeb or .jsonl)")->required();
  cmd->add_option("--prompt", o.prompts, "Prompt text; repeat for a composite prompt")->required();
  cmd->add_option("--weights", o.weights, "Prompt weights summing to 1 (default: equal)");
  cmd->add_option("--checkpoint", o.checkpoint, "Attention layer checkpoint (default: identity)");
  cmd->add_option("--embed-seed", o.embed_seed, "Toy embedder seed the store was built with");
  cmd->add_option("--k-max", o.k_max, "Upper bound for cluster and topic counts")->check(CLI::Range(1, 64));
  cmd->add_option("-o,--output", o.output, "Output JSON path (default: stdout)");
  if (!map_flags) return;
  cmd->add_option("--omega-s", o.omega_s, "Similarity weight")->check(CLI::NonNegativeNumber);
  cmd->add_option("--omega-r", o.omega_r, "Relevance weight")->check(CLI::NonNegativeNumber);
  cmd->add_option("--epochs", o.epochs, "Map training epochs")->check(CLI::NonNegativeNumber);
  cmd->add_option("--lr", o.lr, "Initial map learning rate")->check(CLI::NonNegativeNumber);
  cmd->add_option("--sigma0", o.sigma0, "Initial neighbourhood width (<= 0: automatic)");
  cmd->add_option("--slack", o.slack, "Spare cell fraction")->check(CLI::PositiveNumber);
}

struct Scored {
  EmbeddingStore store;
  pam::PromptResult composite;
};

Scored score_prompts(const MapOptions& o) {
  Scored s{read_store(o.store), {}};
  const auto layer =
      o.checkpoint.empty() ? pam::AttentionLayer::identity(s.store.dim()) : pam::load_layer(o.checkpoint);
  if (layer.dim() != s.store.dim())
    throw DimensionMismatch("checkpoint dim differs from store dim", s.store.dim(), layer.dim());
  pam::PromptWeighting w;
  for (const auto& p : o.prompts) w.prompts.push_back(toy_embed_prompt(p, s.store.dim(), o.embed_seed));
  w.weights = o.weights.empty() ? std::vector<double>(o.prompts.size(), 1.0 / static_cast<double>(o.prompts.size()))
                                : o.weights;
  s.composite = pam::compose_prompts(layer, w, s.store);
  return s;
}

service::PipelineConfig pipeline(const MapOptions& o, std::uint64_t seed) {
  service::PipelineConfig cfg;
  cfg.map.omega_s = o.omega_s;
  cfg.map.omega_r = o.omega_r;
  cfg.map.epochs = o.epochs;
  cfg.map.lr0 = o.lr;
  cfg.map.sigma0 = o.sigma0;
  cfg.map.slack = o.slack;
  cfg.map.validate();
  cfg.k_max = o.k_max;
  cfg.seed = seed;
  return cfg;
}

int run_embed(const Common& c, const std::string& input, const std::string& output) {
  const auto records = corpus::load_corpus_csv(input);
  const auto store = corpus::embed_corpus(records, c.dim, c.seed);
  write_store(store, output);
  std::cerr << "embedded " << store.size() << " documents at dim " << store.dim() << " -> " << output << '\n';
  return 0;
}

struct TrainOptions {
  std::string store;
  std::string triplets;
  std::string qa;
  std::string store_out;
  std::string output;
  std::uint64_t embed_seed = 0;
  pam::TrainConfig cfg;
};

int run_train(const Common& c, TrainOptions o) {
  EmbeddingStore store;
  std::vector<pam::TrainingTriplet> triplets;
  if (!o.qa.empty()) {
    auto set = corpus::triplets_to_training(corpus::load_qa_jsonl(o.qa), o.cfg.n);
    store = corpus::embed_corpus(set.contexts, c.dim, o.embed_seed);
    triplets = std::move(set.triplets);
    if (!o.store_out.empty()) write_store(store, o.store_out);
  } else {
    if (o.store.empty() || o.triplets.empty()) throw InvalidArgument("train needs --qa or both --store and --triplets");
    store = read_store(o.store);
    triplets = pam::load_triplets(o.triplets);
  }
  o.cfg.seed = c.seed;
  const auto dim = store.dim();
  const auto seed = o.embed_seed;
  const auto result =
      pam::train(store, triplets, o.cfg, [&](const std::string& text) { return toy_embed_prompt(text, dim, seed); });
  for (std::size_t e = 0; e < result.loss_history.size(); ++e)
    std::cerr << "epoch " << e + 1 << " loss " << result.loss_history[e] << '\n';
  pam::save_layer(result.layer, o.output);
  std::cerr << "trained on " << triplets.size() << " triplets -> " << o.output << '\n';
  return 0;
}

int run_map(const Common& c, const MapOptions& o) {
  const auto s = score_prompts(o);
  const auto a = service::analyze(s.store, s.composite, pipeline(o, c.seed), false);
  json clusters = json::object();
  for (std::size_t d = 0; d < s.store.size(); ++d) clusters[s.store[d].doc_id] = a.clustering.labels[d];
  json doc{{"layout", relmap::layout_json(a.fit.map, a.items, a.fit.loss_history)},
           {"cell_colors", a.cell_colors},
           {"clusters", {{"k", a.clustering.k}, {"labels", std::move(clusters)}}},
           {"layer_gamma", service::layer_gamma(a.fit.map)},
           {"rpc", relmap::rpc(a.fit.map, a.items)}};
  emit(doc, o.output);
  return 0;
}

int run_topics(const Common& c, const MapOptions& o, double threshold) {
  const auto s = score_prompts(o);
  const auto cfg = pipeline(o, c.seed);
  const auto v = topics::build_attention_matrix(s.composite, s.store, cfg.topic_vocab_cap);
  const int t_max = static_cast<int>(std::min<long>({static_cast<long>(cfg.k_max), v.v.rows(), v.v.cols()}));
  std::vector<int> ks;
  for (int k = 1; k <= t_max; ++k) ks.push_back(k);
  json stability = json::array();
  int k = 1;
  if (t_max >= 2) {
    const auto sel = topics::select_topic_count(v.v, ks, cfg.topic_restarts, cfg.topic_iters, cfg.seed);
    k = sel.k;
    for (const auto& [kk, score] : sel.stability) stability.push_back({{"k", kk}, {"stability", score}});
  }
  const auto decomp = topics::nmf(v.v, k, cfg.topic_iters, cfg.seed);
  auto doc = topics::topics_json(decomp, v, threshold);
  doc["stability"] = std::move(stability);
  doc["reconstruction_error"] = decomp.reconstruction_error;
  emit(doc, o.output);
  return 0;
}

struct DigitsOptions {
  std::string data;
  std::optional<double> omega_s;
  std::optional<double> omega_r;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::string json_out;
};

int run_eval_digits(const Common& c, const DigitsOptions& o, bool seed_given) {
  const fs::path path = o.data.empty() ? data_dir() / "digits.csv" : fs::path(o.data);
  const auto data = corpus::load_digits_csv(path);
  auto base = eval::digits_map_config();
  if (seed_given) base.seed = c.seed;
  if (o.epochs) base.epochs = *o.epochs;
  if (o.lr) base.lr0 = *o.lr;

  std::vector<std::pair<double, double>> weights;
  if (o.omega_s || o.omega_r) {
    // A single weight implies its complement.
    const double ws = o.omega_s ? *o.omega_s : 1.0 - *o.omega_r;
    weights.push_back({ws, o.omega_r ? *o.omega_r : 1.0 - ws});
  } else {
    weights = {{1.0, 0.0}, {0.7, 0.3}, {0.3, 0.7}, {0.0, 1.0}};
  }

  json reports = json::array();
  std::printf("%-8s %-8s %10s %12s %10s %10s %8s\n", "omega_s", "omega_r", "silhouette", "rpc_initial", "rpc",
              "spearman", "seconds");
  for (const auto& [ws, wr] : weights) {
    auto cfg = base;
    cfg.omega_s = ws;
    cfg.omega_r = wr;
    cfg.validate();
    const auto r = eval::evaluate_digits(data, cfg);
    std::printf("%-8.2f %-8.2f %10.4f %12.4f %10.4f %10.4f %8.1f\n", ws, wr, r.silhouette, r.rpc_initial, r.rpc,
                r.spearman_layer, r.seconds);
    std::fflush(stdout);
    reports.push_back(eval::to_json(r));
  }
  if (!o.json_out.empty())
    emit({{"dataset", path.string()}, {"samples", data.items.size()}, {"seed", base.seed}, {"runs", reports}},
         o.json_out);
  return 0;
}

struct RetrievalOptions {
  std::optional<int> epochs;
  std::optional<double> lr;
  std::string json_out;
};

int run_eval_retrieval(const Common& c, const RetrievalOptions& o, bool seed_given, bool dim_given) {
  eval::RetrievalSetup rs;
  eval::ClusteringSetup cs;
  if (seed_given) rs.corpus_seed = cs.corpus_seed = c.seed;
  if (dim_given) rs.spec.dim = cs.spec.dim = c.dim;
  if (o.epochs) rs.train.epochs = cs.train.epochs = *o.epochs;
  if (o.lr) rs.train.learning_rate = cs.train.learning_rate = *o.lr;

  const auto r = eval::evaluate_retrieval(rs);
  std::printf("retrieval: %zu training prompts, %zu held out, top-%d\n", r.train_prompts, r.held_out_prompts,
              rs.top_k);
  std::printf("  %-18s %8.3f\n  %-18s %8.3f\n", "identity baseline", r.baseline_accuracy, "trained layer",
              r.trained_accuracy);
  const auto cl = eval::evaluate_clustering(cs);
  std::printf("prompt-conditioned clustering (ARI)\n  %-12s %10s %10s\n", "system", "static", "prompted");
  for (std::size_t s = 0; s < cl.systems.size(); ++s)
    std::printf("  %-12s %10.3f %10.3f\n", cl.systems[s].c_str(), cl.static_ari[s], cl.pam_ari[s]);
  if (!o.json_out.empty())
    emit({{"corpus_seed", rs.corpus_seed}, {"retrieval", eval::to_json(r)}, {"clustering", eval::to_json(cl)}},
         o.json_out);
  return 0;
}

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  double omega_s = 1.0;
  double omega_r = 0.0;
  int k_max = 8;
  std::string data_dir;
};

int run_serve(const Common& c, const ServeOptions& o) {
  service::ServiceConfig cfg;
  cfg.dim = c.dim;
  cfg.seed = c.seed;
  cfg.pipeline.seed = c.seed;
  cfg.pipeline.k_max = o.k_max;
  cfg.pipeline.map.omega_s = o.omega_s;
  cfg.pipeline.map.omega_r = o.omega_r;
  cfg.pipeline.map.validate();
  cfg = service::with_environment(cfg);
  if (!o.data_dir.empty()) cfg.data_dir = o.data_dir;

  service::SessionManager manager(cfg);
  const auto restored = manager.load_sessions();
  service::HttpServer server(manager);
  const int port = server.bind(o.host, o.port);
  std::cerr << "listening on http://" << o.host << ':' << port;
  if (cfg.data_dir) std::cerr << " (data dir " << cfg.data_dir->string() << ", " << restored << " sessions restored)";
  std::cerr << std::endl;
  server.listen();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompt-conditioned document maps"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  auto* dim_opt = app.add_option("--dim", common.dim, "Embedding dimension")->check(CLI::Range(2L, 4096L));
  auto* seed_opt = app.add_option("--seed", common.seed, "Random seed");
  app.footer(std::string("Environment: ") + service::kDataDirEnv + " overrides the data directory (default " +
             DOCMAP_DEFAULT_DATA_DIR + ").");

  std::string embed_in, embed_out;
  auto* embed = app.add_subcommand("embed", "Embed a CSV corpus with the toy embedder");
  embed->add_option("corpus", embed_in, "CSV with id,title,text[,source] columns")->required();
  embed->add_option("-o,--output", embed_out, "Store path (.dmeb binary or .jsonl)")->required();

  TrainOptions train_opts;
  auto* train = app.add_subcommand("train", "Train an attention layer contrastively");
  train->add_option("--store", train_opts.store, "Embedding store of the documents");
  train->add_option("--triplets", train_opts.triplets, "JSON lines {prompt, positive_doc_id}");
  train->add_option("--qa", train_opts.qa, "JSON lines {question, answer, context}; replaces --store/--triplets");
  train->add_option("--store-out", train_opts.store_out, "With --qa: also save the embedded contexts");
  train->add_option("--embed-seed", train_opts.embed_seed, "Toy embedder seed for prompts (and --qa contexts)");
  train->add_option("--epochs", train_opts.cfg.epochs, "Training epochs (0 writes the initialisation)")
      ->check(CLI::NonNegativeNumber);
  train->add_option("--lr", train_opts.cfg.learning_rate, "SGD learning rate")->check(CLI::PositiveNumber);
  train->add_option("--batch", train_opts.cfg.n, "Documents per contrastive batch")->check(CLI::Range(2, 1 << 20));
  train->add_option("-o,--output", train_opts.output, "Checkpoint path")->required();

  MapOptions map_opts;
  auto* map = app.add_subcommand("map", "Fit the relevance-preserving map for a prompt");
  add_map_options(map, map_opts, true);

  MapOptions topic_opts;
  double threshold = 0.1;
  auto* topics_cmd = app.add_subcommand("topics", "Attention topics for a prompt");
  add_map_options(topics_cmd, topic_opts, false);
  topics_cmd->add_option("--threshold", threshold, "Minimum token weight listed per topic");

  DigitsOptions digits_opts;
  auto* digits = app.add_subcommand("eval-digits", "Map the digits set and report layout metrics");
  digits->add_option("--data", digits_opts.data, "Digits CSV (default: <data dir>/digits.csv)");
  digits->add_option("--omega-s", digits_opts.omega_s, "Similarity weight (default: run the four standard mixes)");
  digits->add_option("--omega-r", digits_opts.omega_r, "Relevance weight");
  digits->add_option("--epochs", digits_opts.epochs, "Map epochs");
  digits->add_option("--lr", digits_opts.lr, "Initial map learning rate");
  digits->add_option("--json", digits_opts.json_out, "Write the JSON report here");

  RetrievalOptions retr_opts;
  auto* retrieval = app.add_subcommand("eval-retrieval", "Synthetic retrieval and prompt-conditioned clustering");
  retrieval->add_option("--epochs", retr_opts.epochs, "Layer training epochs");
  retrieval->add_option("--lr", retr_opts.lr, "Layer learning rate");
  retrieval->add_option("--json", retr_opts.json_out, "Write the JSON report here");

  ServeOptions serve_opts;
  auto* serve = app.add_subcommand("serve", "Run the HTTP JSON service");
  serve->add_option("--host", serve_opts.host, "Bind address");
  serve->add_option("--port", serve_opts.port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve->add_option("--omega-s", serve_opts.omega_s, "Default similarity weight")->check(CLI::NonNegativeNumber);
  serve->add_option("--omega-r", serve_opts.omega_r, "Default relevance weight")->check(CLI::NonNegativeNumber);
  serve->add_option("--k-max", serve_opts.k_max, "Upper bound for cluster and topic counts")
      ->check(CLI::Range(1, 64));
  serve->add_option("--data-dir", serve_opts.data_dir, "Session snapshots and relative store paths");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*embed) return run_embed(common, embed_in, embed_out);
    if (*train) return run_train(common, train_opts);
    if (*map) return run_map(common, map_opts);
    if (*topics_cmd) return run_topics(common, topic_opts, threshold);
    if (*digits) return run_eval_digits(common, digits_opts, seed_opt->count() > 0);
    if (*retrieval) return run_eval_retrieval(common, retr_opts, seed_opt->count() > 0, dim_opt->count() > 0);
    if (*serve) return run_serve(common, serve_opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
