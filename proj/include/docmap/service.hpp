#pragma once
// Session-based exploration service. SessionManager implements the JSON API
// independently of the transport; serve() binds it to an HTTP listener.
//
//   POST   /sessions                    create from {"csv": ...} or {"store": path}
//   POST   /sessions/{id}/prompts       {"text", "weight"?}
//   PATCH  /sessions/{id}/weights       {"weights": [...], "omega_s"?, "omega_r"?}
//   GET    /sessions/{id}/map
//   GET    /sessions/{id}/topics
//   GET    /sessions/{id}/docs/{doc}
//   POST   /sessions/{id}/lasso         {"doc_ids": [...]}
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "docmap/analysis.hpp"
#include "docmap/embedding.hpp"
#include "docmap/pam.hpp"
#include "docmap/relmap.hpp"
#include "docmap/topics.hpp"

namespace docmap::service {

inline constexpr const char* kDataDirEnv = "DOCMAP_DATA_DIR";

struct PipelineConfig {
  relmap::MapConfig map;
  int k_max = 8;  // clustering and topic-count search upper bound
  int topic_restarts = 3;
  int topic_iters = 60;
  std::size_t topic_vocab_cap = 1000;
  double topic_threshold = 0.1;
  std::uint64_t seed = 0;
};

// Everything derived from one composite prompt result.
struct Analysis {
  pam::PromptResult composite;
  std::vector<relmap::MapItem> items;
  relmap::FitResult fit;
  analysis::Clustering clustering;
  std::vector<int> cell_colors;
  topics::AttentionMatrix attention;
  topics::TopicDecomposition topics;
};

// Map items use the composite embeddings and min-max normalised relevance.
// with_topics=false leaves attention and topics empty.
Analysis analyze(const EmbeddingStore& store, const pam::PromptResult& composite, const PipelineConfig& cfg,
                 bool with_topics = true);

// Per-ring mean gamma, ring 1 first.
std::vector<double> layer_gamma(const relmap::GridMap& map);

struct ServiceConfig {
  long dim = 64;
  std::uint64_t seed = 0;
  PipelineConfig pipeline;
  // Resolves relative store/checkpoint paths; when set, sessions are also
  // snapshotted to <data_dir>/sessions and replayed by load_sessions().
  std::optional<std::filesystem::path> data_dir;
};

// Reads kDataDirEnv into cfg.data_dir when it is set and non-empty.
ServiceConfig with_environment(ServiceConfig cfg);

struct Response {
  int status = 200;
  nlohmann::json body;
};

struct Session;

class SessionManager {
 public:
  explicit SessionManager(ServiceConfig cfg);
  ~SessionManager();
  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  Response create_session(const nlohmann::json& body);
  Response submit_prompt(const std::string& id, const nlohmann::json& body);
  Response update_weights(const std::string& id, const nlohmann::json& body);
  Response get_map(const std::string& id) const;
  Response get_topics(const std::string& id) const;
  Response get_doc(const std::string& id, const std::string& doc_id) const;
  Response lasso(const std::string& id, const nlohmann::json& body);

  // Routes one request; body is the raw request text (may be empty).
  Response handle(const std::string& method, const std::string& path, const std::string& body);

  // Replays every snapshot under <data_dir>/sessions; returns how many loaded.
  std::size_t load_sessions();

  std::size_t session_count() const;
  const ServiceConfig& config() const { return cfg_; }

 private:
  std::shared_ptr<Session> find(const std::string& id) const;
  std::shared_ptr<Session> add(std::shared_ptr<Session> session);
  void persist(const Session& session) const;

  ServiceConfig cfg_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
};

class HttpServer {
 public:
  explicit HttpServer(SessionManager& manager);
  ~HttpServer();
  // port 0 picks a free port; returns the bound port or throws.
  int bind(const std::string& host, int port);
  void listen();  // blocks until stop()
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace docmap::service
