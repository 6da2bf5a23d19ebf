#include "docmap/service.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "docmap/corpus.hpp"
#include "docmap/error.hpp"

namespace docmap::service {

using nlohmann::json;

struct PromptState {
  std::string text;
  double weight = 0.0;
  pam::PromptResult result;
};

// Immutable once published; readers keep the previous one alive while a refit runs.
struct Snapshot {
  std::uint64_t version = 0;
  std::vector<std::string> prompt_texts;
  std::vector<double> weights;
  double omega_s = 1.0;
  double omega_r = 0.0;
  std::shared_ptr<const Analysis> analysis;  // null until the first prompt
};

struct Session {
  std::string id;
  std::string parent;
  std::shared_ptr<const EmbeddingStore> store;
  std::shared_ptr<const pam::AttentionLayer> layer;
  std::uint64_t embed_seed = 0;  // toy embedder seed shared by documents and prompts

  std::mutex write_mu;  // serialises state changes
  std::vector<PromptState> prompts;
  double omega_s = 1.0;
  double omega_r = 0.0;
  std::uint64_t version = 0;

  mutable std::mutex snap_mu;
  std::shared_ptr<const Snapshot> snapshot = std::make_shared<Snapshot>();

  std::shared_ptr<const Snapshot> current() const {
    std::lock_guard lock(snap_mu);
    return snapshot;
  }
  void publish(std::shared_ptr<const Snapshot> s) {
    std::lock_guard lock(snap_mu);
    snapshot = std::move(s);
  }
};

namespace {

struct HttpError : Error {
  int status;
  HttpError(int s, const std::string& what) : Error(what), status(s) {}
};

Response error_response(int status, const std::string& message) { return {status, json{{"error", message}}}; }

std::filesystem::path resolve(const ServiceConfig& cfg, const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_relative() && cfg.data_dir) return *cfg.data_dir / p;
  return p;
}

double number_field(const json& body, const char* key, double fallback) {
  if (!body.contains(key)) return fallback;
  if (!body[key].is_number()) throw InvalidArgument(std::string("'") + key + "' must be a number");
  return body[key].get<double>();
}

json cluster_json(const Analysis& a, const EmbeddingStore& store) {
  json labels = json::object();
  for (std::size_t d = 0; d < store.size(); ++d) labels[store[d].doc_id] = a.clustering.labels[d];
  return {{"k", a.clustering.k}, {"labels", std::move(labels)}};
}

json relevance_json(const Analysis& a, const EmbeddingStore& store) {
  json out = json::object();
  for (std::size_t d = 0; d < store.size(); ++d)
    out[store[d].doc_id] = {{"raw", a.composite.documents[d].relevance}, {"normalized", a.items[d].relevance}};
  return out;
}

json map_json(const Session& s, const Snapshot& snap) {
  const auto& a = *snap.analysis;
  return {{"session", s.id},
          {"version", snap.version},
          {"omega_s", snap.omega_s},
          {"omega_r", snap.omega_r},
          {"layout", relmap::layout_json(a.fit.map, a.items, a.fit.loss_history)},
          {"cell_colors", a.cell_colors},
          {"clusters", cluster_json(a, *s.store)},
          {"layer_gamma", layer_gamma(a.fit.map)},
          {"relevance", relevance_json(a, *s.store)}};
}

json topics_payload(const Session& s, const Snapshot& snap, double threshold) {
  const auto& a = *snap.analysis;
  json out = topics::topics_json(a.topics, a.attention, threshold);
  out["session"] = s.id;
  out["version"] = snap.version;
  out["threshold"] = threshold;
  return out;
}

json state_json(const Session& s, const Snapshot& snap, double threshold) {
  json out = map_json(s, snap);
  out["prompts"] = json::array();
  for (std::size_t i = 0; i < snap.prompt_texts.size(); ++i)
    out["prompts"].push_back({{"text", snap.prompt_texts[i]}, {"weight", snap.weights[i]}});
  out["topics"] = topics_payload(s, snap, threshold);
  return out;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : path) {
    if (c == '/') {
      if (!cur.empty()) parts.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) parts.push_back(std::move(cur));
  return parts;
}

}  // namespace

std::vector<double> layer_gamma(const relmap::GridMap& map) {
  const auto offsets = map.layer_offsets();
  std::vector<double> out;
  for (std::size_t l = 0; l + 1 < offsets.size(); ++l) {
    double sum = 0.0;
    for (long k = offsets[l]; k < offsets[l + 1]; ++k) sum += map.gamma[static_cast<std::size_t>(k)];
    out.push_back(sum / static_cast<double>(offsets[l + 1] - offsets[l]));
  }
  return out;
}

Analysis analyze(const EmbeddingStore& store, const pam::PromptResult& composite, const PipelineConfig& cfg,
                 bool with_topics) {
  if (store.size() < 2) throw InvalidArgument("at least two documents are needed for a map");
  Analysis a;
  a.composite = composite;
  const auto n = store.size();

  std::vector<double> raw(n);
  for (std::size_t d = 0; d < n; ++d) raw[d] = composite.documents[d].relevance;
  const auto rel = relmap::normalize_relevance(raw);
  RowMatrix points(static_cast<Eigen::Index>(n), store.dim());
  for (std::size_t d = 0; d < n; ++d) {
    a.items.push_back({store[d].doc_id, composite.documents[d].embedding, rel[d]});
    points.row(static_cast<Eigen::Index>(d)) = composite.documents[d].embedding.transpose();
  }

  auto map_cfg = cfg.map;
  map_cfg.seed = cfg.seed;
  a.fit = relmap::fit(a.items, map_cfg);

  const int k_max = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(std::max(cfg.k_max, 1)), n));
  const int k = analysis::elbow_k(points, k_max, cfg.seed);
  a.clustering = analysis::kmeans(points, k, cfg.seed);
  a.cell_colors = analysis::color_cells(a.fit.map, a.clustering.labels);
  if (!with_topics) return a;

  a.attention = topics::build_attention_matrix(composite, store, cfg.topic_vocab_cap);
  const int t_max = static_cast<int>(std::min<long>(
      {static_cast<long>(std::max(cfg.k_max, 1)), a.attention.v.rows(), a.attention.v.cols()}));
  std::vector<int> ks(static_cast<std::size_t>(t_max));
  std::iota(ks.begin(), ks.end(), 1);
  const int topic_k = t_max >= 2 ? topics::select_topic_count(a.attention.v, ks, std::max(cfg.topic_restarts, 2),
                                                              cfg.topic_iters, cfg.seed)
                                       .k
                                 : 1;
  a.topics = topics::nmf(a.attention.v, topic_k, cfg.topic_iters, cfg.seed);
  return a;
}

ServiceConfig with_environment(ServiceConfig cfg) {
  if (const char* dir = std::getenv(kDataDirEnv); dir != nullptr && *dir != '\0') cfg.data_dir = dir;
  return cfg;
}

SessionManager::SessionManager(ServiceConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.dim < 2) throw InvalidArgument("service dim must be at least 2");
}

SessionManager::~SessionManager() = default;

std::size_t SessionManager::session_count() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

std::shared_ptr<Session> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw HttpError(404, "unknown session '" + id + "'");
  return it->second;
}

std::shared_ptr<Session> SessionManager::add(std::shared_ptr<Session> session) {
  std::lock_guard lock(mu_);
  if (session->id.empty()) session->id = "s" + std::to_string(next_id_++);
  sessions_[session->id] = session;
  return session;
}

namespace {

// Recomputes the composite result and derived views; caller holds write_mu.
std::shared_ptr<const Snapshot> rebuild(const Session& s, const PipelineConfig& base) {
  auto snap = std::make_shared<Snapshot>();
  snap->version = s.version;
  snap->omega_s = s.omega_s;
  snap->omega_r = s.omega_r;
  if (s.prompts.empty()) return snap;
  std::vector<pam::PromptResult> results;
  for (const auto& p : s.prompts) {
    snap->prompt_texts.push_back(p.text);
    snap->weights.push_back(p.weight);
    results.push_back(p.result);
  }
  auto cfg = base;
  cfg.map.omega_s = s.omega_s;
  cfg.map.omega_r = s.omega_r;
  cfg.map.validate();
  snap->analysis = std::make_shared<Analysis>(analyze(*s.store, pam::compose_results(results, snap->weights), cfg));
  return snap;
}

void check_weights(const std::vector<double>& w) {
  double sum = 0.0;
  for (double x : w) {
    if (!std::isfinite(x) || x < 0.0) throw InvalidArgument("prompt weights must be non-negative");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    std::ostringstream msg;
    msg << "prompt weights must sum to 1 (got " << sum << ")";
    throw InvalidArgument(msg.str());
  }
}

}  // namespace

Response SessionManager::create_session(const json& body) {
  if (!body.is_object()) throw InvalidArgument("request body must be a JSON object");
  auto s = std::make_shared<Session>();
  const long dim = static_cast<long>(number_field(body, "dim", static_cast<double>(cfg_.dim)));
  const auto seed = body.contains("seed") ? body["seed"].get<std::uint64_t>() : cfg_.seed;
  s->embed_seed = seed;

  if (body.contains("csv")) {
    if (!body["csv"].is_string()) throw InvalidArgument("'csv' must be a string");
    const auto records = corpus::parse_corpus_csv(body["csv"].get<std::string>());
    if (records.empty()) throw FormatError("corpus has no rows");
    s->store = std::make_shared<EmbeddingStore>(corpus::embed_corpus(records, dim, seed));
  } else if (body.contains("store")) {
    const auto path = resolve(cfg_, body["store"].get<std::string>());
    s->store = std::make_shared<EmbeddingStore>(path.extension() == ".jsonl" ? load_store_jsonl(path) : load_store(path));
    if (s->store->empty()) throw FormatError("store has no documents");
  } else {
    throw InvalidArgument("body needs 'csv' or 'store'");
  }

  if (body.contains("checkpoint")) {
    auto layer = pam::load_layer(resolve(cfg_, body["checkpoint"].get<std::string>()));
    if (layer.dim() != s->store->dim())
      throw DimensionMismatch("checkpoint dim differs from corpus dim", s->store->dim(), layer.dim());
    s->layer = std::make_shared<pam::AttentionLayer>(std::move(layer));
  } else {
    s->layer = std::make_shared<pam::AttentionLayer>(pam::AttentionLayer::identity(s->store->dim()));
  }
  s->omega_s = number_field(body, "omega_s", cfg_.pipeline.map.omega_s);
  s->omega_r = number_field(body, "omega_r", cfg_.pipeline.map.omega_r);
  relmap::MapConfig check = cfg_.pipeline.map;
  check.omega_s = s->omega_s;
  check.omega_r = s->omega_r;
  check.validate();
  s->publish(rebuild(*s, cfg_.pipeline));

  add(s);
  persist(*s);
  return {201, {{"session", s->id}, {"version", s->version}, {"n_docs", s->store->size()}, {"dim", s->store->dim()}}};
}

Response SessionManager::submit_prompt(const std::string& id, const json& body) {
  auto s = find(id);
  if (!body.is_object() || !body.contains("text") || !body["text"].is_string())
    throw InvalidArgument("body needs a 'text' string");
  const auto text = body["text"].get<std::string>();
  std::lock_guard lock(s->write_mu);
  const std::size_t n = s->prompts.size();
  const double w = number_field(body, "weight", n == 0 ? 1.0 : 1.0 / static_cast<double>(n + 1));
  if (n == 0 && std::abs(w - 1.0) > 1e-9) throw InvalidArgument("the first prompt must have weight 1");
  if (!(w > 0.0 && w <= 1.0)) throw InvalidArgument("prompt weight must lie in (0, 1]");

  PromptState p;
  p.text = text;
  p.weight = w;
  p.result = pam::score_corpus(*s->layer, toy_embed_prompt(text, s->store->dim(), s->embed_seed), *s->store);
  auto prompts = s->prompts;
  for (auto& q : prompts) q.weight *= 1.0 - w;
  prompts.push_back(std::move(p));
  std::vector<double> weights;
  for (const auto& q : prompts) weights.push_back(q.weight);
  check_weights(weights);

  s->prompts = std::move(prompts);
  ++s->version;
  auto snap = rebuild(*s, cfg_.pipeline);
  s->publish(snap);
  persist(*s);
  return {200, state_json(*s, *snap, cfg_.pipeline.topic_threshold)};
}

Response SessionManager::update_weights(const std::string& id, const json& body) {
  auto s = find(id);
  if (!body.is_object()) throw InvalidArgument("request body must be a JSON object");
  std::lock_guard lock(s->write_mu);
  if (s->prompts.empty()) throw HttpError(409, "no prompt submitted");
  std::vector<double> weights;
  for (const auto& p : s->prompts) weights.push_back(p.weight);
  if (body.contains("weights")) {
    if (!body["weights"].is_array()) throw InvalidArgument("'weights' must be an array");
    weights = body["weights"].get<std::vector<double>>();
    if (weights.size() != s->prompts.size())
      throw InvalidArgument("expected " + std::to_string(s->prompts.size()) + " weights, got " +
                            std::to_string(weights.size()));
  }
  check_weights(weights);
  const double omega_s = number_field(body, "omega_s", s->omega_s);
  const double omega_r = number_field(body, "omega_r", s->omega_r);
  relmap::MapConfig check = cfg_.pipeline.map;
  check.omega_s = omega_s;
  check.omega_r = omega_r;
  check.validate();

  for (std::size_t i = 0; i < weights.size(); ++i) s->prompts[i].weight = weights[i];
  s->omega_s = omega_s;
  s->omega_r = omega_r;
  ++s->version;
  auto snap = rebuild(*s, cfg_.pipeline);
  s->publish(snap);
  persist(*s);
  return {200, state_json(*s, *snap, cfg_.pipeline.topic_threshold)};
}

Response SessionManager::get_map(const std::string& id) const {
  auto s = find(id);
  auto snap = s->current();
  if (!snap->analysis) throw HttpError(409, "no prompt submitted");
  return {200, map_json(*s, *snap)};
}

Response SessionManager::get_topics(const std::string& id) const {
  auto s = find(id);
  auto snap = s->current();
  if (!snap->analysis) throw HttpError(409, "no prompt submitted");
  return {200, topics_payload(*s, *snap, cfg_.pipeline.topic_threshold)};
}

Response SessionManager::get_doc(const std::string& id, const std::string& doc_id) const {
  auto s = find(id);
  const long d = s->store->find(doc_id);
  if (d < 0) throw HttpError(404, "unknown document '" + doc_id + "'");
  auto snap = s->current();
  if (!snap->analysis) throw HttpError(409, "no prompt submitted");
  const auto& doc = (*s->store)[static_cast<std::size_t>(d)];
  const auto& score = snap->analysis->composite.documents[static_cast<std::size_t>(d)];
  const double top = score.weights.size() > 0 ? score.weights.maxCoeff() : 0.0;
  json tokens = json::array();
  for (std::size_t t = 0; t < doc.size(); ++t) {
    const auto i = static_cast<Eigen::Index>(t);
    tokens.push_back({{"t", doc.tokens[t]},
                      {"w", top > 0.0 ? score.weights[i] / top : 0.0},
                      {"attention", score.token_attention[i]}});
  }
  return {200,
          {{"session", s->id},
           {"version", snap->version},
           {"doc_id", doc.doc_id},
           {"title", doc.title},
           {"text", doc.text},
           {"relevance", score.relevance},
           {"tokens", std::move(tokens)}}};
}

Response SessionManager::lasso(const std::string& id, const json& body) {
  auto parent = find(id);
  if (!body.is_object() || !body.contains("doc_ids") || !body["doc_ids"].is_array())
    throw InvalidArgument("body needs a 'doc_ids' array");
  const auto ids = body["doc_ids"].get<std::vector<std::string>>();
  if (ids.empty()) throw InvalidArgument("empty selection");
  std::vector<std::string> unknown;
  std::set<std::string> seen;
  for (const auto& d : ids) {
    if (parent->store->find(d) < 0) unknown.push_back(d);
    if (!seen.insert(d).second) throw InvalidArgument("duplicate doc id '" + d + "' in selection");
  }
  if (!unknown.empty()) {
    std::string msg = "unknown doc ids:";
    for (const auto& u : unknown) msg += " " + u;
    throw HttpError(404, msg);
  }

  auto child = std::make_shared<Session>();
  child->parent = parent->id;
  child->store = std::make_shared<EmbeddingStore>(parent->store->subset(ids));
  child->layer = parent->layer;
  child->embed_seed = parent->embed_seed;
  {
    std::lock_guard lock(parent->write_mu);
    child->omega_s = parent->omega_s;
    child->omega_r = parent->omega_r;
    for (const auto& p : parent->prompts) {
      PromptState q;
      q.text = p.text;
      q.weight = p.weight;
      child->prompts.push_back(std::move(q));
    }
  }
  for (auto& q : child->prompts)
    q.result = pam::score_corpus(*child->layer, toy_embed_prompt(q.text, child->store->dim(), child->embed_seed),
                                 *child->store);
  if (!child->prompts.empty()) child->version = 1;
  if (child->store->size() >= 2 || child->prompts.empty()) {
    child->publish(rebuild(*child, cfg_.pipeline));
  } else {
    // A single document cannot be mapped; the child keeps its prompts but no view.
    auto snap = std::make_shared<Snapshot>();
    snap->version = child->version;
    child->publish(snap);
  }
  add(child);
  persist(*child);
  return {201,
          {{"session", child->id},
           {"parent", parent->id},
           {"version", child->version},
           {"n_docs", child->store->size()}}};
}

void SessionManager::persist(const Session& s) const {
  if (!cfg_.data_dir) return;
  const auto dir = *cfg_.data_dir / "sessions";
  std::filesystem::create_directories(dir);
  const auto store_file = dir / (s.id + ".dmeb");
  const auto layer_file = dir / (s.id + ".dmal");
  if (!std::filesystem::exists(store_file)) save_store(*s.store, store_file);
  if (!std::filesystem::exists(layer_file)) pam::save_layer(*s.layer, layer_file);
  json prompts = json::array();
  for (const auto& p : s.prompts) prompts.push_back({{"text", p.text}, {"weight", p.weight}});
  const json doc{{"id", s.id},           {"parent", s.parent},   {"version", s.version},
                 {"omega_s", s.omega_s}, {"omega_r", s.omega_r}, {"embed_seed", s.embed_seed},
                 {"prompts", std::move(prompts)}};
  const auto tmp = dir / (s.id + ".json.tmp");
  {
    std::ofstream out(tmp);
    out << doc.dump(2) << '\n';
    if (!out) throw Error("cannot write session snapshot " + tmp.string());
  }
  std::filesystem::rename(tmp, dir / (s.id + ".json"));
}

std::size_t SessionManager::load_sessions() {
  if (!cfg_.data_dir) return 0;
  const auto dir = *cfg_.data_dir / "sessions";
  if (!std::filesystem::is_directory(dir)) return 0;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::size_t loaded = 0;
  for (const auto& file : files) {
    std::ifstream in(file);
    const json doc = json::parse(in);
    auto s = std::make_shared<Session>();
    s->id = doc.at("id").get<std::string>();
    s->parent = doc.value("parent", "");
    s->version = doc.at("version").get<std::uint64_t>();
    s->omega_s = doc.at("omega_s").get<double>();
    s->omega_r = doc.at("omega_r").get<double>();
    s->embed_seed = doc.at("embed_seed").get<std::uint64_t>();
    s->store = std::make_shared<EmbeddingStore>(load_store(dir / (s->id + ".dmeb")));
    s->layer = std::make_shared<pam::AttentionLayer>(pam::load_layer(dir / (s->id + ".dmal")));
    for (const auto& p : doc.at("prompts")) {
      PromptState q;
      q.text = p.at("text").get<std::string>();
      q.weight = p.at("weight").get<double>();
      q.result = pam::score_corpus(*s->layer, toy_embed_prompt(q.text, s->store->dim(), s->embed_seed), *s->store);
      s->prompts.push_back(std::move(q));
    }
    if (s->store->size() >= 2 || s->prompts.empty()) {
      s->publish(rebuild(*s, cfg_.pipeline));
    } else {
      auto snap = std::make_shared<Snapshot>();
      snap->version = s->version;
      s->publish(snap);
    }
    std::lock_guard lock(mu_);
    sessions_[s->id] = s;
    if (s->id.size() > 1 && s->id[0] == 's') {
      const auto n = std::strtoull(s->id.c_str() + 1, nullptr, 10);
      next_id_ = std::max<std::uint64_t>(next_id_, n + 1);
    }
    ++loaded;
  }
  return loaded;
}

Response SessionManager::handle(const std::string& method, const std::string& path, const std::string& body) {
  try {
    const auto parts = split_path(path);
    auto parse_body = [&]() -> json {
      if (body.empty()) return json::object();
      return json::parse(body);
    };
    auto wrong_method = [&]() { return error_response(405, "method " + method + " not allowed on " + path); };

    if (parts.empty() || parts[0] != "sessions") return error_response(404, "no route for " + path);
    if (parts.size() == 1) {
      if (method != "POST") return wrong_method();
      return create_session(parse_body());
    }
    const auto& id = parts[1];
    if (parts.size() == 3) {
      const auto& what = parts[2];
      if (what == "prompts") return method == "POST" ? submit_prompt(id, parse_body()) : wrong_method();
      if (what == "weights") return method == "PATCH" ? update_weights(id, parse_body()) : wrong_method();
      if (what == "map") return method == "GET" ? get_map(id) : wrong_method();
      if (what == "topics") return method == "GET" ? get_topics(id) : wrong_method();
      if (what == "lasso") return method == "POST" ? lasso(id, parse_body()) : wrong_method();
    }
    if (parts.size() == 4 && parts[2] == "docs") return method == "GET" ? get_doc(id, parts[3]) : wrong_method();
    return error_response(404, "no route for " + path);
  } catch (const HttpError& e) {
    return error_response(e.status, e.what());
  } catch (const json::exception& e) {
    return error_response(400, std::string("bad JSON: ") + e.what());
  } catch (const NotFound& e) {
    return error_response(404, e.what());
  } catch (const Error& e) {
    return error_response(400, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return error_response(400, e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

}  // namespace docmap::service
