#include "docmap/pam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

#include "binary_io.hpp"
#include "docmap/error.hpp"
#include "docmap/rng.hpp"

namespace docmap::pam {

namespace {

constexpr char kLayerMagic[4] = {'D', 'M', 'A', 'L'};

void check_prompt(const AttentionLayer& layer, const Vector& prompt) {
  if (prompt.size() != layer.dim()) throw DimensionMismatch("prompt", layer.dim(), prompt.size());
}

void check_doc(const AttentionLayer& layer, const DocumentEmbeddings& doc) {
  if (doc.dim() != layer.dim())
    throw DimensionMismatch("document '" + doc.doc_id + "'", layer.dim(), doc.dim());
}

Vector batch_relevances(const AttentionLayer& layer, const Vector& prompt,
                        std::span<const Vector* const> token_sums) {
  const Vector q = layer.w_q * prompt;
  Vector r(static_cast<Eigen::Index>(token_sums.size()));
  for (std::size_t i = 0; i < token_sums.size(); ++i)
    r[static_cast<Eigen::Index>(i)] = q.dot(layer.w_k * *token_sums[i]);
  return r;
}

std::vector<const Vector*> collect_sums(const ContrastiveBatch& batch, std::vector<Vector>& storage) {
  storage.clear();
  storage.reserve(batch.negatives.size() + 1);
  storage.push_back(batch.positive->token_sum());
  for (const auto* neg : batch.negatives) storage.push_back(neg->token_sum());
  std::vector<const Vector*> ptrs;
  for (const auto& s : storage) ptrs.push_back(&s);
  return ptrs;
}

void check_batch_dims(const AttentionLayer& layer, const ContrastiveBatch& batch) {
  batch.validate();
  check_prompt(layer, batch.prompt.vector);
  check_doc(layer, *batch.positive);
  for (const auto* neg : batch.negatives) check_doc(layer, *neg);
}

}  // namespace

AttentionLayer AttentionLayer::identity(long dim) {
  if (dim <= 0) throw InvalidArgument("layer dim must be positive");
  return {Matrix::Identity(dim, dim), Matrix::Identity(dim, dim)};
}

AttentionLayer AttentionLayer::initialized(long dim, double init_scale, std::uint64_t seed) {
  auto layer = identity(dim);
  if (init_scale == 0.0) return layer;
  Rng rng(derive_seed(seed, 0x1a7e));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Matrix* m : {&layer.w_q, &layer.w_k})
    for (long j = 0; j < dim; ++j)
      for (long i = 0; i < dim; ++i) (*m)(i, j) += init_scale * normal(rng);
  return layer;
}

void AttentionLayer::validate() const {
  if (w_q.rows() <= 0 || w_q.rows() != w_q.cols() || w_k.rows() != w_k.cols() ||
      w_q.rows() != w_k.rows())
    throw DimensionMismatch("attention layer matrices must be square and equal-sized");
  if (!w_q.allFinite() || !w_k.allFinite())
    throw InvalidArgument("attention layer has non-finite entries");
}

Vector AttentionLayer::key_query(const Vector& prompt) const {
  return w_k.transpose() * (w_q * prompt);
}

double AttentionLayer::temperature() const { return std::sqrt(static_cast<double>(dim())); }

Vector attention(const AttentionLayer& layer, const PromptEmbedding& prompt,
                 const DocumentEmbeddings& doc) {
  check_prompt(layer, prompt.vector);
  check_doc(layer, doc);
  return doc.vectors * layer.key_query(prompt.vector);
}

double relevance(const AttentionLayer& layer, const PromptEmbedding& prompt,
                 const DocumentEmbeddings& doc) {
  return attention(layer, prompt, doc).sum();
}

double relevance_token_sum(const AttentionLayer& layer, const PromptEmbedding& prompt,
                           const Vector& token_sum) {
  check_prompt(layer, prompt.vector);
  if (token_sum.size() != layer.dim())
    throw DimensionMismatch("token sum", layer.dim(), token_sum.size());
  return (layer.w_q * prompt.vector).dot(layer.w_k * token_sum);
}

Vector dynamic_embedding(const AttentionLayer& layer, const PromptEmbedding& prompt,
                         const DocumentEmbeddings& doc) {
  const Vector attn = attention(layer, prompt, doc);
  return doc.vectors.transpose() * kernels::softmax(attn, layer.temperature());
}

PromptResult score_corpus(const AttentionLayer& layer, const PromptEmbedding& prompt,
                          const EmbeddingStore& store) {
  check_prompt(layer, prompt.vector);
  if (!store.empty() && store.dim() != layer.dim())
    throw DimensionMismatch("store", layer.dim(), store.dim());
  return {prompt, kernels::score_documents(store.documents(), layer.key_query(prompt.vector),
                                           layer.temperature())};
}

void ContrastiveBatch::validate() const {
  if (positive == nullptr) throw InvalidArgument("contrastive batch has no positive");
  if (negatives.empty()) throw InvalidArgument("contrastive batch has no negatives");
  for (const auto* neg : negatives) {
    if (neg == nullptr) throw InvalidArgument("null negative document");
    if (neg->doc_id == positive->doc_id)
      throw InvalidArgument("positive '" + positive->doc_id + "' also listed as negative");
  }
}

double contrastive_loss(const AttentionLayer& layer, const Vector& prompt,
                        std::span<const Vector* const> token_sums) {
  const Vector r = batch_relevances(layer, prompt, token_sums);
  // log(1 + sum_j exp(r_j - r_0)) over negatives; log1p keeps the small-loss
  // regime accurate where subtracting r_0 from a log-sum-exp would cancel.
  const Vector d = (r.tail(r.size() - 1).array() - r[0]).matrix();
  if (d.size() == 0) return 0.0;
  const double m = d.maxCoeff();
  if (m <= 0.0) return std::log1p(d.array().exp().sum());
  return m + std::log(std::exp(-m) + (d.array() - m).exp().sum());
}

LayerGradient loss_gradient(const AttentionLayer& layer, const Vector& prompt,
                            std::span<const Vector* const> token_sums) {
  const Vector r = batch_relevances(layer, prompt, token_sums);
  Vector alpha = (r.array() - r.maxCoeff()).exp().matrix();
  alpha /= alpha.sum();
  // dL/dr_d = alpha_d - [d is positive]; fold it into one weighted token sum.
  // The positive's coefficient alpha_0 - 1 is taken as minus the negatives'
  // share so it stays exact when alpha_0 is close to 1.
  Vector mix = Vector::Zero(layer.dim());
  double negative_share = 0.0;
  for (std::size_t i = 1; i < token_sums.size(); ++i) {
    const double c = alpha[static_cast<Eigen::Index>(i)];
    negative_share += c;
    mix += c * *token_sums[i];
  }
  mix -= negative_share * *token_sums[0];
  const Vector q = layer.w_q * prompt;
  return {(layer.w_k * mix) * prompt.transpose(), q * mix.transpose()};
}

double contrastive_loss(const AttentionLayer& layer, const ContrastiveBatch& batch) {
  check_batch_dims(layer, batch);
  std::vector<Vector> sums;
  const auto ptrs = collect_sums(batch, sums);
  return contrastive_loss(layer, batch.prompt.vector, ptrs);
}

LayerGradient loss_gradient(const AttentionLayer& layer, const ContrastiveBatch& batch) {
  check_batch_dims(layer, batch);
  std::vector<Vector> sums;
  const auto ptrs = collect_sums(batch, sums);
  return loss_gradient(layer, batch.prompt.vector, ptrs);
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
  if (epochs < 0) throw InvalidArgument("epochs must be non-negative");
  if (n < 2) throw InvalidArgument("batch size n must be >= 2");
  if (!(init_scale >= 0.0)) throw InvalidArgument("init_scale must be non-negative");
}

TrainResult train(const EmbeddingStore& store, const std::vector<TrainingTriplet>& triplets,
                  const TrainConfig& cfg, const PromptEmbedder& embed) {
  cfg.validate();
  return train(store, triplets, cfg, embed,
               AttentionLayer::initialized(store.dim(), cfg.init_scale, cfg.seed));
}

TrainResult train(const EmbeddingStore& store, const std::vector<TrainingTriplet>& triplets,
                  const TrainConfig& cfg, const PromptEmbedder& embed, AttentionLayer start) {
  cfg.validate();
  start.validate();
  if (start.dim() != store.dim()) throw DimensionMismatch("layer vs store", store.dim(), start.dim());
  if (store.size() < static_cast<std::size_t>(cfg.n))
    throw InvalidArgument("training needs at least n=" + std::to_string(cfg.n) +
                          " documents, store has " + std::to_string(store.size()));

  std::vector<std::size_t> positives;
  positives.reserve(triplets.size());
  std::unordered_map<std::string, Vector> prompts;
  for (const auto& t : triplets) {
    const long idx = store.find(t.positive_doc_id);
    if (idx < 0) throw NotFound("unknown positive doc_id '" + t.positive_doc_id + "'");
    positives.push_back(static_cast<std::size_t>(idx));
    if (!prompts.contains(t.prompt)) {
      auto p = embed(t.prompt);
      if (p.vector.size() != store.dim())
        throw DimensionMismatch("prompt embedding", store.dim(), p.vector.size());
      prompts.emplace(t.prompt, std::move(p.vector));
    }
  }

  std::vector<Vector> sums;
  sums.reserve(store.size());
  for (const auto& doc : store.documents()) sums.push_back(doc.token_sum());

  TrainResult result{std::move(start), {}};
  std::vector<std::size_t> order(triplets.size());
  std::vector<std::size_t> pool(store.size());
  std::vector<const Vector*> batch(static_cast<std::size_t>(cfg.n));
  const std::size_t n_neg = static_cast<std::size_t>(cfg.n) - 1;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch) + 1));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t step : order) {
      const std::size_t pos = positives[step];
      std::iota(pool.begin(), pool.end(), 0);
      std::swap(pool[pos], pool.back());
      // Partial Fisher-Yates over everything but the positive (now last).
      const std::size_t avail = pool.size() - 1;
      for (std::size_t i = 0; i < n_neg; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, avail - 1);
        std::swap(pool[i], pool[pick(rng)]);
      }
      batch[0] = &sums[pos];
      for (std::size_t i = 0; i < n_neg; ++i) batch[i + 1] = &sums[pool[i]];

      const Vector& prompt = prompts.at(triplets[step].prompt);
      total += contrastive_loss(result.layer, prompt, batch);
      const auto grad = loss_gradient(result.layer, prompt, batch);
      result.layer.w_q -= cfg.learning_rate * grad.d_w_q;
      result.layer.w_k -= cfg.learning_rate * grad.d_w_k;
    }
    result.loss_history.push_back(triplets.empty() ? 0.0 : total / static_cast<double>(triplets.size()));
  }
  return result;
}

void PromptWeighting::validate() const {
  if (prompts.empty()) throw InvalidArgument("prompt weighting is empty");
  if (prompts.size() != weights.size())
    throw InvalidArgument("prompt and weight counts differ");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw InvalidArgument("prompt weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw InvalidArgument("prompt weights sum to " + std::to_string(sum) + ", expected 1");
}

PromptResult compose_results(std::span<const PromptResult> results, std::span<const double> weights) {
  if (results.empty() || results.size() != weights.size())
    throw InvalidArgument("compose_results needs one weight per result");
  const std::size_t n_docs = results[0].documents.size();
  for (const auto& r : results)
    if (r.documents.size() != n_docs) throw InvalidArgument("prompt results cover different corpora");

  PromptResult out;
  out.prompt.vector = Vector::Zero(results[0].prompt.vector.size());
  for (std::size_t p = 0; p < results.size(); ++p) {
    if (p > 0) out.prompt.text += " + ";
    out.prompt.text += results[p].prompt.text;
    out.prompt.vector += weights[p] * results[p].prompt.vector;
  }
  out.documents.resize(n_docs);
  for (std::size_t d = 0; d < n_docs; ++d) {
    auto& dst = out.documents[d];
    const auto& first = results[0].documents[d];
    dst.token_attention = Vector::Zero(first.token_attention.size());
    dst.weights = Vector::Zero(first.weights.size());
    dst.embedding = Vector::Zero(first.embedding.size());
    for (std::size_t p = 0; p < results.size(); ++p) {
      const auto& src = results[p].documents[d];
      dst.token_attention += weights[p] * src.token_attention;
      dst.weights += weights[p] * src.weights;
      dst.embedding += weights[p] * src.embedding;
      dst.relevance += weights[p] * src.relevance;
    }
  }
  return out;
}

PromptResult compose_prompts(const AttentionLayer& layer, const PromptWeighting& weighting,
                             const EmbeddingStore& store) {
  weighting.validate();
  std::vector<PromptResult> results;
  results.reserve(weighting.prompts.size());
  for (const auto& p : weighting.prompts) results.push_back(score_corpus(layer, p, store));
  return compose_results(results, weighting.weights);
}

double rar(const AttentionLayer& layer, const PromptEmbedding& prompt, const DocumentEmbeddings& doc,
           std::span<const std::size_t> answer_tokens) {
  if (answer_tokens.empty()) throw InvalidArgument("rar: empty answer token set");
  for (auto i : answer_tokens)
    if (i >= doc.size()) throw InvalidArgument("rar: answer token index out of range");
  const Vector attn = attention(layer, prompt, doc);
  const Vector shifted = (attn.array() - attn.minCoeff()).max(0.0).matrix();
  const double total = shifted.sum();
  if (total <= 0.0) throw InvalidArgument("rar: total shifted attention is zero");
  std::vector<std::size_t> uniq(answer_tokens.begin(), answer_tokens.end());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  double on_answer = 0.0;
  for (auto i : uniq) on_answer += shifted[static_cast<Eigen::Index>(i)];
  return on_answer / total;
}

void save_layer(const AttentionLayer& layer, const std::filesystem::path& path) {
  layer.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(kLayerMagic, 4);
  detail::put_u32(out, static_cast<std::uint32_t>(layer.dim()));
  for (const Matrix* m : {&layer.w_q, &layer.w_k})
    for (long i = 0; i < layer.dim(); ++i)
      for (long j = 0; j < layer.dim(); ++j) detail::put_f64(out, (*m)(i, j));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

AttentionLayer load_layer(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  char magic[4];
  detail::read_exact(in, magic, 4);
  if (!std::equal(magic, magic + 4, kLayerMagic)) throw FormatError("bad layer checkpoint magic");
  const long dim = detail::get_u32(in);
  if (dim <= 0) throw FormatError("layer checkpoint declares dim 0");
  AttentionLayer layer{Matrix(dim, dim), Matrix(dim, dim)};
  for (Matrix* m : {&layer.w_q, &layer.w_k})
    for (long i = 0; i < dim; ++i)
      for (long j = 0; j < dim; ++j) (*m)(i, j) = detail::get_f64(in);
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint");
  layer.validate();
  return layer;
}

std::vector<TrainingTriplet> load_triplets(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::vector<TrainingTriplet> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      out.push_back({rec.at("prompt").get<std::string>(), rec.at("positive_doc_id").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void save_triplets(const std::vector<TrainingTriplet>& triplets, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  for (const auto& t : triplets)
    out << nlohmann::json{{"prompt", t.prompt}, {"positive_doc_id", t.positive_doc_id}}.dump() << '\n';
}

}  // namespace docmap::pam
