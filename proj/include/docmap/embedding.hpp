#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "docmap/linalg.hpp"

namespace docmap {

struct TokenEmbedding {
  std::string token;
  Vector vector;
};

// One document's frozen encoder output: an ordered token list and a
// tokens x dim matrix holding one embedding per row.
struct DocumentEmbeddings {
  std::string doc_id;
  std::string title;
  std::string text;
  std::vector<std::string> tokens;
  RowMatrix vectors;

  std::size_t size() const { return tokens.size(); }
  long dim() const { return vectors.cols(); }
  TokenEmbedding token(std::size_t i) const {
    return {tokens[i], vectors.row(static_cast<Eigen::Index>(i)).transpose()};
  }
  // Sum of all token vectors; the fast path for relevance scoring.
  Vector token_sum() const { return vectors.colwise().sum().transpose(); }
};

struct PromptEmbedding {
  std::string text;
  Vector vector;
};

// Token embeddings for a corpus. Vectors are held at 64-bit but rounded to
// 32-bit precision on insertion, which is what the on-disk container stores,
// so a save/load round-trip reproduces them exactly.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  explicit EmbeddingStore(long dim);

  long dim() const { return dim_; }
  std::size_t size() const { return documents_.size(); }
  bool empty() const { return documents_.empty(); }

  const std::vector<DocumentEmbeddings>& documents() const { return documents_; }
  const DocumentEmbeddings& operator[](std::size_t i) const { return documents_[i]; }

  // Throws DimensionMismatch, InvalidArgument (empty token list, duplicate id,
  // non-finite component).
  void add(DocumentEmbeddings doc);

  // Index of doc_id, or -1.
  long find(std::string_view doc_id) const;
  const DocumentEmbeddings& at(std::string_view doc_id) const;

  // New store holding the given documents in the given order.
  EmbeddingStore subset(const std::vector<std::string>& doc_ids) const;

 private:
  long dim_ = 0;
  std::vector<DocumentEmbeddings> documents_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Whitespace split plus ASCII lowercase.
std::vector<std::string> tokenize(std::string_view text);

// Seeded hash projection of one token string onto the unit sphere.
Vector toy_token_vector(std::string_view token, long dim, std::uint64_t seed);

DocumentEmbeddings toy_embed_document(std::string_view text, long dim, std::uint64_t seed,
                                      std::string doc_id = {}, std::string title = {});
PromptEmbedding toy_embed_prompt(std::string_view text, long dim, std::uint64_t seed);

// Binary container; see README for the byte layout.
void save_store(const EmbeddingStore& store, const std::filesystem::path& path);
EmbeddingStore load_store(const std::filesystem::path& path);

// JSON-lines interop: one {id, title, text, tokens:[{t, v:[...]}]} per line,
// optionally preceded by a {"dim": N} header line.
EmbeddingStore load_store_jsonl(const std::filesystem::path& path);
void save_store_jsonl(const EmbeddingStore& store, const std::filesystem::path& path);

}  // namespace docmap
