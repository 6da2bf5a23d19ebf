#include "docmap/embedding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "binary_io.hpp"
#include "docmap/error.hpp"
#include "docmap/rng.hpp"

namespace docmap {

namespace {

constexpr char kStoreMagic[4] = {'D', 'M', 'E', 'B'};
constexpr std::uint32_t kStoreVersion = 1;

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Stateful splitmix64 stream.
class SplitMix {
 public:
  explicit SplitMix(std::uint64_t state) : state_(state) {}
  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  // Uniform in (0, 1].
  double uniform() { return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

void quantize_to_f32(RowMatrix& m) {
  m = m.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
}

void check_dim(long dim) {
  if (dim < 2) throw InvalidArgument("embedding dim must be >= 2, got " + std::to_string(dim));
}

}  // namespace

EmbeddingStore::EmbeddingStore(long dim) : dim_(dim) {
  if (dim <= 0) throw InvalidArgument("store dim must be positive");
}

void EmbeddingStore::add(DocumentEmbeddings doc) {
  if (dim_ <= 0) throw InvalidArgument("store has no dimension");
  if (doc.tokens.empty()) throw InvalidArgument("document '" + doc.doc_id + "' has no tokens");
  if (doc.vectors.rows() != static_cast<Eigen::Index>(doc.tokens.size()))
    throw InvalidArgument("document '" + doc.doc_id + "': token count and vector rows differ");
  if (doc.vectors.cols() != dim_)
    throw DimensionMismatch("document '" + doc.doc_id + "'", dim_, doc.vectors.cols());
  if (!doc.vectors.allFinite())
    throw InvalidArgument("document '" + doc.doc_id + "' has non-finite components");
  if (index_.contains(doc.doc_id)) throw InvalidArgument("duplicate doc_id '" + doc.doc_id + "'");
  quantize_to_f32(doc.vectors);
  index_.emplace(doc.doc_id, documents_.size());
  documents_.push_back(std::move(doc));
}

long EmbeddingStore::find(std::string_view doc_id) const {
  auto it = index_.find(std::string(doc_id));
  return it == index_.end() ? -1 : static_cast<long>(it->second);
}

const DocumentEmbeddings& EmbeddingStore::at(std::string_view doc_id) const {
  const long i = find(doc_id);
  if (i < 0) throw NotFound("unknown doc_id '" + std::string(doc_id) + "'");
  return documents_[static_cast<std::size_t>(i)];
}

EmbeddingStore EmbeddingStore::subset(const std::vector<std::string>& doc_ids) const {
  EmbeddingStore out(dim_);
  for (const auto& id : doc_ids) out.add(at(id));
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vector toy_token_vector(std::string_view token, long dim, std::uint64_t seed) {
  check_dim(dim);
  SplitMix gen(fnv1a64(token) ^ splitmix64(seed));
  Vector v(dim);
  // Box-Muller, two normals per pair of uniforms.
  for (long i = 0; i < dim; i += 2) {
    const double r = std::sqrt(-2.0 * std::log(gen.uniform()));
    const double theta = 2.0 * std::numbers::pi * gen.uniform();
    v[i] = r * std::cos(theta);
    if (i + 1 < dim) v[i + 1] = r * std::sin(theta);
  }
  const double norm = v.norm();
  if (norm == 0.0) {
    v.setZero();
    v[0] = 1.0;
    return v;
  }
  return v / norm;
}

DocumentEmbeddings toy_embed_document(std::string_view text, long dim, std::uint64_t seed,
                                      std::string doc_id, std::string title) {
  check_dim(dim);
  auto tokens = tokenize(text);
  if (tokens.empty()) throw InvalidArgument("empty text");
  DocumentEmbeddings doc;
  doc.doc_id = std::move(doc_id);
  doc.title = std::move(title);
  doc.text = std::string(text);
  doc.vectors.resize(static_cast<Eigen::Index>(tokens.size()), dim);
  std::unordered_map<std::string, Vector> cache;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto it = cache.find(tokens[i]);
    if (it == cache.end()) it = cache.emplace(tokens[i], toy_token_vector(tokens[i], dim, seed)).first;
    doc.vectors.row(static_cast<Eigen::Index>(i)) = it->second.transpose();
  }
  doc.tokens = std::move(tokens);
  return doc;
}

PromptEmbedding toy_embed_prompt(std::string_view text, long dim, std::uint64_t seed) {
  const auto doc = toy_embed_document(text, dim, seed);
  Vector mean = doc.vectors.colwise().mean().transpose();
  const double norm = mean.norm();
  // Mean of unit vectors vanishes only for exactly cancelling tokens.
  if (norm > 0.0) mean /= norm;
  return {std::string(text), std::move(mean)};
}

void save_store(const EmbeddingStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(kStoreMagic, 4);
  detail::put_u32(out, kStoreVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(store.dim()));
  detail::put_u64(out, store.size());
  for (const auto& doc : store.documents()) {
    detail::put_string(out, doc.doc_id);
    detail::put_string(out, doc.title);
    detail::put_string(out, doc.text);
    detail::put_u32(out, static_cast<std::uint32_t>(doc.size()));
    for (std::size_t t = 0; t < doc.size(); ++t) {
      detail::put_string(out, doc.tokens[t]);
      for (long c = 0; c < store.dim(); ++c)
        detail::put_f32(out, static_cast<float>(doc.vectors(static_cast<Eigen::Index>(t), c)));
    }
  }
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

EmbeddingStore load_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  char magic[4];
  detail::read_exact(in, magic, 4);
  if (!std::equal(magic, magic + 4, kStoreMagic)) throw FormatError("bad embedding store magic");
  const auto version = detail::get_u32(in);
  if (version != kStoreVersion)
    throw FormatError("unsupported embedding store version " + std::to_string(version));
  const long dim = detail::get_u32(in);
  const auto count = detail::get_u64(in);
  if (dim <= 0) throw FormatError("embedding store declares dim 0");
  EmbeddingStore store(dim);
  for (std::uint64_t d = 0; d < count; ++d) {
    DocumentEmbeddings doc;
    doc.doc_id = detail::get_string(in);
    doc.title = detail::get_string(in);
    doc.text = detail::get_string(in);
    const auto tokens = detail::get_u32(in);
    doc.tokens.reserve(tokens);
    doc.vectors.resize(tokens, dim);
    for (std::uint32_t t = 0; t < tokens; ++t) {
      doc.tokens.push_back(detail::get_string(in));
      for (long c = 0; c < dim; ++c) doc.vectors(t, c) = detail::get_f32(in);
    }
    store.add(std::move(doc));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after store");
  return store;
}

EmbeddingStore load_store_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  EmbeddingStore store;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(where + ": " + e.what());
    }
    try {
      if (rec.contains("dim") && !rec.contains("id")) {
        if (!store.empty()) throw FormatError(where + ": dim header after documents");
        store = EmbeddingStore(rec.at("dim").get<long>());
        continue;
      }
      DocumentEmbeddings doc;
      doc.doc_id = rec.at("id").get<std::string>();
      doc.title = rec.value("title", "");
      doc.text = rec.value("text", "");
      const auto& toks = rec.at("tokens");
      if (!toks.is_array() || toks.empty()) throw FormatError(where + ": empty token list");
      const long dim = static_cast<long>(toks[0].at("v").size());
      if (store.dim() == 0) store = EmbeddingStore(dim);
      doc.vectors.resize(static_cast<Eigen::Index>(toks.size()), store.dim());
      for (std::size_t t = 0; t < toks.size(); ++t) {
        const auto& v = toks[t].at("v");
        if (static_cast<long>(v.size()) != store.dim())
          throw DimensionMismatch(where + " token " + std::to_string(t), store.dim(),
                                  static_cast<long>(v.size()));
        doc.tokens.push_back(toks[t].at("t").get<std::string>());
        for (long c = 0; c < store.dim(); ++c)
          doc.vectors(static_cast<Eigen::Index>(t), c) = v[static_cast<std::size_t>(c)].get<double>();
      }
      store.add(std::move(doc));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  return store;
}

void save_store_jsonl(const EmbeddingStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << nlohmann::json{{"dim", store.dim()}}.dump() << '\n';
  for (const auto& doc : store.documents()) {
    nlohmann::json rec{{"id", doc.doc_id}, {"title", doc.title}, {"text", doc.text}};
    auto& toks = rec["tokens"] = nlohmann::json::array();
    for (std::size_t t = 0; t < doc.size(); ++t) {
      std::vector<float> v(static_cast<std::size_t>(store.dim()));
      for (long c = 0; c < store.dim(); ++c)
        v[static_cast<std::size_t>(c)] = static_cast<float>(doc.vectors(static_cast<Eigen::Index>(t), c));
      toks.push_back({{"t", doc.tokens[t]}, {"v", v}});
    }
    out << rec.dump() << '\n';
  }
}

}  // namespace docmap
