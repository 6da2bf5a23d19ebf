#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "docmap/embedding.hpp"
#include "docmap/pam.hpp"
#include "docmap/relmap.hpp"

namespace docmap::corpus {

struct CorpusRecord {
  std::string id;
  std::string title;
  std::string text;
  std::string source;
  std::map<std::string, std::string> labels;  // any further columns
};

struct ColumnMap {
  std::string id = "id";
  std::string title = "title";
  std::string text = "text";
  std::string source = "source";  // optional column
};

// RFC 4180 parsing: quoted fields, doubled quotes, embedded separators and
// line breaks. Returns rows of fields; CRLF and LF both end a record.
std::vector<std::vector<std::string>> parse_csv(const std::string& content);
std::string csv_escape(const std::string& field);

// Header-driven load. Throws FormatError (empty file, missing column, ragged
// row) or InvalidArgument (duplicate id, empty text).
std::vector<CorpusRecord> load_corpus_csv(const std::filesystem::path& path, const ColumnMap& columns = {});
std::vector<CorpusRecord> parse_corpus_csv(const std::string& content, const ColumnMap& columns = {});
std::string corpus_to_csv(const std::vector<CorpusRecord>& records);

// Embeds each record's text with the toy embedder.
EmbeddingStore embed_corpus(const std::vector<CorpusRecord>& records, long dim, std::uint64_t seed);

struct QATriplet {
  std::string question;
  std::string answer;
  std::string context;
};

// JSON-lines {question, answer, context}.
std::vector<QATriplet> load_qa_jsonl(const std::filesystem::path& path);

struct ContrastiveTrainingSet {
  std::vector<CorpusRecord> contexts;  // deduplicated, ids "ctx-<n>"
  std::vector<pam::TrainingTriplet> triplets;
  int n = 16;
};

// question -> prompt, context -> positive. Negatives are drawn at training
// time from the other contexts, so at least n distinct contexts are needed.
ContrastiveTrainingSet triplets_to_training(const std::vector<QATriplet>& triplets, int n = 16);

// Indices of whitespace tokens of `context` whose character span overlaps the
// first occurrence of `answer`. Throws if the answer is not a substring.
std::vector<std::size_t> answer_token_indices(const std::string& context, const std::string& answer);

struct DigitsDataset {
  std::vector<relmap::MapItem> items;  // 64 features in [0, 1], relevance 1 / (digit + 1)
  std::vector<int> labels;
};

// 64 pixel columns (0..16) plus a label column; an optional header row is skipped.
DigitsDataset load_digits_csv(const std::filesystem::path& path);
DigitsDataset parse_digits_csv(const std::string& content);

// Planted-structure corpus built from the toy embedder.
//
// Each label system s has groups with their own signature tokens; every
// document draws signature tokens from its group in every system, a unique
// entity token, shared background vocabulary and a variable amount of
// high-frequency filler. Questions name the document's entity between random
// filler words.
struct SynthSpec {
  int n_docs = 200;
  long dim = 64;
  std::vector<int> groups = {4};  // group count per label system
  int signature_vocab = 6;        // signature tokens per group
  int signature_per_doc = 3;      // signature draws per document per system
  int background_vocab = 400;
  int background_per_doc = 10;
  int filler_vocab = 16;
  int filler_min = 10;
  int filler_max = 60;
  int entity_repeats = 2;
  int questions_per_doc = 3;
  int question_filler = 4;
};

struct SynthCorpus {
  EmbeddingStore store;
  std::vector<CorpusRecord> records;
  std::vector<std::vector<int>> labels;                    // [system][doc]
  std::vector<std::string> system_names;                   // [system]
  std::vector<std::vector<std::string>> group_prompts;     // [system][group]
  std::vector<std::string> system_prompts;                 // [system]
  std::vector<std::vector<std::vector<std::string>>> signature_tokens;  // [system][group]
  std::vector<QATriplet> qa;                               // questions_per_doc per doc, doc-major
  std::vector<pam::TrainingTriplet> triplets;              // parallel to qa
  std::vector<std::string> entity;                         // [doc]
  std::uint64_t embed_seed = 0;                            // toy embedder seed for prompts
};

SynthCorpus synth_corpus(const SynthSpec& spec, std::uint64_t seed);

}  // namespace docmap::corpus
