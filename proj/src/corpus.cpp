#include "docmap/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "docmap/error.hpp"
#include "docmap/rng.hpp"

namespace docmap::corpus {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool blank_row(const std::vector<std::string>& row) {
  return row.empty() || (row.size() == 1 && row[0].empty());
}

std::string strip_bom(const std::string& s) {
  if (s.size() >= 3 && static_cast<unsigned char>(s[0]) == 0xef && static_cast<unsigned char>(s[1]) == 0xbb &&
      static_cast<unsigned char>(s[2]) == 0xbf)
    return s.substr(3);
  return s;
}

bool parse_int(std::string_view s, int& out) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  // Accept "3" and "3.0" style integers, nothing fractional.
  double d = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), d);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return false;
  if (d != static_cast<double>(static_cast<long long>(d))) return false;
  out = static_cast<int>(d);
  return true;
}

constexpr std::array<const char*, 24> kFiller = {
    "the", "of", "and", "in", "to", "with", "a", "for", "on", "was", "were", "by",
    "is", "as", "at", "from", "that", "this", "are", "be", "an", "or", "we", "it"};
constexpr std::array<const char*, 6> kQuestionWords = {"what", "which", "how", "when", "where", "who"};
constexpr std::array<const char*, 6> kSystemNames = {"population", "treatment", "comparison",
                                                     "outcome", "design", "setting"};

}  // namespace

std::vector<std::vector<std::string>> parse_csv(const std::string& raw) {
  const std::string content = strip_bom(raw);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < content.size() && content[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      field_started = false;
      rows.push_back(std::move(row));
      row.clear();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (quoted) throw FormatError("unterminated quoted CSV field");
  if (field_started || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::vector<CorpusRecord> parse_corpus_csv(const std::string& content, const ColumnMap& columns) {
  auto rows = parse_csv(content);
  rows.erase(std::remove_if(rows.begin(), rows.end(), blank_row), rows.end());
  if (rows.empty()) throw FormatError("empty corpus CSV");
  const auto& header = rows.front();
  auto column = [&](const std::string& name) -> long {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<long>(i);
    return -1;
  };
  const long id_col = column(columns.id);
  const long title_col = column(columns.title);
  const long text_col = column(columns.text);
  const long source_col = column(columns.source);
  for (const auto& [name, idx] : {std::pair{columns.id, id_col}, {columns.title, title_col}, {columns.text, text_col}})
    if (idx < 0) throw FormatError("corpus CSV lacks column '" + name + "'");

  std::vector<CorpusRecord> out;
  std::unordered_set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size())
      throw FormatError("CSV row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                        " fields, header has " + std::to_string(header.size()));
    CorpusRecord rec;
    rec.id = row[static_cast<std::size_t>(id_col)];
    rec.title = row[static_cast<std::size_t>(title_col)];
    rec.text = row[static_cast<std::size_t>(text_col)];
    if (source_col >= 0) rec.source = row[static_cast<std::size_t>(source_col)];
    for (std::size_t c = 0; c < header.size(); ++c) {
      const auto ci = static_cast<long>(c);
      if (ci != id_col && ci != title_col && ci != text_col && ci != source_col) rec.labels[header[c]] = row[c];
    }
    if (!seen.insert(rec.id).second) throw InvalidArgument("duplicate corpus id '" + rec.id + "'");
    if (tokenize(rec.text).empty()) throw InvalidArgument("corpus record '" + rec.id + "' has empty text");
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<CorpusRecord> load_corpus_csv(const std::filesystem::path& path, const ColumnMap& columns) {
  return parse_corpus_csv(read_file(path), columns);
}

std::string corpus_to_csv(const std::vector<CorpusRecord>& records) {
  std::vector<std::string> extra;
  for (const auto& r : records)
    for (const auto& [k, v] : r.labels)
      if (std::find(extra.begin(), extra.end(), k) == extra.end()) extra.push_back(k);
  std::string out = "id,title,text,source";
  for (const auto& k : extra) out += "," + csv_escape(k);
  out += "\n";
  for (const auto& r : records) {
    out += csv_escape(r.id) + "," + csv_escape(r.title) + "," + csv_escape(r.text) + "," + csv_escape(r.source);
    for (const auto& k : extra) {
      auto it = r.labels.find(k);
      out += "," + csv_escape(it == r.labels.end() ? std::string() : it->second);
    }
    out += "\n";
  }
  return out;
}

EmbeddingStore embed_corpus(const std::vector<CorpusRecord>& records, long dim, std::uint64_t seed) {
  EmbeddingStore store(dim);
  for (const auto& r : records) store.add(toy_embed_document(r.text, dim, seed, r.id, r.title));
  return store;
}

std::vector<QATriplet> load_qa_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::vector<QATriplet> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      QATriplet t{rec.at("question").get<std::string>(), rec.at("answer").get<std::string>(),
                  rec.at("context").get<std::string>()};
      if (t.context.find(t.answer) == std::string::npos)
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": answer not found in context");
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

ContrastiveTrainingSet triplets_to_training(const std::vector<QATriplet>& triplets, int n) {
  if (n < 2) throw InvalidArgument("batch size n must be >= 2");
  ContrastiveTrainingSet out;
  out.n = n;
  std::unordered_map<std::string, std::string> context_ids;
  for (const auto& t : triplets) {
    auto it = context_ids.find(t.context);
    if (it == context_ids.end()) {
      const std::string id = "ctx-" + std::to_string(out.contexts.size());
      it = context_ids.emplace(t.context, id).first;
      out.contexts.push_back({id, "", t.context, "", {}});
    }
    out.triplets.push_back({t.question, it->second});
  }
  if (out.contexts.size() < static_cast<std::size_t>(n))
    throw InvalidArgument("need at least n=" + std::to_string(n) + " distinct contexts for negatives, got " +
                          std::to_string(out.contexts.size()));
  return out;
}

std::vector<std::size_t> answer_token_indices(const std::string& context, const std::string& answer) {
  if (answer.empty()) throw InvalidArgument("empty answer");
  const auto start = context.find(answer);
  if (start == std::string::npos) throw InvalidArgument("answer is not a substring of the context");
  const auto end = start + answer.size();
  std::vector<std::size_t> out;
  std::size_t token = 0;
  for (std::size_t i = 0; i < context.size();) {
    if (std::isspace(static_cast<unsigned char>(context[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < context.size() && !std::isspace(static_cast<unsigned char>(context[j]))) ++j;
    if (i < end && j > start) out.push_back(token);
    ++token;
    i = j;
  }
  return out;
}

DigitsDataset parse_digits_csv(const std::string& content) {
  auto rows = parse_csv(content);
  rows.erase(std::remove_if(rows.begin(), rows.end(), blank_row), rows.end());
  DigitsDataset out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != 65)
      throw FormatError("digits row " + std::to_string(r + 1) + ": expected 65 columns, got " +
                        std::to_string(row.size()));
    int label = 0;
    if (!parse_int(row[64], label)) {
      if (r == 0) continue;  // header
      throw FormatError("digits row " + std::to_string(r + 1) + ": non-integer label '" + row[64] + "'");
    }
    if (label < 0 || label > 9) throw FormatError("digits row " + std::to_string(r + 1) + ": label out of range");
    relmap::MapItem item;
    item.id = std::to_string(out.items.size());
    item.embedding.resize(64);
    for (int c = 0; c < 64; ++c) {
      int px = 0;
      if (!parse_int(row[static_cast<std::size_t>(c)], px))
        throw FormatError("digits row " + std::to_string(r + 1) + ": bad pixel value");
      item.embedding[c] = px / 16.0;
    }
    item.relevance = 1.0 / (label + 1.0);
    out.items.push_back(std::move(item));
    out.labels.push_back(label);
  }
  return out;
}

DigitsDataset load_digits_csv(const std::filesystem::path& path) { return parse_digits_csv(read_file(path)); }

SynthCorpus synth_corpus(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.n_docs < 1) throw InvalidArgument("synth_corpus: n_docs must be positive");
  if (spec.groups.empty() || spec.groups.size() > kSystemNames.size())
    throw InvalidArgument("synth_corpus: between 1 and 6 label systems supported");
  for (int g : spec.groups)
    if (g < 1) throw InvalidArgument("synth_corpus: group counts must be positive");
  if (spec.filler_min < 0 || spec.filler_max < spec.filler_min || spec.filler_vocab < 1)
    throw InvalidArgument("synth_corpus: bad filler range");

  Rng rng(derive_seed(seed, 0x5717));
  SynthCorpus out;
  out.embed_seed = seed;

  std::vector<std::string> filler;
  for (int i = 0; i < spec.filler_vocab; ++i)
    filler.push_back(i < static_cast<int>(kFiller.size()) ? kFiller[static_cast<std::size_t>(i)]
                                                          : "w" + std::to_string(i));
  std::vector<std::string> background;
  for (int i = 0; i < spec.background_vocab; ++i) background.push_back("term" + std::to_string(i));

  const auto n = static_cast<std::size_t>(spec.n_docs);
  for (std::size_t s = 0; s < spec.groups.size(); ++s) {
    const std::string name = kSystemNames[s];
    out.system_names.push_back(name);
    const int g_count = spec.groups[s];
    std::vector<std::vector<std::string>> sigs(static_cast<std::size_t>(g_count));
    std::vector<std::string> prompts;
    std::string system_prompt = name;
    for (int g = 0; g < g_count; ++g) {
      for (int j = 0; j < spec.signature_vocab; ++j)
        sigs[static_cast<std::size_t>(g)].push_back(name + std::to_string(g) + "_" + std::to_string(j));
      const auto& sg = sigs[static_cast<std::size_t>(g)];
      prompts.push_back(name + " " + sg[0] + (sg.size() > 1 ? " " + sg[1] : std::string()));
      for (const auto& t : sg) system_prompt += " " + t;
    }
    out.signature_tokens.push_back(std::move(sigs));
    out.group_prompts.push_back(std::move(prompts));
    out.system_prompts.push_back(system_prompt);

    // Balanced labels, independently permuted per system.
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(g_count));
    out.labels.push_back(std::move(labels));
  }

  out.store = EmbeddingStore(spec.dim);
  std::uniform_int_distribution<int> filler_count(spec.filler_min, spec.filler_max);
  std::uniform_int_distribution<std::size_t> pick_filler(0, filler.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_bg(0, background.empty() ? 0 : background.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_sig(0, static_cast<std::size_t>(std::max(spec.signature_vocab, 1) - 1));
  std::uniform_int_distribution<std::size_t> pick_qword(0, kQuestionWords.size() - 1);

  char id_buf[32];
  for (std::size_t d = 0; d < n; ++d) {
    std::snprintf(id_buf, sizeof id_buf, "doc-%04zu", d);
    const std::string entity = "entity" + std::to_string(d);
    out.entity.push_back(entity);

    std::vector<std::string> tokens;
    for (std::size_t s = 0; s < spec.groups.size(); ++s) {
      const auto& sg = out.signature_tokens[s][static_cast<std::size_t>(out.labels[s][d])];
      for (int j = 0; j < spec.signature_per_doc && !sg.empty(); ++j) tokens.push_back(sg[pick_sig(rng)]);
    }
    for (int j = 0; j < spec.background_per_doc && !background.empty(); ++j) tokens.push_back(background[pick_bg(rng)]);
    const int fc = filler_count(rng);
    for (int j = 0; j < fc; ++j) tokens.push_back(filler[pick_filler(rng)]);
    for (int j = 0; j < spec.entity_repeats; ++j) tokens.push_back(entity);
    std::shuffle(tokens.begin(), tokens.end(), rng);

    std::string text;
    for (const auto& t : tokens) text += (text.empty() ? "" : " ") + t;
    CorpusRecord rec{id_buf, entity + " report", text, "synthetic", {}};
    for (std::size_t s = 0; s < spec.groups.size(); ++s) rec.labels[out.system_names[s]] = std::to_string(out.labels[s][d]);
    out.store.add(toy_embed_document(text, spec.dim, seed, rec.id, rec.title));

    for (int q = 0; q < spec.questions_per_doc; ++q) {
      std::vector<std::string> words;
      for (int j = 0; j < spec.question_filler; ++j) words.push_back(filler[pick_filler(rng)]);
      words.push_back(entity);
      std::shuffle(words.begin(), words.end(), rng);
      std::string question = kQuestionWords[pick_qword(rng)];
      for (const auto& w : words) question += " " + w;
      out.qa.push_back({question, entity, text});
      out.triplets.push_back({question, rec.id});
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace docmap::corpus
