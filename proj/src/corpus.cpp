// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

#include "protodx/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "protodx/errors.hpp"
#include "protodx/hash.hpp"

namespace protodx {

using nlohmann::json;

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char raw : text) {
    const auto ch = static_cast<unsigned char>(raw);
    if (ch < 0x80 && std::isspace(ch)) {
      flush();
    } else if (ch < 0x80 && std::ispunct(ch)) {
      flush();
      out.emplace_back(1, raw);
    } else {
      current.push_back(ch < 0x80 ? static_cast<char>(std::tolower(ch)) : raw);
    }
  }
  flush();
  return out;
}

// ---------------------------------------------------------------- Vocabulary

Vocabulary::Vocabulary() : words_{"<pad>", "<unk>", "<mask>"} {
  for (TokenId i = 0; i < words_.size(); ++i) index_.emplace(words_[i], i);
}

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words) {
  Vocabulary v;
  for (const auto& w : words) {
    if (w.empty() || v.index_.contains(w)) {
      throw ValidationError("vocabulary: duplicate or empty word '" + w + "'");
    }
    v.index_.emplace(w, static_cast<TokenId>(v.words_.size()));
    v.words_.push_back(w);
  }
  return v;
}

TokenId Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end() || it->second < kFirstWordId) return kUnkId;
  return it->second;
}

bool Vocabulary::contains(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it != index_.end() && it->second >= kFirstWordId;
}

const std::string& Vocabulary::word(TokenId id) const {
  if (id >= words_.size()) throw ContractError("vocabulary: id out of range");
  return words_[id];
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& w : words_) {
    out += w;
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::parse(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    lines.emplace_back(text.substr(start, end - start));
    start = end + 1;
  }
  if (lines.size() < kFirstWordId || lines[kPadId] != "<pad>" || lines[kUnkId] != "<unk>" ||
      lines[kMaskId] != "<mask>") {
    throw LoadError("vocab: reserved entries missing");
  }
  return from_words({lines.begin() + kFirstWordId, lines.end()});
}

std::string Vocabulary::content_hash() const { return sha256_hex(serialize()); }

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << serialize();
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("vocab: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

// ------------------------------------------------------------------ Corpus

bool Document::has_label(LabelId c) const { return std::binary_search(labels.begin(), labels.end(), c); }

std::optional<LabelId> Corpus::label_id(std::string_view name) const {
  auto it = std::find(label_vocab.begin(), label_vocab.end(), name);
  if (it == label_vocab.end()) return std::nullopt;
  return static_cast<LabelId>(it - label_vocab.begin());
}

const Document* Corpus::find(std::string_view doc_id) const {
  for (const auto& d : documents) {
    if (d.id == doc_id) return &d;
  }
  return nullptr;
}

void Corpus::recount_labels() {
  label_train_freq.assign(label_vocab.size(), 0);
  for (const auto& d : documents) {
    for (LabelId c : d.labels) ++label_train_freq.at(c);
  }
}

std::vector<std::size_t> Corpus::positives(LabelId c) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < documents.size(); ++i) {
    if (documents[i].has_label(c)) out.push_back(i);
  }
  return out;
}

namespace {

struct RawRecord {
  std::string id, patient_id, text;
  std::vector<std::string> labels;
};

std::string required_string(const json& obj, const char* key, std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw ParseError("line " + std::to_string(line_no) + ": missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

}  // namespace

Corpus parse_corpus(std::istream& in, const LoadOptions& options) {
  std::vector<RawRecord> records;
  std::vector<std::size_t> line_numbers;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object()) throw ParseError("line " + std::to_string(line_no) + ": not a JSON object");
    RawRecord r;
    r.id = required_string(obj, "id", line_no);
    r.patient_id = required_string(obj, "patient_id", line_no);
    r.text = required_string(obj, "text", line_no);
    auto labels = obj.find("labels");
    if (labels == obj.end() || !labels->is_array()) {
      throw ParseError("line " + std::to_string(line_no) + ": missing array field 'labels'");
    }
    for (const auto& l : *labels) {
      if (!l.is_string()) throw ParseError("line " + std::to_string(line_no) + ": label is not a string");
      r.labels.push_back(l.get<std::string>());
    }
    records.push_back(std::move(r));
    line_numbers.push_back(line_no);
  }

  Corpus corpus;
  if (options.label_vocab != nullptr) {
    corpus.label_vocab = *options.label_vocab;
  } else {
    std::set<std::string> names;
    for (const auto& r : records) names.insert(r.labels.begin(), r.labels.end());
    corpus.label_vocab.assign(names.begin(), names.end());
  }
  std::unordered_map<std::string, LabelId> label_index;
  for (LabelId i = 0; i < corpus.label_vocab.size(); ++i) label_index.emplace(corpus.label_vocab[i], i);

  corpus.documents.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    Document d;
    d.id = std::move(r.id);
    d.patient_id = std::move(r.patient_id);
    d.text = std::move(r.text);
    d.words = tokenize(d.text);
    if (d.words.size() > options.max_len) d.words.resize(options.max_len);
    if (d.words.empty()) {
      throw ValidationError("line " + std::to_string(line_numbers[i]) + ": document '" + d.id +
                            "' has no tokens");
    }
    for (const auto& name : r.labels) {
      auto it = label_index.find(name);
      if (it == label_index.end()) {
        throw ValidationError("line " + std::to_string(line_numbers[i]) + ": unknown label '" + name + "'");
      }
      d.labels.push_back(it->second);
    }
    std::sort(d.labels.begin(), d.labels.end());
    d.labels.erase(std::unique(d.labels.begin(), d.labels.end()), d.labels.end());
    corpus.documents.push_back(std::move(d));
  }
  corpus.recount_labels();
  if (options.vocab != nullptr) apply_vocab(corpus, *options.vocab);
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open corpus " + path.string());
  return parse_corpus(in, options);
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& d : corpus.documents) {
    json labels = json::array();
    for (LabelId c : d.labels) labels.push_back(corpus.label_vocab.at(c));
    nlohmann::ordered_json obj;
    obj["id"] = d.id;
    obj["patient_id"] = d.patient_id;
    obj["text"] = d.text;
    obj["labels"] = labels;
    out << obj.dump() << '\n';
  }
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_corpus(out, corpus);
}

std::vector<std::string> load_label_vocab(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open label vocabulary " + path.string());
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    labels.push_back(line);
  }
  return labels;
}

void save_label_vocab(const std::vector<std::string>& labels, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& l : labels) out << l << '\n';
}

Vocabulary build_vocab(const Corpus& corpus, std::size_t min_freq) {
  std::map<std::string, std::size_t> freq;
  for (const auto& d : corpus.documents) {
    for (const auto& w : d.words) ++freq[w];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [w, n] : freq) {
    if (n >= min_freq) kept.emplace_back(w, n);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> words;
  words.reserve(kept.size());
  for (auto& [w, n] : kept) words.push_back(w);
  return Vocabulary::from_words(words);
}

void apply_vocab(Corpus& corpus, const Vocabulary& vocab) {
  const std::string hash = vocab.content_hash();
  for (auto& d : corpus.documents) {
    d.tokens.clear();
    d.tokens.reserve(d.words.size());
    for (const auto& w : d.words) d.tokens.push_back(vocab.id(w));
    d.vocab_hash = hash;
  }
}

// ------------------------------------------------------------------ TF-IDF

TfidfTable compute_tfidf(const Corpus& corpus, std::size_t vocab_size) {
  TfidfTable table;
  const std::size_t n_labels = corpus.n_labels();
  table.n_docs = corpus.size();
  table.df.assign(vocab_size, 0);
  table.has_row.assign(n_labels, false);
  table.scores = Matrix<double>(n_labels, vocab_size, 0.0);

  std::vector<std::size_t> seen(vocab_size, SIZE_MAX);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (TokenId t : corpus.documents[i].tokens) {
      if (t >= vocab_size) throw ContractError("compute_tfidf: token id outside vocabulary");
      if (seen[t] != i) {
        seen[t] = i;
        ++table.df[t];
      }
    }
  }

  Matrix<double> counts(n_labels, vocab_size, 0.0);
  std::vector<double> totals(n_labels, 0.0);
  for (const auto& d : corpus.documents) {
    for (LabelId c : d.labels) {
      auto row = counts.row(c);
      for (TokenId t : d.tokens) row[t] += 1.0;
      totals[c] += static_cast<double>(d.tokens.size());
    }
  }
  const double n_docs = static_cast<double>(table.n_docs);
  for (std::size_t c = 0; c < n_labels; ++c) {
    if (totals[c] == 0.0) continue;
    table.has_row[c] = true;
    for (std::size_t t = 0; t < vocab_size; ++t) {
      if (counts(c, t) == 0.0) continue;
      const double idf = std::log(n_docs / static_cast<double>(table.df[t]));
      table.scores(c, t) = counts(c, t) / totals[c] * idf;
    }
  }
  return table;
}

std::vector<TokenId> informative_tokens(LabelId c, const TfidfTable& tfidf, double h) {
  if (c >= tfidf.scores.rows()) throw ContractError("informative_tokens: label out of range");
  std::vector<TokenId> out;
  if (!tfidf.has_row[c]) return out;
  for (TokenId t = kFirstWordId; t < tfidf.scores.cols(); ++t) {
    if (tfidf.scores(c, t) > h) out.push_back(t);
  }
  return out;
}

// --------------------------------------------------------------- synthetic

namespace {

std::string padded(char prefix, std::size_t value, std::size_t width) {
  std::string digits = std::to_string(value);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return std::string(1, prefix) + digits;
}

void validate(const SyntheticSpec& s) {
  if (s.n_labels == 0 || s.n_docs == 0 || s.tokens_per_doc == 0 || s.indicative_tokens_per_label == 0 ||
      s.noise_vocab_size == 0) {
    throw ConfigError("synthetic spec: all counts must be positive");
  }
  if (!(s.zipf_exponent >= 0.0) || !(s.mean_labels_per_doc > 0.0)) {
    throw ConfigError("synthetic spec: zipf_exponent must be >= 0 and mean_labels_per_doc > 0");
  }
  if (!(s.indicative_rate >= 0.0 && s.indicative_rate <= 1.0) ||
      !(s.repeat_patient_rate >= 0.0 && s.repeat_patient_rate < 1.0)) {
    throw ConfigError("synthetic spec: rates out of range");
  }
  const std::size_t needed = s.n_labels * s.indicative_tokens_per_label;
  if (s.indicative_vocab_size != 0 && needed > s.indicative_vocab_size) {
    throw ConfigError("synthetic spec: n_labels * indicative_tokens_per_label (" + std::to_string(needed) +
                      ") exceeds indicative vocabulary (" + std::to_string(s.indicative_vocab_size) + ")");
  }
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);

  SyntheticCorpus out;
  auto& corpus = out.corpus;
  const std::size_t label_width = std::to_string(spec.n_labels - 1).size();
  for (std::size_t c = 0; c < spec.n_labels; ++c) corpus.label_vocab.push_back(padded('D', c, label_width));

  out.planted.resize(spec.n_labels);
  for (std::size_t c = 0; c < spec.n_labels; ++c) {
    for (std::size_t j = 0; j < spec.indicative_tokens_per_label; ++j) {
      out.planted[c].push_back("sym" + std::to_string(c * spec.indicative_tokens_per_label + j));
    }
  }

  std::vector<double> weights(spec.n_labels);
  for (std::size_t k = 0; k < spec.n_labels; ++k) {
    weights[k] = std::pow(static_cast<double>(k + 1), -spec.zipf_exponent);
  }

  std::poisson_distribution<int> label_count(spec.mean_labels_per_doc);
  std::uniform_int_distribution<std::size_t> pick_indicative(0, spec.indicative_tokens_per_label - 1);
  std::uniform_int_distribution<std::size_t> pick_noise(0, spec.noise_vocab_size - 1);
  std::bernoulli_distribution repeat_patient(spec.repeat_patient_rate);

  const std::size_t n_indicative =
      static_cast<std::size_t>(std::llround(spec.indicative_rate * static_cast<double>(spec.tokens_per_doc)));
  const std::size_t doc_width = std::to_string(spec.n_docs - 1).size();

  std::size_t patient = 0;
  bool patient_open = false;
  for (std::size_t i = 0; i < spec.n_docs; ++i) {
    Document d;
    d.id = padded('d', i, doc_width);
    if (!patient_open) {
      d.patient_id = padded('p', patient, doc_width);
      patient_open = repeat_patient(rng);
      if (!patient_open) ++patient;
    } else {
      d.patient_id = padded('p', patient, doc_width);
      patient_open = false;
      ++patient;
    }

    const std::size_t m =
        std::min<std::size_t>(spec.n_labels, static_cast<std::size_t>(std::max(1, label_count(rng))));
    std::vector<double> remaining = weights;
    std::vector<LabelId> chosen;
    for (std::size_t k = 0; k < m; ++k) {
      std::discrete_distribution<std::size_t> draw(remaining.begin(), remaining.end());
      const std::size_t c = draw(rng);
      chosen.push_back(static_cast<LabelId>(c));
      remaining[c] = 0.0;
    }

    std::vector<std::string> words;
    words.reserve(spec.tokens_per_doc);
    for (std::size_t p = 0; p < n_indicative; ++p) {
      const LabelId c = chosen[p % chosen.size()];
      words.push_back(out.planted[c][pick_indicative(rng)]);
    }
    while (words.size() < spec.tokens_per_doc) words.push_back("w" + std::to_string(pick_noise(rng)));
    std::shuffle(words.begin(), words.end(), rng);

    for (std::size_t p = 0; p < words.size(); ++p) {
      if (p) d.text += ' ';
      d.text += words[p];
    }
    d.words = std::move(words);
    d.labels = std::move(chosen);
    std::sort(d.labels.begin(), d.labels.end());
    corpus.documents.push_back(std::move(d));
  }
  corpus.recount_labels();
  return out;
}

// ------------------------------------------------------------------- split

CorpusSplit split(const Corpus& corpus, const SplitRatios& ratios, std::uint64_t seed) {
  const double sum = ratios.train + ratios.val + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9 || ratios.train < 0 || ratios.val < 0 || ratios.test < 0) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  std::set<std::string> patient_set;
  for (const auto& d : corpus.documents) patient_set.insert(d.patient_id);
  std::vector<std::string> patients(patient_set.begin(), patient_set.end());
  if (patients.size() < 3) {
    throw ConfigError("split: need at least 3 patients, got " + std::to_string(patients.size()));
  }
  std::mt19937_64 rng(seed);
  std::shuffle(patients.begin(), patients.end(), rng);

  const auto n = static_cast<double>(patients.size());
  std::array<double, 3> r{ratios.train, ratios.val, ratios.test};
  std::array<std::size_t, 3> counts{};
  counts[1] = static_cast<std::size_t>(std::llround(r[1] * n));
  counts[2] = static_cast<std::size_t>(std::llround(r[2] * n));
  counts[0] = patients.size() - counts[1] - counts[2];
  for (int k = 0; k < 3; ++k) {
    if (r[k] > 0 && counts[k] == 0) {
      auto largest = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      --counts[largest];
      ++counts[k];
    }
  }

  std::unordered_map<std::string, int> part;
  for (std::size_t i = 0; i < patients.size(); ++i) {
    part[patients[i]] = i < counts[0] ? 0 : (i < counts[0] + counts[1] ? 1 : 2);
  }
  CorpusSplit out;
  std::array<Corpus*, 3> parts{&out.train, &out.val, &out.test};
  for (auto* p : parts) p->label_vocab = corpus.label_vocab;
  for (const auto& d : corpus.documents) parts[part.at(d.patient_id)]->documents.push_back(d);
  for (auto* p : parts) p->recount_labels();
  return out;
}

}  // namespace protodx
