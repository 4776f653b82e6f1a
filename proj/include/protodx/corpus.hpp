// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

// Corpus ingestion: tokenisation, vocabularies, class-conditional TF-IDF,
// patient-disjoint splitting and the synthetic corpus generator.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "protodx/matrix.hpp"

namespace protodx {

using TokenId = std::uint32_t;
using LabelId = std::uint32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kMaskId = 2;
inline constexpr TokenId kFirstWordId = 3;
inline constexpr std::size_t kDefaultMaxLen = 512;

// Lower-cases ASCII, splits on whitespace, emits each ASCII punctuation
// character as its own token. Bytes >= 0x80 are word characters.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  Vocabulary();

  // `words` receive ids kFirstWordId, kFirstWordId + 1, ... in order.
  static Vocabulary from_words(const std::vector<std::string>& words);

  TokenId id(std::string_view word) const;  // kUnkId when absent
  bool contains(std::string_view word) const;
  const std::string& word(TokenId id) const;
  std::size_t size() const { return words_.size(); }

  // One token per line, line index = id. Also the on-disk format.
  std::string serialize() const;
  static Vocabulary parse(std::string_view text);
  std::string content_hash() const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return words_ == other.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

struct Document {
  std::string id;
  std::string patient_id;
  std::string text;
  std::vector<std::string> words;  // tokenised text, truncated to max_len
  std::vector<TokenId> tokens;     // ids under `vocab_hash`; empty before apply_vocab
  std::vector<LabelId> labels;     // sorted, unique
  std::string vocab_hash;

  bool has_label(LabelId c) const;
};

struct Corpus {
  std::vector<Document> documents;
  std::vector<std::string> label_vocab;
  std::vector<std::size_t> label_train_freq;  // positives per label in this corpus

  std::size_t size() const { return documents.size(); }
  bool empty() const { return documents.empty(); }
  std::size_t n_labels() const { return label_vocab.size(); }
  std::optional<LabelId> label_id(std::string_view name) const;
  const Document* find(std::string_view doc_id) const;
  void recount_labels();
  // Documents that carry label c.
  std::vector<std::size_t> positives(LabelId c) const;
};

struct LoadOptions {
  const Vocabulary* vocab = nullptr;                   // assign ids when set
  const std::vector<std::string>* label_vocab = nullptr;  // fixed label set when set
  std::size_t max_len = kDefaultMaxLen;
};

Corpus parse_corpus(std::istream& in, const LoadOptions& options = {});
Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& options = {});
void write_corpus(std::ostream& out, const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

std::vector<std::string> load_label_vocab(const std::filesystem::path& path);
void save_label_vocab(const std::vector<std::string>& labels, const std::filesystem::path& path);

// Words with corpus frequency >= min_freq, ordered by descending frequency
// then lexicographically.
Vocabulary build_vocab(const Corpus& corpus, std::size_t min_freq);
void apply_vocab(Corpus& corpus, const Vocabulary& vocab);

struct TfidfTable {
  Matrix<double> scores;              // n_labels x vocab_size
  std::vector<std::size_t> df;        // per token id
  std::vector<bool> has_row;          // false for labels without positives
  std::size_t n_docs = 0;

  double score(LabelId c, TokenId t) const { return scores(c, t); }
};

// tfidf(t, c) = tf(t, c) * ln(N / df(t)), tf over the concatenated positive
// documents of c.
TfidfTable compute_tfidf(const Corpus& corpus, std::size_t vocab_size);

// { t : tfidf(t, c) > h }, reserved ids excluded, ascending ids.
std::vector<TokenId> informative_tokens(LabelId c, const TfidfTable& tfidf, double h);

struct SyntheticSpec {
  std::size_t n_labels = 50;
  double zipf_exponent = 1.2;
  std::size_t n_docs = 2000;
  std::size_t tokens_per_doc = 48;
  std::size_t indicative_tokens_per_label = 8;
  std::size_t noise_vocab_size = 600;
  double mean_labels_per_doc = 3.0;
  double indicative_rate = 0.3;
  // Size of the pool indicative tokens are drawn from; 0 means exactly
  // n_labels * indicative_tokens_per_label.
  std::size_t indicative_vocab_size = 0;
  // Probability that a patient contributes a second document.
  double repeat_patient_rate = 0.3;
  std::uint64_t seed = 0;
};

struct SyntheticCorpus {
  Corpus corpus;
  std::vector<std::vector<std::string>> planted;  // per label, indicative words
};

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct CorpusSplit {
  Corpus train;
  Corpus val;
  Corpus test;
};

// Patient-disjoint split; every document of a patient lands in one part.
CorpusSplit split(const Corpus& corpus, const SplitRatios& ratios, std::uint64_t seed);

}  // namespace protodx
