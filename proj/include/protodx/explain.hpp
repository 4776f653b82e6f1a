// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "protodx/corpus.hpp"
#include "protodx/protonet.hpp"

namespace protodx {

// ------------------------------------------------------------- saliency

enum class SaliencyMethod { kProtoAttention, kOcclusion, kGradient, kInputXGradient, kRandomControl };

inline constexpr SaliencyMethod kAllSaliencyMethods[] = {
    SaliencyMethod::kProtoAttention, SaliencyMethod::kOcclusion, SaliencyMethod::kGradient,
    SaliencyMethod::kInputXGradient, SaliencyMethod::kRandomControl};

std::string_view method_name(SaliencyMethod m);
// Throws ContractError for names outside kAllSaliencyMethods.
SaliencyMethod parse_saliency_method(std::string_view name);

struct Saliency {
  SaliencyMethod method;
  std::vector<double> scores;  // one non-negative value per token
};

// Relevance of each token for label `label`:
//   proto_attention   s_pc (label-wise variants only)
//   occlusion         max(0, y - y with token j replaced by MASK)
//   gradient          || d y / d embedding_j ||_2
//   input_x_gradient  | embedding_j . d y / d embedding_j |
//   random_control    i.i.d. U(0, 1) from `rng`
template <class T>
Saliency saliency(const ProtoModel<T>& model, std::span<const TokenId> tokens, LabelId label,
                  SaliencyMethod method, std::mt19937_64& rng);

// ------------------------------------------------------------ exemplars

enum class ExemplarMode { kTypical, kAtypical };

std::string_view mode_name(ExemplarMode m);
ExemplarMode parse_exemplar_mode(std::string_view name);  // ValidationError if unknown

using Span = std::pair<std::size_t, std::size_t>;  // [start, end)

struct PrototypeExemplar {
  std::string doc_id;
  double distance = 0.0;
  std::vector<double> attention;    // label-wise attention over the document
  std::vector<Span> top_spans;      // most-attended positions merged into runs
  std::vector<std::string> span_text;

  bool operator==(const PrototypeExemplar&) const = default;
};

struct ExemplarOptions {
  // Positions taken from the top of the attention ranking before merging.
  std::size_t span_tokens = 5;
  // Restrict candidates to training documents carrying the label.
  bool positives_only = true;
};

// Merges the `top` highest-scoring positions (ties: earlier first) into
// contiguous, ascending [start, end) runs.
std::vector<Span> top_spans(std::span<const double> scores, std::size_t top);

// Every candidate for `label`, ascending by (distance, doc id).
template <class T>
std::vector<PrototypeExemplar> exemplar_candidates(const ProtoModel<T>& model, const Corpus& train, LabelId label,
                                                   const ExemplarOptions& options = {});

// First k of `sorted` (ascending by distance, then doc id) in the order
// required by `mode`: typical keeps it, atypical ranks by descending
// distance with ties still broken by ascending doc id.
std::vector<PrototypeExemplar> rank_exemplars(std::span<const PrototypeExemplar> sorted, std::size_t k,
                                              ExemplarMode mode);

// Prototype variants only. Appends to `warnings` when the label has no
// candidates.
template <class T>
std::vector<PrototypeExemplar> retrieve_exemplars(const ProtoModel<T>& model, const Corpus& train, LabelId label,
                                                  std::size_t k, ExemplarMode mode,
                                                  std::vector<std::string>* warnings = nullptr,
                                                  const ExemplarOptions& options = {});

nlohmann::ordered_json to_json(const PrototypeExemplar& e);

// --------------------------------------------------------- faithfulness

// 0.1, 0.2, ..., 1.0
std::vector<double> masking_thresholds();

// Number of tokens masked at threshold step t/10 of an n-token document:
// ceil(t * n / 10), computed exactly.
std::size_t masked_count(std::size_t step, std::size_t n);

// Copy of `tokens` with the `count` most salient positions (ties: earlier
// position first) replaced by MASK.
std::vector<TokenId> mask_most_salient(std::span<const TokenId> tokens, std::span<const double> scores,
                                       std::size_t count);

struct FaithfulnessReport {
  SaliencyMethod method;
  std::vector<std::string> labels;    // evaluated labels
  std::vector<std::string> excluded;  // degenerate in the evaluation corpus
  std::vector<double> thresholds;
  std::vector<double> performance;    // macro ROC AUC per threshold
  double score = 0.0;                 // mean over thresholds; lower is more faithful
  double reference = 0.0;             // unmasked macro ROC AUC
  std::vector<std::string> warnings;
};

// Masks per (document, label) pair and evaluates macro ROC AUC over `labels`
// on the masked copies. Throws ValidationError when every label is
// degenerate.
template <class T>
FaithfulnessReport faithfulness(const ProtoModel<T>& model, const Corpus& eval, std::span<const LabelId> labels,
                                SaliencyMethod method, std::uint64_t seed);

nlohmann::ordered_json to_json(const FaithfulnessReport& report);

// ------------------------------------------------------ attended words

struct AttendedWord {
  std::string word;
  double mass = 0.0;
};

// Attention mass per token string summed over the label's positive
// documents; descending mass, ties lexicographic. Label-wise variants only.
template <class T>
std::vector<AttendedWord> top_attended_words(const ProtoModel<T>& model, const Corpus& corpus, LabelId label,
                                             std::size_t m);

// --------------------------------------------------------------- report

struct LabelExplanation {
  std::string label;
  double probability = 0.0;
  std::optional<double> distance;  // prototype variants
  std::vector<double> token_scores;
  std::vector<PrototypeExemplar> exemplars;
};

struct ExplanationReport {
  std::string doc_id;
  std::string model_hash;
  std::vector<std::string> tokens;
  std::vector<LabelExplanation> labels;

  nlohmann::ordered_json json() const;
  std::string html() const;
};

struct ReportInput {
  LabelId label;
  Saliency saliency;
  std::vector<PrototypeExemplar> exemplars;
};

// Throws ContractError when the prediction was made under a different
// vocabulary than the one the document was tokenised with.
ExplanationReport render_report(const Document& doc, const PredictionResult& prediction, bool prototype_variant,
                                const std::vector<std::string>& label_vocab, const std::vector<ReportInput>& inputs,
                                const std::string& model_hash);

// Throws ValidationError naming the first offending JSON path.
void validate_report_json(const nlohmann::json& report);

}  // namespace protodx
