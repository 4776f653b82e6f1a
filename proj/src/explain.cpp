// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

#include "protodx/explain.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "protodx/errors.hpp"
#include "protodx/metrics.hpp"
#include "protodx/parallel.hpp"

namespace protodx {

std::string_view method_name(SaliencyMethod m) {
  switch (m) {
    case SaliencyMethod::kProtoAttention: return "proto_attention";
    case SaliencyMethod::kOcclusion: return "occlusion";
    case SaliencyMethod::kGradient: return "gradient";
    case SaliencyMethod::kInputXGradient: return "input_x_gradient";
    case SaliencyMethod::kRandomControl: return "random_control";
  }
  throw ContractError("method_name: invalid saliency method");
}

SaliencyMethod parse_saliency_method(std::string_view name) {
  for (auto m : kAllSaliencyMethods) {
    if (method_name(m) == name) return m;
  }
  throw ContractError("unknown saliency method '" + std::string(name) + "'");
}

std::string_view mode_name(ExemplarMode m) { return m == ExemplarMode::kTypical ? "typical" : "atypical"; }

ExemplarMode parse_exemplar_mode(std::string_view name) {
  if (name == "typical") return ExemplarMode::kTypical;
  if (name == "atypical") return ExemplarMode::kAtypical;
  throw ValidationError("unknown exemplar mode '" + std::string(name) + "' (expected typical or atypical)");
}

namespace {

template <class T>
void require_label(const ProtoModel<T>& model, LabelId label, const char* what) {
  if (label >= model.n_labels()) {
    throw ContractError(std::string(what) + ": label id " + std::to_string(label) + " out of range");
  }
}

// Indices ordered by descending score; equal scores keep position order.
std::vector<std::size_t> salience_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

template <class T>
std::vector<double> attention_row(const ForwardCache<T>& cache) {
  std::vector<double> out(cache.attention.cols());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = static_cast<double>(cache.attention(0, j));
  return out;
}

}  // namespace

// --------------------------------------------------------------- saliency

template <class T>
Saliency saliency(const ProtoModel<T>& model, std::span<const TokenId> tokens, LabelId label,
                  SaliencyMethod method, std::mt19937_64& rng) {
  require_label(model, label, "saliency");
  const std::size_t n = tokens.size();
  const LabelId one[1] = {label};
  Saliency out{method, std::vector<double>(n, 0.0)};

  switch (method) {
    case SaliencyMethod::kProtoAttention: {
      if (!uses_label_attention(model.variant)) {
        throw ContractError("proto_attention saliency needs a label-wise variant, model is " +
                            std::string(variant_name(model.variant)));
      }
      out.scores = attention_row(forward_cached(model, tokens, one));
      break;
    }
    case SaliencyMethod::kOcclusion: {
      const double base = label_probability(model, tokens, label);
      std::vector<TokenId> masked(tokens.begin(), tokens.end());
      for (std::size_t j = 0; j < n; ++j) {
        if (masked[j] == kMaskId) continue;
        masked[j] = kMaskId;
        out.scores[j] = std::max(0.0, base - label_probability(model, std::span<const TokenId>(masked), label));
        masked[j] = tokens[j];
      }
      break;
    }
    case SaliencyMethod::kGradient:
    case SaliencyMethod::kInputXGradient: {
      const auto cache = forward_cached(model, tokens, one);
      const double y = static_cast<double>(cache.probability[0]);
      // y = sigmoid(-d) for prototype variants, sigmoid(z) for linear heads.
      const double dy = uses_prototypes(model.variant) ? -y * (1.0 - y) : y * (1.0 - y);
      const T dscore[1] = {static_cast<T>(dy)};
      auto grads = model.params.zeros_like();
      const Matrix<T> dx = backward_from_scores(model, cache, std::span<const T>(dscore), grads);
      for (std::size_t j = 0; j < n; ++j) {
        auto row = dx.row(j);
        if (method == SaliencyMethod::kGradient) {
          out.scores[j] = std::sqrt(static_cast<double>(simd::dot<T>(row, row)));
        } else {
          auto emb = model.params.encoder.embedding.row(tokens[j]);
          out.scores[j] = std::abs(static_cast<double>(simd::dot<T>(emb, row)));
        }
      }
      break;
    }
    case SaliencyMethod::kRandomControl: {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (auto& s : out.scores) s = u(rng);
      break;
    }
    default:
      throw ContractError("saliency: invalid method");
  }
  return out;
}

// -------------------------------------------------------------- exemplars

std::vector<Span> top_spans(std::span<const double> scores, std::size_t top) {
  auto order = salience_order(scores);
  order.resize(std::min(top, order.size()));
  std::sort(order.begin(), order.end());
  std::vector<Span> spans;
  for (std::size_t j : order) {
    if (!spans.empty() && spans.back().second == j) {
      spans.back().second = j + 1;
    } else {
      spans.emplace_back(j, j + 1);
    }
  }
  return spans;
}

template <class T>
std::vector<PrototypeExemplar> exemplar_candidates(const ProtoModel<T>& model, const Corpus& train, LabelId label,
                                                   const ExemplarOptions& options) {
  require_label(model, label, "exemplars");
  if (!uses_prototypes(model.variant)) {
    throw ContractError("exemplar retrieval needs a prototype variant, model is " +
                        std::string(variant_name(model.variant)));
  }
  if (train.label_vocab != model.label_vocab) {
    throw ValidationError("exemplars: corpus label vocabulary differs from the model's");
  }
  std::vector<std::size_t> docs;
  if (options.positives_only) {
    docs = train.positives(label);
  } else {
    docs.resize(train.size());
    std::iota(docs.begin(), docs.end(), 0);
  }
  std::vector<PrototypeExemplar> out(docs.size());
  const LabelId one[1] = {label};
  parallel_for(docs.size(), [&](std::size_t i) {
    const Document& doc = train.documents[docs[i]];
    const auto cache = forward_cached(model, std::span<const TokenId>(doc.tokens), one);
    PrototypeExemplar& e = out[i];
    e.doc_id = doc.id;
    e.distance = static_cast<double>(cache.score[0]);
    if (!cache.attention.empty()) {
      e.attention = attention_row(cache);
      e.top_spans = top_spans(e.attention, options.span_tokens);
    }
    for (const auto& [start, end] : e.top_spans) {
      std::string text;
      for (std::size_t j = start; j < end; ++j) {
        if (j > start) text += ' ';
        text += j < doc.words.size() ? doc.words[j] : model.vocab.word(doc.tokens[j]);
      }
      e.span_text.push_back(std::move(text));
    }
  });
  std::sort(out.begin(), out.end(), [](const PrototypeExemplar& a, const PrototypeExemplar& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.doc_id < b.doc_id;
  });
  return out;
}

std::vector<PrototypeExemplar> rank_exemplars(std::span<const PrototypeExemplar> sorted, std::size_t k,
                                              ExemplarMode mode) {
  std::vector<PrototypeExemplar> out(sorted.begin(), sorted.end());
  if (mode == ExemplarMode::kAtypical) {
    std::stable_sort(out.begin(), out.end(),
                     [](const PrototypeExemplar& a, const PrototypeExemplar& b) { return a.distance > b.distance; });
  }
  if (out.size() > k) out.resize(k);
  return out;
}

template <class T>
std::vector<PrototypeExemplar> retrieve_exemplars(const ProtoModel<T>& model, const Corpus& train, LabelId label,
                                                  std::size_t k, ExemplarMode mode, std::vector<std::string>* warnings,
                                                  const ExemplarOptions& options) {
  const auto candidates = exemplar_candidates(model, train, label, options);
  if (candidates.empty() && warnings) {
    warnings->push_back("label '" + model.label_vocab[label] + "' has no positive training documents");
  }
  return rank_exemplars(candidates, k, mode);
}

nlohmann::ordered_json to_json(const PrototypeExemplar& e) {
  nlohmann::ordered_json j;
  j["doc_id"] = e.doc_id;
  j["distance"] = e.distance;
  nlohmann::ordered_json spans = nlohmann::ordered_json::array();
  for (const auto& [start, end] : e.top_spans) spans.push_back({start, end});
  j["top_spans"] = std::move(spans);
  j["span_text"] = e.span_text;
  return j;
}

// ----------------------------------------------------------- faithfulness

std::vector<double> masking_thresholds() {
  std::vector<double> out;
  for (int t = 1; t <= 10; ++t) out.push_back(t / 10.0);
  return out;
}

std::size_t masked_count(std::size_t step, std::size_t n) { return (step * n + 9) / 10; }

std::vector<TokenId> mask_most_salient(std::span<const TokenId> tokens, std::span<const double> scores,
                                       std::size_t count) {
  if (scores.size() != tokens.size()) throw ContractError("mask_most_salient: score length mismatch");
  std::vector<TokenId> out(tokens.begin(), tokens.end());
  const auto order = salience_order(scores);
  for (std::size_t i = 0; i < std::min(count, order.size()); ++i) out[order[i]] = kMaskId;
  return out;
}

template <class T>
FaithfulnessReport faithfulness(const ProtoModel<T>& model, const Corpus& eval, std::span<const LabelId> labels,
                                SaliencyMethod method, std::uint64_t seed) {
  FaithfulnessReport report;
  report.method = method;
  report.thresholds = masking_thresholds();
  if (eval.label_vocab != model.label_vocab) {
    throw ValidationError("faithfulness: corpus label vocabulary differs from the model's");
  }

  std::vector<LabelId> included;
  for (LabelId l : labels) {
    require_label(model, l, "faithfulness");
    const std::size_t pos = eval.positives(l).size();
    if (pos == 0 || pos == eval.size()) {
      report.excluded.push_back(model.label_vocab[l]);
      report.warnings.push_back("label '" + model.label_vocab[l] + "' is degenerate in the evaluation corpus (" +
                                std::to_string(pos) + " of " + std::to_string(eval.size()) +
                                " documents positive); excluded");
    } else {
      included.push_back(l);
      report.labels.push_back(model.label_vocab[l]);
    }
  }
  if (included.empty()) throw ValidationError("faithfulness: every requested label is degenerate");

  const std::size_t n_docs = eval.size();
  const std::size_t n_labels = included.size();
  const std::size_t steps = report.thresholds.size();
  // probability[t](doc, label); t = 0 is the unmasked reference.
  std::vector<Matrix<double>> probability(steps + 1, Matrix<double>(n_docs, n_labels));
  BinaryMatrix truth(n_docs, n_labels);

  parallel_for(n_docs * n_labels, [&](std::size_t i) {
    const std::size_t d = i / n_labels;
    const std::size_t li = i % n_labels;
    const Document& doc = eval.documents[d];
    const LabelId label = included[li];
    truth(d, li) = doc.has_label(label) ? 1 : 0;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(d), static_cast<std::uint32_t>(label)};
    std::mt19937_64 rng(seq);
    const std::span<const TokenId> tokens(doc.tokens);
    const auto sal = saliency(model, tokens, label, method, rng);
    probability[0](d, li) = label_probability(model, tokens, label);
    for (std::size_t t = 1; t <= steps; ++t) {
      const auto masked = mask_most_salient(tokens, sal.scores, masked_count(t, tokens.size()));
      probability[t](d, li) = label_probability(model, std::span<const TokenId>(masked), label);
    }
  });

  auto macro = [&](const Matrix<double>& p) {
    std::vector<std::optional<double>> per(n_labels);
    std::vector<double> scores(n_docs);
    std::vector<std::uint8_t> truths(n_docs);
    for (std::size_t li = 0; li < n_labels; ++li) {
      for (std::size_t d = 0; d < n_docs; ++d) {
        scores[d] = p(d, li);
        truths[d] = truth(d, li);
      }
      per[li] = roc_auc(scores, truths);
    }
    return macro_mean(per).value();
  };
  report.reference = macro(probability[0]);
  for (std::size_t t = 1; t <= steps; ++t) report.performance.push_back(macro(probability[t]));
  report.score = std::accumulate(report.performance.begin(), report.performance.end(), 0.0) /
                 static_cast<double>(steps);
  return report;
}

nlohmann::ordered_json to_json(const FaithfulnessReport& r) {
  nlohmann::ordered_json j;
  j["method"] = std::string(method_name(r.method));
  j["labels"] = r.labels;
  j["excluded"] = r.excluded;
  j["thresholds"] = r.thresholds;
  j["performance"] = r.performance;
  j["score"] = r.score;
  j["reference"] = r.reference;
  j["warnings"] = r.warnings;
  return j;
}

// --------------------------------------------------------- attended words

template <class T>
std::vector<AttendedWord> top_attended_words(const ProtoModel<T>& model, const Corpus& corpus, LabelId label,
                                             std::size_t m) {
  require_label(model, label, "top_attended_words");
  if (!uses_label_attention(model.variant)) {
    throw ContractError("top_attended_words needs a label-wise variant, model is " +
                        std::string(variant_name(model.variant)));
  }
  const auto docs = corpus.positives(label);
  std::vector<std::vector<double>> rows(docs.size());
  const LabelId one[1] = {label};
  parallel_for(docs.size(), [&](std::size_t i) {
    const auto& doc = corpus.documents[docs[i]];
    rows[i] = attention_row(forward_cached(model, std::span<const TokenId>(doc.tokens), one));
  });
  std::map<std::string, double> mass;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& doc = corpus.documents[docs[i]];
    for (std::size_t j = 0; j < rows[i].size(); ++j) mass[model.vocab.word(doc.tokens[j])] += rows[i][j];
  }
  std::vector<AttendedWord> out;
  for (auto& [word, value] : mass) out.push_back({word, value});
  std::stable_sort(out.begin(), out.end(), [](const AttendedWord& a, const AttendedWord& b) { return a.mass > b.mass; });
  if (out.size() > m) out.resize(m);
  return out;
}

// ----------------------------------------------------------------- report

ExplanationReport render_report(const Document& doc, const PredictionResult& prediction, bool prototype_variant,
                                const std::vector<std::string>& label_vocab, const std::vector<ReportInput>& inputs,
                                const std::string& model_hash) {
  if (doc.vocab_hash != prediction.vocab_hash) {
    throw ContractError("render_report: document '" + doc.id + "' was tokenised under vocabulary " +
                        doc.vocab_hash + " but the prediction used " + prediction.vocab_hash);
  }
  ExplanationReport r;
  r.doc_id = doc.id;
  r.model_hash = model_hash;
  r.tokens = prediction.tokens;
  for (const auto& in : inputs) {
    if (in.label >= label_vocab.size() || in.label >= prediction.probability.size()) {
      throw ContractError("render_report: label id " + std::to_string(in.label) + " out of range");
    }
    if (in.saliency.scores.size() != r.tokens.size()) {
      throw ContractError("render_report: saliency length differs from token count");
    }
    LabelExplanation e;
    e.label = label_vocab[in.label];
    e.probability = prediction.probability[in.label];
    if (prototype_variant) e.distance = prediction.score[in.label];
    e.token_scores = in.saliency.scores;
    e.exemplars = in.exemplars;
    r.labels.push_back(std::move(e));
  }
  return r;
}

nlohmann::ordered_json ExplanationReport::json() const {
  nlohmann::ordered_json j;
  j["doc_id"] = doc_id;
  j["model_hash"] = model_hash;
  j["tokens"] = tokens;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& l : labels) {
    nlohmann::ordered_json e;
    e["label"] = l.label;
    e["probability"] = l.probability;
    e["distance"] = l.distance ? nlohmann::ordered_json(*l.distance) : nlohmann::ordered_json(nullptr);
    e["token_scores"] = l.token_scores;
    nlohmann::ordered_json ex = nlohmann::ordered_json::array();
    for (const auto& x : l.exemplars) ex.push_back(to_json(x));
    e["exemplars"] = std::move(ex);
    arr.push_back(std::move(e));
  }
  j["labels"] = std::move(arr);
  return j;
}

namespace {

std::string escape_html(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(digits);
  ss << v;
  return ss.str();
}

constexpr const char* kStyle = R"(body{font-family:sans-serif;margin:2em;max-width:60em}
.highlight-block{border:1px solid #ccc;border-radius:4px;padding:1em;margin-bottom:1.5em}
.tok{padding:0 1px;border-radius:2px}
.exemplar-panel{border-left:3px solid #88a;padding:.3em .8em;margin:.5em 0;background:#f6f6fb}
.meta{color:#555;font-size:90%}
mark{background:#fd6}
)";

}  // namespace

std::string ExplanationReport::html() const {
  std::ostringstream out;
  out << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Explanation for " << escape_html(doc_id)
      << "</title>\n<style>" << kStyle << "</style></head><body>\n";
  out << "<h1>Document " << escape_html(doc_id) << "</h1>\n<p class=\"meta\">model " << escape_html(model_hash)
      << "</p>\n";
  for (const auto& l : labels) {
    out << "<section class=\"highlight-block\">\n<h2>" << escape_html(l.label) << "</h2>\n<p class=\"meta\">probability "
        << fixed(l.probability, 4);
    if (l.distance) out << ", distance " << fixed(*l.distance, 4);
    out << "</p>\n<p>";
    const double top = l.token_scores.empty() ? 0.0 : *std::max_element(l.token_scores.begin(), l.token_scores.end());
    for (std::size_t j = 0; j < tokens.size(); ++j) {
      const double a = top > 0.0 ? l.token_scores[j] / top : 0.0;
      out << "<span class=\"tok\" title=\"" << fixed(l.token_scores[j], 5) << "\" style=\"background:rgba(255,170,0,"
          << fixed(a, 3) << ")\">" << escape_html(tokens[j]) << "</span> ";
    }
    out << "</p>\n";
    for (const auto& e : l.exemplars) {
      out << "<div class=\"exemplar-panel\"><p class=\"meta\">" << escape_html(e.doc_id) << ", distance "
          << fixed(e.distance, 4) << "</p>";
      for (const auto& text : e.span_text) out << "<mark>" << escape_html(text) << "</mark> ";
      out << "</div>\n";
    }
    out << "</section>\n";
  }
  out << "</body></html>\n";
  return out.str();
}

void validate_report_json(const nlohmann::json& r) {
  auto fail = [](const std::string& path, const std::string& why) {
    throw ValidationError("report" + path + ": " + why);
  };
  if (!r.is_object()) fail("", "not an object");
  for (const char* key : {"doc_id", "model_hash"}) {
    if (!r.contains(key) || !r[key].is_string()) fail(std::string(".") + key, "missing or not a string");
  }
  std::optional<std::size_t> n_tokens;
  if (r.contains("tokens")) {
    if (!r["tokens"].is_array()) fail(".tokens", "not an array");
    n_tokens = r["tokens"].size();
  }
  if (!r.contains("labels") || !r["labels"].is_array()) fail(".labels", "missing or not an array");
  for (std::size_t i = 0; i < r["labels"].size(); ++i) {
    const auto& l = r["labels"][i];
    const std::string p = ".labels[" + std::to_string(i) + "]";
    if (!l.is_object()) fail(p, "not an object");
    if (!l.contains("label") || !l["label"].is_string()) fail(p + ".label", "missing or not a string");
    if (!l.contains("probability") || !l["probability"].is_number()) fail(p + ".probability", "missing or not a number");
    const double prob = l["probability"].get<double>();
    if (!(prob >= 0.0 && prob <= 1.0)) fail(p + ".probability", "outside [0, 1]");
    if (!l.contains("distance")) fail(p + ".distance", "missing");
    if (!l["distance"].is_null() && !(l["distance"].is_number() && l["distance"].get<double>() >= 0.0)) {
      fail(p + ".distance", "must be null or a non-negative number");
    }
    if (!l.contains("token_scores") || !l["token_scores"].is_array()) fail(p + ".token_scores", "missing or not an array");
    for (const auto& s : l["token_scores"]) {
      if (!s.is_number() || !std::isfinite(s.get<double>())) fail(p + ".token_scores", "non-finite or non-numeric entry");
    }
    if (n_tokens && l["token_scores"].size() != *n_tokens) fail(p + ".token_scores", "length differs from tokens");
    if (!l.contains("exemplars") || !l["exemplars"].is_array()) fail(p + ".exemplars", "missing or not an array");
    for (std::size_t k = 0; k < l["exemplars"].size(); ++k) {
      const auto& e = l["exemplars"][k];
      const std::string q = p + ".exemplars[" + std::to_string(k) + "]";
      if (!e.is_object()) fail(q, "not an object");
      if (!e.contains("doc_id") || !e["doc_id"].is_string()) fail(q + ".doc_id", "missing or not a string");
      if (!e.contains("distance") || !e["distance"].is_number() || e["distance"].get<double>() < 0.0) {
        fail(q + ".distance", "missing or negative");
      }
      if (!e.contains("top_spans") || !e["top_spans"].is_array()) fail(q + ".top_spans", "missing or not an array");
      for (const auto& s : e["top_spans"]) {
        if (!s.is_array() || s.size() != 2 || !s[0].is_number_unsigned() || !s[1].is_number_unsigned() ||
            s[0].get<std::size_t>() >= s[1].get<std::size_t>()) {
          fail(q + ".top_spans", "entries must be [start, end) with start < end");
        }
      }
    }
  }
}

#define PROTODX_INSTANTIATE_EXPLAIN(T)                                                                            \
  template Saliency saliency<T>(const ProtoModel<T>&, std::span<const TokenId>, LabelId, SaliencyMethod,          \
                                std::mt19937_64&);                                                                \
  template std::vector<PrototypeExemplar> exemplar_candidates<T>(const ProtoModel<T>&, const Corpus&, LabelId,    \
                                                                 const ExemplarOptions&);                         \
  template std::vector<PrototypeExemplar> retrieve_exemplars<T>(const ProtoModel<T>&, const Corpus&, LabelId,     \
                                                                std::size_t, ExemplarMode,                        \
                                                                std::vector<std::string>*, const ExemplarOptions&); \
  template FaithfulnessReport faithfulness<T>(const ProtoModel<T>&, const Corpus&, std::span<const LabelId>,      \
                                              SaliencyMethod, std::uint64_t);                                     \
  template std::vector<AttendedWord> top_attended_words<T>(const ProtoModel<T>&, const Corpus&, LabelId, std::size_t);

PROTODX_INSTANTIATE_EXPLAIN(float)
PROTODX_INSTANTIATE_EXPLAIN(double)

#undef PROTODX_INSTANTIATE_EXPLAIN

}  // namespace protodx
