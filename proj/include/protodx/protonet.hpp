// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

// Prototype-distance classification over label-wise attention pooled token
// vectors, plus the linear and mean-pooled ablation heads.

#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "protodx/corpus.hpp"
#include "protodx/encoder.hpp"
#include "protodx/matrix.hpp"

namespace protodx {

enum class ModelVariant {
  kProtoLabelwise,   // label-wise attention + prototypes
  kProtoPlain,       // mean pooled document vector + prototypes
  kLinearLabelwise,  // label-wise attention + per-label affine score
  kLinearPlain,      // mean pooled document vector + per-label affine score
};

std::string_view variant_name(ModelVariant v);
ModelVariant parse_variant(std::string_view name);
inline bool uses_prototypes(ModelVariant v) {
  return v == ModelVariant::kProtoLabelwise || v == ModelVariant::kProtoPlain;
}
inline bool uses_label_attention(ModelVariant v) {
  return v == ModelVariant::kProtoLabelwise || v == ModelVariant::kLinearLabelwise;
}

inline constexpr double kProbabilityClamp = 1e-7;

template <class T>
struct HeadParams {
  Matrix<T> attention;   // W, C x D; label-wise variants
  Matrix<T> prototypes;  // U, C x D; prototype variants
  Matrix<T> linear_w;    // C x D; linear variants
  Matrix<T> linear_b;    // 1 x C; linear variants
};

template <class T>
struct Parameters {
  EncoderParams<T> encoder;
  HeadParams<T> head;

  // Every present trainable tensor with its serialisation name.
  template <class F>
  void for_each(F&& f);
  template <class F>
  void for_each(F&& f) const;

  Parameters zeros_like() const;
  template <class U>
  Parameters<U> cast() const;
};

template <class T>
struct ProtoModel {
  ModelVariant variant = ModelVariant::kProtoLabelwise;
  EncoderConfig config;
  Parameters<T> params;
  Vocabulary vocab;
  std::vector<std::string> label_vocab;
  std::vector<std::size_t> label_train_freq;
  std::vector<std::optional<double>> label_val_roc_auc;  // empty when not bundled

  std::size_t n_labels() const { return label_vocab.size(); }
  std::string vocab_hash() const { return vocab.content_hash(); }

  template <class U>
  ProtoModel<U> cast() const;
};

// Fresh model: encoder from init_encoder, W and U ~ N(0, 1/sqrt(D)), linear
// weights ~ U(+-1/sqrt(D)), linear bias 0. The MASK embedding row is part of
// the table and never trained.
template <class T>
ProtoModel<T> init_model(const Vocabulary& vocab, const std::vector<std::string>& label_vocab,
                         ModelVariant variant, EncoderConfig config, std::uint64_t seed);

// ----------------------------------------------------------- primitives

template <class T>
struct AttentionPooling {
  std::vector<T> scores;  // s_pc, on the simplex
  std::vector<T> pooled;  // v_pc
};

// s_j = softmax_j(g_j . w), v = sum_j s_j g_j.
template <class T>
AttentionPooling<T> label_attention(const Matrix<T>& g, std::span<const T> w);

struct LabelScore {
  double distance;
  double probability;
};

// d = ||v - u||_2, y = 1 / (1 + exp(d)).
template <class T>
LabelScore predict_label(std::span<const T> v, std::span<const T> u);

double sigmoid(double z);

// Summed binary cross-entropy, probabilities clamped to [1e-7, 1 - 1e-7].
// predictions / truth: documents x labels.
double bce_loss(const Matrix<double>& predictions, const Matrix<double>& truth);
double bce_term(double probability, bool positive);

// ------------------------------------------------------------- forward

template <class T>
struct ForwardCache {
  EncodedDocument<T> encoded;
  std::vector<LabelId> labels;  // labels evaluated, in row order
  Matrix<T> attention;          // |labels| x n; empty for plain variants
  Matrix<T> pooled;             // |labels| x D (label-wise) or 1 x D (plain)
  std::vector<T> score;         // distance (prototype) or logit (linear)
  std::vector<T> probability;
};

// Evaluates all labels when `labels` is empty.
template <class T>
ForwardCache<T> forward_cached(const ProtoModel<T>& model, std::span<const TokenId> tokens,
                               std::span<const LabelId> labels = {});

struct PredictionResult {
  std::vector<double> score;        // d_pc for prototype variants, affine logit otherwise
  std::vector<double> probability;  // y_pc
  Matrix<double> attention;         // C x n, label-wise variants only
  std::vector<std::string> tokens;  // vocabulary strings of the encoded ids
  std::string vocab_hash;
};

template <class T>
PredictionResult forward(const Document& doc, const ProtoModel<T>& model);

// y_pc for one label only.
template <class T>
double label_probability(const ProtoModel<T>& model, std::span<const TokenId> tokens, LabelId label);

// Backpropagates d objective / d score (one entry per evaluated label) into
// `grads`; returns d objective / d x0 (per-position input embedding rows).
template <class T>
Matrix<T> backward_from_scores(const ProtoModel<T>& model, const ForwardCache<T>& cache,
                               std::span<const T> dscore, Parameters<T>& grads);

// Clamped BCE summed over all labels of one document; accumulates its
// gradient into `grads` and returns the loss.
template <class T>
double loss_and_gradient(const ProtoModel<T>& model, std::span<const TokenId> tokens,
                         std::span<const LabelId> truth, Parameters<T>& grads);

// Document-level loss without gradients.
template <class T>
double document_loss(const ProtoModel<T>& model, std::span<const TokenId> tokens,
                     std::span<const LabelId> truth);

// ---------------------------------------------------------- initialisation

struct AttentionInitReport {
  std::vector<std::size_t> informative_tokens;  // |t~| per label
  std::vector<std::size_t> occurrences;         // g rows averaged per label
  std::vector<bool> fallback;                   // random init used
};

// w_c = mean of g rows at occurrences of informative tokens of c inside the
// positive training documents of c; Gaussian N(0, 1/sqrt(D)) fallback.
template <class T>
Matrix<T> init_attention(const Corpus& train, const TfidfTable& tfidf, double h, const ProtoModel<T>& model,
                         std::mt19937_64& rng, AttentionInitReport* report = nullptr);

// u_c = mean over positive training documents of v_pc (label-wise) or of
// the mean-pooled v_p (plain variants, or `pooled` forced); labels without
// positives get N(0, 0.01).
template <class T>
Matrix<T> init_prototypes(const Corpus& train, const ProtoModel<T>& model, std::mt19937_64& rng,
                          bool pooled = false);

// ------------------------------------------------------------ template impl

template <class T>
template <class F>
void Parameters<T>::for_each(F&& f) {
  encoder.for_each(f);
  if (!head.attention.empty()) f(std::string("head.attention"), head.attention);
  if (!head.prototypes.empty()) f(std::string("head.prototypes"), head.prototypes);
  if (!head.linear_w.empty()) f(std::string("head.linear_w"), head.linear_w);
  if (!head.linear_b.empty()) f(std::string("head.linear_b"), head.linear_b);
}

template <class T>
template <class F>
void Parameters<T>::for_each(F&& f) const {
  const_cast<Parameters<T>*>(this)->for_each(
      [&](const std::string& name, Matrix<T>& m) { f(name, static_cast<const Matrix<T>&>(m)); });
}

template <class T>
Parameters<T> Parameters<T>::zeros_like() const {
  Parameters<T> out;
  out.encoder = encoder.zeros_like();
  out.head = head;
  for (Matrix<T>* m : {&out.head.attention, &out.head.prototypes, &out.head.linear_w, &out.head.linear_b}) {
    m->fill(T{0});
  }
  return out;
}

template <class T>
template <class U>
Parameters<U> Parameters<T>::cast() const {
  Parameters<U> out;
  out.encoder = encoder.template cast<U>();
  out.head.attention = head.attention.template cast<U>();
  out.head.prototypes = head.prototypes.template cast<U>();
  out.head.linear_w = head.linear_w.template cast<U>();
  out.head.linear_b = head.linear_b.template cast<U>();
  return out;
}

template <class T>
template <class U>
ProtoModel<U> ProtoModel<T>::cast() const {
  ProtoModel<U> out;
  out.variant = variant;
  out.config = config;
  out.params = params.template cast<U>();
  out.vocab = vocab;
  out.label_vocab = label_vocab;
  out.label_train_freq = label_train_freq;
  out.label_val_roc_auc = label_val_roc_auc;
  return out;
}

}  // namespace protodx
