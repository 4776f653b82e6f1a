// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

#include "protodx/protonet.hpp"

#include <algorithm>
#include <cmath>

#include "protodx/errors.hpp"

namespace protodx {

std::string_view variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::kProtoLabelwise:
      return "proto_labelwise";
    case ModelVariant::kProtoPlain:
      return "proto_plain";
    case ModelVariant::kLinearLabelwise:
      return "linear_labelwise";
    case ModelVariant::kLinearPlain:
      return "linear_plain";
  }
  return "unknown";
}

ModelVariant parse_variant(std::string_view name) {
  for (auto v : {ModelVariant::kProtoLabelwise, ModelVariant::kProtoPlain, ModelVariant::kLinearLabelwise,
                 ModelVariant::kLinearPlain}) {
    if (variant_name(v) == name) return v;
  }
  throw ValidationError("unknown model variant '" + std::string(name) + "'");
}

namespace {

template <class T>
void fill_normal(Matrix<T>& m, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  for (T& x : m.flat()) x = static_cast<T>(n(rng));
}

template <class T>
void softmax_rows(Matrix<T>& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    T mx = row[0];
    for (T v : row) mx = std::max(mx, v);
    T sum = 0;
    for (T& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    const T inv = T{1} / sum;
    for (T& v : row) v *= inv;
  }
}

template <class T>
Matrix<T> mean_rows(const Matrix<T>& g) {
  Matrix<T> out(1, g.cols());
  for (std::size_t j = 0; j < g.rows(); ++j) simd::axpy<T>(T{1}, g.row(j), out.row(0));
  simd::scale<T>(T{1} / static_cast<T>(g.rows()), out.row(0));
  return out;
}

template <class T>
std::vector<LabelId> resolve_labels(const ProtoModel<T>& model, std::span<const LabelId> labels) {
  std::vector<LabelId> out;
  if (labels.empty()) {
    out.resize(model.n_labels());
    for (LabelId c = 0; c < out.size(); ++c) out[c] = c;
  } else {
    for (LabelId c : labels) {
      if (c >= model.n_labels()) throw ContractError("label id out of range");
      out.push_back(c);
    }
  }
  return out;
}

template <class T>
Matrix<T> select_rows(const Matrix<T>& m, const std::vector<LabelId>& rows) {
  Matrix<T> out(rows.size(), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy_n(m.row(rows[r]).data(), m.cols(), out.row(r).data());
  return out;
}

}  // namespace

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double bce_term(double probability, bool positive) {
  const double p = std::clamp(probability, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return positive ? -std::log(p) : -std::log(1.0 - p);
}

double bce_loss(const Matrix<double>& predictions, const Matrix<double>& truth) {
  if (predictions.rows() != truth.rows() || predictions.cols() != truth.cols()) {
    throw ContractError("bce_loss: shape mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double p = std::clamp(predictions.data()[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    const double y = truth.data()[i];
    total += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  }
  return total;
}

template <class T>
AttentionPooling<T> label_attention(const Matrix<T>& g, std::span<const T> w) {
  if (g.rows() == 0) throw ContractError("label_attention: empty token matrix");
  if (w.size() != g.cols()) throw ContractError("label_attention: dimension mismatch");
  AttentionPooling<T> out;
  out.scores.resize(g.rows());
  for (std::size_t j = 0; j < g.rows(); ++j) out.scores[j] = simd::dot<T>(g.row(j), w);
  T mx = *std::max_element(out.scores.begin(), out.scores.end());
  T sum = 0;
  for (T& s : out.scores) {
    s = std::exp(s - mx);
    sum += s;
  }
  for (T& s : out.scores) s /= sum;
  out.pooled.assign(g.cols(), T{0});
  for (std::size_t j = 0; j < g.rows(); ++j) simd::axpy<T>(out.scores[j], g.row(j), out.pooled);
  return out;
}

template <class T>
LabelScore predict_label(std::span<const T> v, std::span<const T> u) {
  if (v.size() != u.size()) throw ContractError("predict_label: dimension mismatch");
  const double d = std::sqrt(static_cast<double>(simd::squared_distance<T>(v, u)));
  return {d, sigmoid(-d)};
}

template <class T>
ProtoModel<T> init_model(const Vocabulary& vocab, const std::vector<std::string>& label_vocab,
                         ModelVariant variant, EncoderConfig config, std::uint64_t seed) {
  config.vocab_size = vocab.size();
  config.validate();
  std::mt19937_64 rng(seed);
  ProtoModel<T> m;
  m.variant = variant;
  m.config = config;
  m.vocab = vocab;
  m.label_vocab = label_vocab;
  m.label_train_freq.assign(label_vocab.size(), 0);
  m.params.encoder = init_encoder<T>(config, rng);
  const std::size_t c = label_vocab.size();
  const std::size_t d = config.output_dim;
  const double stddev = 1.0 / std::sqrt(static_cast<double>(d));
  if (uses_label_attention(variant)) {
    m.params.head.attention = Matrix<T>(c, d);
    fill_normal(m.params.head.attention, stddev, rng);
  }
  if (uses_prototypes(variant)) {
    m.params.head.prototypes = Matrix<T>(c, d);
    fill_normal(m.params.head.prototypes, stddev, rng);
  } else {
    m.params.head.linear_w = Matrix<T>(c, d);
    std::uniform_real_distribution<double> u(-stddev, stddev);
    for (T& x : m.params.head.linear_w.flat()) x = static_cast<T>(u(rng));
    m.params.head.linear_b = Matrix<T>(1, c);
  }
  return m;
}

template <class T>
ForwardCache<T> forward_cached(const ProtoModel<T>& model, std::span<const TokenId> tokens,
                               std::span<const LabelId> labels) {
  ForwardCache<T> cache;
  cache.encoded = encode(tokens, model.params.encoder, model.config);
  cache.labels = resolve_labels(model, labels);
  const auto& g = cache.encoded.g;
  const std::size_t rows = cache.labels.size();
  const auto& head = model.params.head;

  if (uses_label_attention(model.variant)) {
    const Matrix<T> w = select_rows(head.attention, cache.labels);
    cache.attention = Matrix<T>(rows, g.rows());
    gemm_nt(w, g, cache.attention);
    softmax_rows(cache.attention);
    cache.pooled = Matrix<T>(rows, g.cols());
    gemm_nn(cache.attention, g, cache.pooled);
  } else {
    cache.pooled = mean_rows(g);
  }

  cache.score.resize(rows);
  cache.probability.resize(rows);
  const bool labelwise = uses_label_attention(model.variant);
  for (std::size_t r = 0; r < rows; ++r) {
    const LabelId c = cache.labels[r];
    auto v = cache.pooled.row(labelwise ? r : 0);
    if (uses_prototypes(model.variant)) {
      const LabelScore s = predict_label<T>(v, head.prototypes.row(c));
      cache.score[r] = static_cast<T>(s.distance);
      cache.probability[r] = static_cast<T>(s.probability);
    } else {
      const T z = simd::dot<T>(v, head.linear_w.row(c)) + head.linear_b(0, c);
      cache.score[r] = z;
      cache.probability[r] = static_cast<T>(sigmoid(static_cast<double>(z)));
    }
  }
  return cache;
}

template <class T>
PredictionResult forward(const Document& doc, const ProtoModel<T>& model) {
  if (doc.tokens.empty()) throw ValidationError("forward: document '" + doc.id + "' has no token ids");
  auto cache = forward_cached(model, doc.tokens);
  PredictionResult out;
  out.score.assign(cache.score.begin(), cache.score.end());
  out.probability.assign(cache.probability.begin(), cache.probability.end());
  if (!cache.attention.empty()) out.attention = cache.attention.template cast<double>();
  for (TokenId t : doc.tokens) out.tokens.push_back(model.vocab.word(t));
  out.vocab_hash = model.vocab_hash();
  return out;
}

template <class T>
double label_probability(const ProtoModel<T>& model, std::span<const TokenId> tokens, LabelId label) {
  const LabelId one[1] = {label};
  return static_cast<double>(forward_cached(model, tokens, one).probability[0]);
}

template <class T>
Matrix<T> backward_from_scores(const ProtoModel<T>& model, const ForwardCache<T>& cache,
                               std::span<const T> dscore, Parameters<T>& grads) {
  const std::size_t rows = cache.labels.size();
  if (dscore.size() != rows) throw ContractError("backward_from_scores: dscore size mismatch");
  const auto& g = cache.encoded.g;
  const std::size_t n = g.rows();
  const std::size_t dim = g.cols();
  const auto& head = model.params.head;
  const bool labelwise = uses_label_attention(model.variant);

  // d objective / d pooled representation, per row (label-wise) or summed (plain).
  Matrix<T> dpooled(labelwise ? rows : 1, dim);
  for (std::size_t r = 0; r < rows; ++r) {
    const T ds = dscore[r];
    if (ds == T{0}) continue;
    const LabelId c = cache.labels[r];
    auto v = cache.pooled.row(labelwise ? r : 0);
    auto dv = dpooled.row(labelwise ? r : 0);
    if (uses_prototypes(model.variant)) {
      const T d = cache.score[r];
      if (d <= T{0}) continue;  // subgradient 0 at v == u
      auto u = head.prototypes.row(c);
      auto du = grads.head.prototypes.row(c);
      const T k = ds / d;
      for (std::size_t i = 0; i < dim; ++i) {
        const T diff = k * (v[i] - u[i]);
        dv[i] += diff;
        du[i] -= diff;
      }
    } else {
      simd::axpy<T>(ds, v, grads.head.linear_w.row(c));
      grads.head.linear_b(0, c) += ds;
      simd::axpy<T>(ds, head.linear_w.row(c), dv);
    }
  }

  Matrix<T> dg(n, dim);
  if (labelwise) {
    const auto& s = cache.attention;
    Matrix<T> ds(rows, n);
    gemm_nt(dpooled, g, ds);
    gemm_tn(s, dpooled, dg);
    Matrix<T> dz(rows, n);
    for (std::size_t r = 0; r < rows; ++r) {
      T weighted = 0;
      for (std::size_t j = 0; j < n; ++j) weighted += s(r, j) * ds(r, j);
      for (std::size_t j = 0; j < n; ++j) dz(r, j) = s(r, j) * (ds(r, j) - weighted);
    }
    const Matrix<T> w = select_rows(head.attention, cache.labels);
    Matrix<T> dw(rows, dim);
    gemm_nn(dz, g, dw);
    for (std::size_t r = 0; r < rows; ++r) {
      simd::axpy<T>(T{1}, dw.row(r), grads.head.attention.row(cache.labels[r]));
    }
    gemm_tn(dz, w, dg);
  } else {
    const T inv_n = T{1} / static_cast<T>(n);
    for (std::size_t j = 0; j < n; ++j) simd::axpy<T>(inv_n, dpooled.row(0), dg.row(j));
  }
  return encode_backward(cache.encoded, dg, model.params.encoder, model.config, grads.encoder);
}

template <class T>
double loss_and_gradient(const ProtoModel<T>& model, std::span<const TokenId> tokens,
                         std::span<const LabelId> truth, Parameters<T>& grads) {
  auto cache = forward_cached(model, tokens);
  const std::size_t c = model.n_labels();
  std::vector<T> dscore(c);
  double loss = 0.0;
  std::size_t ti = 0;
  for (LabelId label = 0; label < c; ++label) {
    while (ti < truth.size() && truth[ti] < label) ++ti;
    const bool positive = ti < truth.size() && truth[ti] == label;
    const double p = static_cast<double>(cache.probability[label]);
    loss += bce_term(p, positive);
    // Clamped region has zero gradient; inside it dL/dlogit = p - y.
    const bool clamped = p < kProbabilityClamp || p > 1.0 - kProbabilityClamp;
    const double dlogit = clamped ? 0.0 : p - (positive ? 1.0 : 0.0);
    // Prototype variants use logit = -distance.
    dscore[label] = static_cast<T>(uses_prototypes(model.variant) ? -dlogit : dlogit);
  }
  backward_from_scores(model, cache, std::span<const T>(dscore), grads);
  return loss;
}

template <class T>
double document_loss(const ProtoModel<T>& model, std::span<const TokenId> tokens,
                     std::span<const LabelId> truth) {
  auto cache = forward_cached(model, tokens);
  double loss = 0.0;
  std::size_t ti = 0;
  for (LabelId label = 0; label < model.n_labels(); ++label) {
    while (ti < truth.size() && truth[ti] < label) ++ti;
    const bool positive = ti < truth.size() && truth[ti] == label;
    loss += bce_term(static_cast<double>(cache.probability[label]), positive);
  }
  return loss;
}

template <class T>
Matrix<T> init_attention(const Corpus& train, const TfidfTable& tfidf, double h, const ProtoModel<T>& model,
                         std::mt19937_64& rng, AttentionInitReport* report) {
  const std::size_t n_labels = model.n_labels();
  const std::size_t dim = model.config.output_dim;
  const std::size_t vocab = model.vocab.size();
  if (tfidf.scores.rows() != n_labels || tfidf.scores.cols() != vocab) {
    throw ContractError("init_attention: TF-IDF table does not match model");
  }
  std::vector<std::vector<bool>> informative(n_labels, std::vector<bool>(vocab, false));
  AttentionInitReport local;
  local.informative_tokens.assign(n_labels, 0);
  local.occurrences.assign(n_labels, 0);
  local.fallback.assign(n_labels, false);
  for (LabelId c = 0; c < n_labels; ++c) {
    for (TokenId t : informative_tokens(c, tfidf, h)) informative[c][t] = true;
    local.informative_tokens[c] = informative_tokens(c, tfidf, h).size();
  }

  Matrix<double> sums(n_labels, dim);
  for (const auto& doc : train.documents) {
    if (doc.labels.empty()) continue;
    const auto enc = encode(std::span<const TokenId>(doc.tokens), model.params.encoder, model.config);
    for (LabelId c : doc.labels) {
      for (std::size_t j = 0; j < doc.tokens.size(); ++j) {
        if (!informative[c][doc.tokens[j]]) continue;
        auto row = enc.g.row(j);
        for (std::size_t i = 0; i < dim; ++i) sums(c, i) += static_cast<double>(row[i]);
        ++local.occurrences[c];
      }
    }
  }
  Matrix<T> w(n_labels, dim);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  for (LabelId c = 0; c < n_labels; ++c) {
    if (local.occurrences[c] == 0) {
      local.fallback[c] = true;
      for (std::size_t i = 0; i < dim; ++i) w(c, i) = static_cast<T>(normal(rng));
      continue;
    }
    const double inv = 1.0 / static_cast<double>(local.occurrences[c]);
    for (std::size_t i = 0; i < dim; ++i) w(c, i) = static_cast<T>(sums(c, i) * inv);
  }
  if (report) *report = std::move(local);
  return w;
}

template <class T>
Matrix<T> init_prototypes(const Corpus& train, const ProtoModel<T>& model, std::mt19937_64& rng, bool pooled) {
  const std::size_t n_labels = model.n_labels();
  const std::size_t dim = model.config.output_dim;
  const bool labelwise = uses_label_attention(model.variant) && !pooled;
  Matrix<double> sums(n_labels, dim);
  std::vector<std::size_t> counts(n_labels, 0);
  for (const auto& doc : train.documents) {
    if (doc.labels.empty()) continue;
    if (labelwise) {
      const auto cache = forward_cached(model, std::span<const TokenId>(doc.tokens),
                                        std::span<const LabelId>(doc.labels));
      for (std::size_t r = 0; r < doc.labels.size(); ++r) {
        const LabelId c = doc.labels[r];
        auto v = cache.pooled.row(r);
        for (std::size_t i = 0; i < dim; ++i) sums(c, i) += static_cast<double>(v[i]);
        ++counts[c];
      }
    } else {
      const auto enc = encode(std::span<const TokenId>(doc.tokens), model.params.encoder, model.config);
      const auto v = mean_rows(enc.g);
      for (LabelId c : doc.labels) {
        for (std::size_t i = 0; i < dim; ++i) sums(c, i) += static_cast<double>(v(0, i));
        ++counts[c];
      }
    }
  }
  Matrix<T> u(n_labels, dim);
  std::normal_distribution<double> normal(0.0, 0.01);
  for (LabelId c = 0; c < n_labels; ++c) {
    if (counts[c] == 0) {
      for (std::size_t i = 0; i < dim; ++i) u(c, i) = static_cast<T>(normal(rng));
      continue;
    }
    const double inv = 1.0 / static_cast<double>(counts[c]);
    for (std::size_t i = 0; i < dim; ++i) u(c, i) = static_cast<T>(sums(c, i) * inv);
  }
  return u;
}

#define PROTODX_INSTANTIATE_PROTONET(T)                                                                     \
  template ProtoModel<T> init_model<T>(const Vocabulary&, const std::vector<std::string>&, ModelVariant,    \
                                       EncoderConfig, std::uint64_t);                                       \
  template AttentionPooling<T> label_attention<T>(const Matrix<T>&, std::span<const T>);                    \
  template LabelScore predict_label<T>(std::span<const T>, std::span<const T>);                             \
  template ForwardCache<T> forward_cached<T>(const ProtoModel<T>&, std::span<const TokenId>,                \
                                             std::span<const LabelId>);                                     \
  template PredictionResult forward<T>(const Document&, const ProtoModel<T>&);                              \
  template double label_probability<T>(const ProtoModel<T>&, std::span<const TokenId>, LabelId);           \
  template Matrix<T> backward_from_scores<T>(const ProtoModel<T>&, const ForwardCache<T>&,                  \
                                             std::span<const T>, Parameters<T>&);                           \
  template double loss_and_gradient<T>(const ProtoModel<T>&, std::span<const TokenId>,                      \
                                       std::span<const LabelId>, Parameters<T>&);                           \
  template double document_loss<T>(const ProtoModel<T>&, std::span<const TokenId>, std::span<const LabelId>); \
  template Matrix<T> init_attention<T>(const Corpus&, const TfidfTable&, double, const ProtoModel<T>&,      \
                                       std::mt19937_64&, AttentionInitReport*);                             \
  template Matrix<T> init_prototypes<T>(const Corpus&, const ProtoModel<T>&, std::mt19937_64&, bool);

PROTODX_INSTANTIATE_PROTONET(float)
PROTODX_INSTANTIATE_PROTONET(double)

#undef PROTODX_INSTANTIATE_PROTONET

}  // namespace protodx
