// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

// Contextual token encoder: token embedding + fixed sinusoidal positions,
// n pre-norm self-attention blocks, then an affine reduction E -> D. Forward
// keeps every intermediate needed for the exact analytic backward pass.

#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "protodx/corpus.hpp"
#include "protodx/matrix.hpp"

namespace protodx {

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 64;
  std::size_t context_blocks = 1;
  std::size_t attention_heads = 4;
  std::size_t ff_dim = 0;  // 0 means 4 * embed_dim
  std::size_t output_dim = 32;
  std::size_t max_len = kDefaultMaxLen;

  std::size_t feed_forward_dim() const { return ff_dim == 0 ? 4 * embed_dim : ff_dim; }
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

inline constexpr double kLayerNormEps = 1e-5;

// tanh-approximated GELU: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <class T>
T gelu(T x);
template <class T>
T gelu_derivative(T x);

template <class T>
struct BlockParams {
  Matrix<T> ln1_gain, ln1_bias;  // 1 x E
  Matrix<T> wq, wk, wv, wo;      // E x E, x * W convention
  Matrix<T> ln2_gain, ln2_bias;  // 1 x E
  Matrix<T> ff1_w, ff1_b;        // E x F, 1 x F
  Matrix<T> ff2_w, ff2_b;        // F x E, 1 x E
};

template <class T>
struct EncoderParams {
  Matrix<T> embedding;  // V x E
  Matrix<T> positions;  // max_len x E, fixed; not a trainable tensor
  std::vector<BlockParams<T>> blocks;
  Matrix<T> reduce_w;  // E x D
  Matrix<T> reduce_b;  // 1 x D

  // Visits every trainable tensor with a stable name, in serialisation order.
  template <class F>
  void for_each(F&& f);
  template <class F>
  void for_each(F&& f) const;

  // Same shapes, all zero (positions left empty).
  EncoderParams zeros_like() const;

  template <class U>
  EncoderParams<U> cast() const;
};

Matrix<double> sinusoidal_positions(std::size_t max_len, std::size_t dim);

template <class T>
EncoderParams<T> init_encoder(const EncoderConfig& config, std::mt19937_64& rng);

template <class T>
struct BlockCache {
  Matrix<T> input;                 // x entering the block
  Matrix<T> ln1_hat, ln1_out;      // normalised and affine-transformed
  std::vector<T> ln1_rstd;
  Matrix<T> q, k, v;
  std::vector<Matrix<T>> probs;    // per head, n x n, rows on the simplex
  Matrix<T> heads;                 // concatenated head outputs, n x E
  Matrix<T> mid;                   // input + heads * wo
  Matrix<T> ln2_hat, ln2_out;
  std::vector<T> ln2_rstd;
  Matrix<T> ff_pre, ff_act;        // n x F
};

template <class T>
struct EncodedDocument {
  std::vector<TokenId> tokens;
  Matrix<T> x0;      // embedding + position
  std::vector<BlockCache<T>> blocks;
  Matrix<T> hidden;  // output of the last block (x0 when there are none)
  Matrix<T> g;       // n x D

  std::size_t n_tokens() const { return tokens.size(); }
};

template <class T>
EncodedDocument<T> encode(std::span<const TokenId> tokens, const EncoderParams<T>& params,
                          const EncoderConfig& config);

// Accumulates parameter gradients into `grads` (shaped like params) and
// returns d loss / d x0, the gradient with respect to each position's input
// embedding row.
template <class T>
Matrix<T> encode_backward(const EncodedDocument<T>& encoded, const Matrix<T>& upstream,
                          const EncoderParams<T>& params, const EncoderConfig& config,
                          EncoderParams<T>& grads);

// -------------------------------------------------------- gradient checking

struct TensorRef {
  std::string name;
  Matrix<double>* value;
  const Matrix<double>* grad;
};

struct GradCheckOptions {
  std::size_t samples_per_tensor = 200;
  double step = 1e-5;
  std::uint64_t seed = 1;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  std::size_t coordinates_checked = 0;
};

// Central differences of `loss` against the analytic gradients in `tensors`.
// Error per coordinate: |a - n| / max(1e-8, |a| + |n|).
GradCheckResult finite_difference_check(const std::vector<TensorRef>& tensors,
                                        const std::function<double()>& loss,
                                        const GradCheckOptions& options = {});

// Scalar probe over the encoder output: returns the loss and writes dL/dg.
using EncoderProbe = std::function<double(const Matrix<double>& g, Matrix<double>& grad_g)>;

// Default probe: sum_ij r_ij g_ij + 0.5 sum_ij g_ij^2 with fixed pseudo-random r.
EncoderProbe default_encoder_probe(std::uint64_t seed);

GradCheckResult grad_check(EncoderParams<double>& params, const EncoderConfig& config,
                           std::span<const TokenId> probe_doc, const EncoderProbe& probe,
                           const GradCheckOptions& options = {});

// ------------------------------------------------------------ template impl

template <class T>
template <class F>
void EncoderParams<T>::for_each(F&& f) {
  f(std::string("encoder.embedding"), embedding);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string p = "encoder.block" + std::to_string(b) + ".";
    auto& bp = blocks[b];
    f(p + "ln1_gain", bp.ln1_gain);
    f(p + "ln1_bias", bp.ln1_bias);
    f(p + "wq", bp.wq);
    f(p + "wk", bp.wk);
    f(p + "wv", bp.wv);
    f(p + "wo", bp.wo);
    f(p + "ln2_gain", bp.ln2_gain);
    f(p + "ln2_bias", bp.ln2_bias);
    f(p + "ff1_w", bp.ff1_w);
    f(p + "ff1_b", bp.ff1_b);
    f(p + "ff2_w", bp.ff2_w);
    f(p + "ff2_b", bp.ff2_b);
  }
  f(std::string("head.reduce_w"), reduce_w);
  f(std::string("head.reduce_b"), reduce_b);
}

template <class T>
template <class F>
void EncoderParams<T>::for_each(F&& f) const {
  const_cast<EncoderParams<T>*>(this)->for_each(
      [&](const std::string& name, Matrix<T>& m) { f(name, static_cast<const Matrix<T>&>(m)); });
}

template <class T>
EncoderParams<T> EncoderParams<T>::zeros_like() const {
  EncoderParams<T> out = *this;
  out.positions = Matrix<T>();
  out.for_each([](const std::string&, Matrix<T>& m) { m.fill(T{0}); });
  return out;
}

template <class T>
template <class U>
EncoderParams<U> EncoderParams<T>::cast() const {
  EncoderParams<U> out;
  out.embedding = embedding.template cast<U>();
  out.positions = positions.template cast<U>();
  for (const auto& b : blocks) {
    BlockParams<U> c;
    c.ln1_gain = b.ln1_gain.template cast<U>();
    c.ln1_bias = b.ln1_bias.template cast<U>();
    c.wq = b.wq.template cast<U>();
    c.wk = b.wk.template cast<U>();
    c.wv = b.wv.template cast<U>();
    c.wo = b.wo.template cast<U>();
    c.ln2_gain = b.ln2_gain.template cast<U>();
    c.ln2_bias = b.ln2_bias.template cast<U>();
    c.ff1_w = b.ff1_w.template cast<U>();
    c.ff1_b = b.ff1_b.template cast<U>();
    c.ff2_w = b.ff2_w.template cast<U>();
    c.ff2_b = b.ff2_b.template cast<U>();
    out.blocks.push_back(std::move(c));
  }
  out.reduce_w = reduce_w.template cast<U>();
  out.reduce_b = reduce_b.template cast<U>();
  return out;
}

}  // namespace protodx
