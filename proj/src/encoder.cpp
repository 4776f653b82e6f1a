// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

#include "protodx/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "protodx/errors.hpp"

namespace protodx {

void EncoderConfig::validate() const {
  if (vocab_size <= kFirstWordId - 1) throw ConfigError("encoder: vocab_size must cover reserved ids");
  if (embed_dim == 0 || output_dim == 0 || max_len == 0) throw ConfigError("encoder: zero dimension");
  if (attention_heads == 0 || embed_dim % attention_heads != 0) {
    throw ConfigError("encoder: attention_heads must divide embed_dim");
  }
  if (context_blocks > 2) throw ConfigError("encoder: context_blocks must be 0, 1 or 2");
}

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

template <class T>
void fill_uniform(Matrix<T>& m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (T& x : m.flat()) x = static_cast<T>(u(rng));
}

template <class T>
Matrix<T> row_vector(std::size_t n, T value) {
  return Matrix<T>(1, n, value);
}

template <class T>
void add_row_bias(Matrix<T>& m, const Matrix<T>& bias) {
  for (std::size_t i = 0; i < m.rows(); ++i) simd::axpy<T>(T{1}, bias.row(0), m.row(i));
}

template <class T>
void accumulate_column_sums(const Matrix<T>& m, Matrix<T>& out) {
  for (std::size_t i = 0; i < m.rows(); ++i) simd::axpy<T>(T{1}, m.row(i), out.row(0));
}

template <class T>
void layer_norm(const Matrix<T>& x, const Matrix<T>& gain, const Matrix<T>& bias, Matrix<T>& hat,
                Matrix<T>& out, std::vector<T>& rstd) {
  const std::size_t n = x.rows();
  const std::size_t e = x.cols();
  hat = Matrix<T>(n, e);
  out = Matrix<T>(n, e);
  rstd.assign(n, T{0});
  for (std::size_t i = 0; i < n; ++i) {
    auto xi = x.row(i);
    T mean = 0;
    for (T v : xi) mean += v;
    mean /= static_cast<T>(e);
    T var = 0;
    for (T v : xi) var += (v - mean) * (v - mean);
    var /= static_cast<T>(e);
    const T r = T{1} / std::sqrt(var + static_cast<T>(kLayerNormEps));
    rstd[i] = r;
    for (std::size_t j = 0; j < e; ++j) {
      hat(i, j) = (xi[j] - mean) * r;
      out(i, j) = hat(i, j) * gain(0, j) + bias(0, j);
    }
  }
}

// Returns dx; accumulates gain/bias gradients.
template <class T>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const Matrix<T>& hat, const std::vector<T>& rstd,
                              const Matrix<T>& gain, Matrix<T>& dgain, Matrix<T>& dbias) {
  const std::size_t n = dy.rows();
  const std::size_t e = dy.cols();
  Matrix<T> dx(n, e);
  std::vector<T> dhat(e);
  for (std::size_t i = 0; i < n; ++i) {
    T mean_dhat = 0;
    T mean_dhat_hat = 0;
    for (std::size_t j = 0; j < e; ++j) {
      dgain(0, j) += dy(i, j) * hat(i, j);
      dbias(0, j) += dy(i, j);
      dhat[j] = dy(i, j) * gain(0, j);
      mean_dhat += dhat[j];
      mean_dhat_hat += dhat[j] * hat(i, j);
    }
    mean_dhat /= static_cast<T>(e);
    mean_dhat_hat /= static_cast<T>(e);
    for (std::size_t j = 0; j < e; ++j) {
      dx(i, j) = rstd[i] * (dhat[j] - mean_dhat - hat(i, j) * mean_dhat_hat);
    }
  }
  return dx;
}

template <class T>
void softmax_inplace(std::span<T> row) {
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

template <class T>
void block_forward(const Matrix<T>& x, const BlockParams<T>& p, const EncoderConfig& cfg, BlockCache<T>& c,
                   Matrix<T>& out) {
  const std::size_t n = x.rows();
  const std::size_t e = cfg.embed_dim;
  const std::size_t heads = cfg.attention_heads;
  const std::size_t dh = e / heads;
  const std::size_t f = cfg.feed_forward_dim();
  const auto& kern = simd::active_kernels<T>();
  const T inv_sqrt = T{1} / std::sqrt(static_cast<T>(dh));

  c.input = x;
  layer_norm(x, p.ln1_gain, p.ln1_bias, c.ln1_hat, c.ln1_out, c.ln1_rstd);
  c.q = Matrix<T>(n, e);
  c.k = Matrix<T>(n, e);
  c.v = Matrix<T>(n, e);
  gemm_nn(c.ln1_out, p.wq, c.q);
  gemm_nn(c.ln1_out, p.wk, c.k);
  gemm_nn(c.ln1_out, p.wv, c.v);

  c.heads = Matrix<T>(n, e);
  c.probs.assign(heads, Matrix<T>(n, n));
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    auto& pr = c.probs[h];
    for (std::size_t i = 0; i < n; ++i) {
      const T* qi = c.q.row(i).data() + off;
      for (std::size_t j = 0; j < n; ++j) pr(i, j) = kern.dot(qi, c.k.row(j).data() + off, dh) * inv_sqrt;
      softmax_inplace(pr.row(i));
      T* oi = c.heads.row(i).data() + off;
      for (std::size_t j = 0; j < n; ++j) kern.axpy(pr(i, j), c.v.row(j).data() + off, oi, dh);
    }
  }
  c.mid = x;
  gemm_nn(c.heads, p.wo, c.mid);

  layer_norm(c.mid, p.ln2_gain, p.ln2_bias, c.ln2_hat, c.ln2_out, c.ln2_rstd);
  c.ff_pre = Matrix<T>(n, f);
  gemm_nn(c.ln2_out, p.ff1_w, c.ff_pre);
  add_row_bias(c.ff_pre, p.ff1_b);
  c.ff_act = Matrix<T>(n, f);
  for (std::size_t i = 0; i < c.ff_pre.size(); ++i) c.ff_act.data()[i] = gelu(c.ff_pre.data()[i]);
  out = c.mid;
  gemm_nn(c.ff_act, p.ff2_w, out);
  add_row_bias(out, p.ff2_b);
}

// dout: gradient w.r.t. block output. Returns gradient w.r.t. block input.
template <class T>
Matrix<T> block_backward(const Matrix<T>& dout, const BlockParams<T>& p, const EncoderConfig& cfg,
                         const BlockCache<T>& c, BlockParams<T>& g) {
  const std::size_t n = dout.rows();
  const std::size_t e = cfg.embed_dim;
  const std::size_t heads = cfg.attention_heads;
  const std::size_t dh = e / heads;
  const std::size_t f = cfg.feed_forward_dim();
  const auto& kern = simd::active_kernels<T>();
  const T inv_sqrt = T{1} / std::sqrt(static_cast<T>(dh));

  // Feed-forward branch: out = mid + gelu(ln2 W1 + b1) W2 + b2.
  Matrix<T> dmid = dout;
  accumulate_column_sums(dout, g.ff2_b);
  gemm_tn(c.ff_act, dout, g.ff2_w);
  Matrix<T> dact(n, f);
  gemm_nt(dout, p.ff2_w, dact);
  for (std::size_t i = 0; i < dact.size(); ++i) dact.data()[i] *= gelu_derivative(c.ff_pre.data()[i]);
  accumulate_column_sums(dact, g.ff1_b);
  gemm_tn(c.ln2_out, dact, g.ff1_w);
  Matrix<T> dln2(n, e);
  gemm_nt(dact, p.ff1_w, dln2);
  add_inplace(dmid, layer_norm_backward(dln2, c.ln2_hat, c.ln2_rstd, p.ln2_gain, g.ln2_gain, g.ln2_bias));

  // Attention branch: mid = input + heads Wo.
  Matrix<T> dinput = dmid;
  gemm_tn(c.heads, dmid, g.wo);
  Matrix<T> dheads(n, e);
  gemm_nt(dmid, p.wo, dheads);

  Matrix<T> dq(n, e), dk(n, e), dv(n, e);
  std::vector<T> dp(n);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    const auto& pr = c.probs[h];
    for (std::size_t i = 0; i < n; ++i) {
      const T* doi = dheads.row(i).data() + off;
      T weighted = 0;
      for (std::size_t j = 0; j < n; ++j) {
        dp[j] = kern.dot(doi, c.v.row(j).data() + off, dh);
        weighted += dp[j] * pr(i, j);
        kern.axpy(pr(i, j), doi, dv.row(j).data() + off, dh);
      }
      T* dqi = dq.row(i).data() + off;
      const T* qi = c.q.row(i).data() + off;
      for (std::size_t j = 0; j < n; ++j) {
        const T ds = pr(i, j) * (dp[j] - weighted) * inv_sqrt;
        if (ds == T{0}) continue;
        kern.axpy(ds, c.k.row(j).data() + off, dqi, dh);
        kern.axpy(ds, qi, dk.row(j).data() + off, dh);
      }
    }
  }
  gemm_tn(c.ln1_out, dq, g.wq);
  gemm_tn(c.ln1_out, dk, g.wk);
  gemm_tn(c.ln1_out, dv, g.wv);
  Matrix<T> dln1(n, e);
  gemm_nt(dq, p.wq, dln1);
  gemm_nt(dk, p.wk, dln1);
  gemm_nt(dv, p.wv, dln1);
  add_inplace(dinput, layer_norm_backward(dln1, c.ln1_hat, c.ln1_rstd, p.ln1_gain, g.ln1_gain, g.ln1_bias));
  return dinput;
}

}  // namespace

template <class T>
T gelu(T x) {
  const T u = static_cast<T>(kGeluC) * (x + static_cast<T>(kGeluA) * x * x * x);
  return static_cast<T>(0.5) * x * (T{1} + std::tanh(u));
}

template <class T>
T gelu_derivative(T x) {
  const T u = static_cast<T>(kGeluC) * (x + static_cast<T>(kGeluA) * x * x * x);
  const T t = std::tanh(u);
  const T du = static_cast<T>(kGeluC) * (T{1} + static_cast<T>(3.0 * kGeluA) * x * x);
  return static_cast<T>(0.5) * (T{1} + t) + static_cast<T>(0.5) * x * (T{1} - t * t) * du;
}

Matrix<double> sinusoidal_positions(std::size_t max_len, std::size_t dim) {
  Matrix<double> pe(max_len, dim);
  for (std::size_t pos = 0; pos < max_len; ++pos) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double angle = static_cast<double>(pos) * freq;
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

template <class T>
EncoderParams<T> init_encoder(const EncoderConfig& config, std::mt19937_64& rng) {
  config.validate();
  const std::size_t e = config.embed_dim;
  const std::size_t f = config.feed_forward_dim();
  const std::size_t d = config.output_dim;
  EncoderParams<T> p;
  // A lookup row has fan-in 1, so embeddings are U(-1, 1).
  p.embedding = Matrix<T>(config.vocab_size, e);
  fill_uniform(p.embedding, 1.0, rng);
  p.positions = sinusoidal_positions(config.max_len, e).cast<T>();
  for (std::size_t b = 0; b < config.context_blocks; ++b) {
    BlockParams<T> bp;
    bp.ln1_gain = row_vector<T>(e, T{1});
    bp.ln1_bias = row_vector<T>(e, T{0});
    bp.ln2_gain = row_vector<T>(e, T{1});
    bp.ln2_bias = row_vector<T>(e, T{0});
    for (Matrix<T>* w : {&bp.wq, &bp.wk, &bp.wv, &bp.wo}) {
      *w = Matrix<T>(e, e);
      fill_uniform(*w, 1.0 / std::sqrt(static_cast<double>(e)), rng);
    }
    bp.ff1_w = Matrix<T>(e, f);
    fill_uniform(bp.ff1_w, 1.0 / std::sqrt(static_cast<double>(e)), rng);
    bp.ff1_b = row_vector<T>(f, T{0});
    bp.ff2_w = Matrix<T>(f, e);
    fill_uniform(bp.ff2_w, 1.0 / std::sqrt(static_cast<double>(f)), rng);
    bp.ff2_b = row_vector<T>(e, T{0});
    p.blocks.push_back(std::move(bp));
  }
  p.reduce_w = Matrix<T>(e, d);
  fill_uniform(p.reduce_w, 1.0 / std::sqrt(static_cast<double>(e)), rng);
  p.reduce_b = row_vector<T>(d, T{0});
  return p;
}

template <class T>
EncodedDocument<T> encode(std::span<const TokenId> tokens, const EncoderParams<T>& params,
                          const EncoderConfig& config) {
  if (tokens.empty()) throw ValidationError("encode: empty token sequence");
  if (tokens.size() > config.max_len) throw ValidationError("encode: sequence longer than max_len");
  const std::size_t n = tokens.size();
  const std::size_t e = config.embed_dim;
  EncodedDocument<T> out;
  out.tokens.assign(tokens.begin(), tokens.end());
  out.x0 = Matrix<T>(n, e);
  for (std::size_t j = 0; j < n; ++j) {
    if (tokens[j] >= params.embedding.rows()) throw ValidationError("encode: token id outside vocabulary");
    auto row = out.x0.row(j);
    auto emb = params.embedding.row(tokens[j]);
    auto pos = params.positions.row(j);
    for (std::size_t i = 0; i < e; ++i) row[i] = emb[i] + pos[i];
  }
  out.blocks.resize(params.blocks.size());
  Matrix<T> x = out.x0;
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    Matrix<T> next;
    block_forward(x, params.blocks[b], config, out.blocks[b], next);
    x = std::move(next);
  }
  out.hidden = std::move(x);
  out.g = Matrix<T>(n, config.output_dim);
  gemm_nn(out.hidden, params.reduce_w, out.g);
  add_row_bias(out.g, params.reduce_b);
  return out;
}

template <class T>
Matrix<T> encode_backward(const EncodedDocument<T>& encoded, const Matrix<T>& upstream,
                          const EncoderParams<T>& params, const EncoderConfig& config,
                          EncoderParams<T>& grads) {
  if (upstream.rows() != encoded.g.rows() || upstream.cols() != encoded.g.cols()) {
    throw ContractError("encode_backward: upstream shape does not match g");
  }
  const std::size_t n = encoded.n_tokens();
  accumulate_column_sums(upstream, grads.reduce_b);
  gemm_tn(encoded.hidden, upstream, grads.reduce_w);
  Matrix<T> dx(n, config.embed_dim);
  gemm_nt(upstream, params.reduce_w, dx);
  for (std::size_t b = params.blocks.size(); b-- > 0;) {
    dx = block_backward(dx, params.blocks[b], config, encoded.blocks[b], grads.blocks[b]);
  }
  for (std::size_t j = 0; j < n; ++j) {
    simd::axpy<T>(T{1}, dx.row(j), grads.embedding.row(encoded.tokens[j]));
  }
  return dx;
}

// ------------------------------------------------------- gradient checking

GradCheckResult finite_difference_check(const std::vector<TensorRef>& tensors,
                                        const std::function<double()>& loss,
                                        const GradCheckOptions& options) {
  GradCheckResult result;
  std::mt19937_64 rng(options.seed);
  for (const auto& ref : tensors) {
    if (ref.value->size() != ref.grad->size()) throw ContractError("grad check: gradient shape mismatch");
    const std::size_t size = ref.value->size();
    std::vector<std::size_t> coords;
    if (size <= options.samples_per_tensor) {
      coords.resize(size);
      for (std::size_t i = 0; i < size; ++i) coords[i] = i;
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, size - 1);
      for (std::size_t i = 0; i < options.samples_per_tensor; ++i) coords.push_back(pick(rng));
    }
    for (std::size_t idx : coords) {
      double& x = ref.value->data()[idx];
      const double saved = x;
      x = saved + options.step;
      const double up = loss();
      x = saved - options.step;
      const double down = loss();
      x = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("grad check: non-finite loss at " + ref.name + "[" + std::to_string(idx) + "]");
      }
      const double numeric = (up - down) / (2.0 * options.step);
      const double analytic = ref.grad->data()[idx];
      if (!std::isfinite(analytic)) {
        throw NumericError("grad check: non-finite gradient at " + ref.name + "[" + std::to_string(idx) + "]");
      }
      const double err =
          std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      ++result.coordinates_checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_tensor = ref.name;
        result.worst_index = idx;
      }
    }
  }
  return result;
}

EncoderProbe default_encoder_probe(std::uint64_t seed) {
  return [seed](const Matrix<double>& g, Matrix<double>& grad_g) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    grad_g = Matrix<double>(g.rows(), g.cols());
    double loss = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double r = u(rng);
      const double v = g.data()[i];
      loss += r * v + 0.5 * v * v;
      grad_g.data()[i] = r + v;
    }
    return loss;
  };
}

GradCheckResult grad_check(EncoderParams<double>& params, const EncoderConfig& config,
                           std::span<const TokenId> probe_doc, const EncoderProbe& probe,
                           const GradCheckOptions& options) {
  EncoderParams<double> grads = params.zeros_like();
  {
    auto enc = encode(probe_doc, params, config);
    Matrix<double> dg;
    probe(enc.g, dg);
    encode_backward(enc, dg, params, config, grads);
  }
  std::vector<TensorRef> refs;
  std::vector<const Matrix<double>*> grad_list;
  grads.for_each([&](const std::string&, const Matrix<double>& m) { grad_list.push_back(&m); });
  std::size_t i = 0;
  params.for_each([&](const std::string& name, Matrix<double>& m) {
    refs.push_back({name, &m, grad_list[i++]});
  });
  auto loss = [&] {
    auto enc = encode(probe_doc, params, config);
    Matrix<double> dg;
    return probe(enc.g, dg);
  };
  return finite_difference_check(refs, loss, options);
}

#define PROTODX_INSTANTIATE_ENCODER(T)                                                             \
  template T gelu<T>(T);                                                                            \
  template T gelu_derivative<T>(T);                                                                 \
  template EncoderParams<T> init_encoder<T>(const EncoderConfig&, std::mt19937_64&);                \
  template EncodedDocument<T> encode<T>(std::span<const TokenId>, const EncoderParams<T>&,          \
                                        const EncoderConfig&);                                      \
  template Matrix<T> encode_backward<T>(const EncodedDocument<T>&, const Matrix<T>&,                \
                                        const EncoderParams<T>&, const EncoderConfig&, EncoderParams<T>&);

PROTODX_INSTANTIATE_ENCODER(float)
PROTODX_INSTANTIATE_ENCODER(double)

#undef PROTODX_INSTANTIATE_ENCODER

}  // namespace protodx
