// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "protodx/encoder.hpp"
#include "protodx/errors.hpp"
#include "test_util.hpp"

namespace protodx {
namespace {

using Mat = std::vector<std::vector<double>>;

// ---------------------------------------------------------------------------
// Reference forward pass written from the textbook definitions with plain
// nested vectors; shares nothing with the library beyond parameter storage.

Mat to_mat(const Matrix<double>& m) {
  Mat out(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

Mat matmul(const Mat& a, const Mat& b) {
  Mat out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j) {
      long double s = 0;
      for (std::size_t k = 0; k < b.size(); ++k) s += static_cast<long double>(a[i][k]) * b[k][j];
      out[i][j] = static_cast<double>(s);
    }
  return out;
}

Mat add(const Mat& a, const Mat& b) {
  Mat out = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) out[i][j] += b[i][j];
  return out;
}

Mat add_bias(const Mat& a, const Matrix<double>& bias) {
  Mat out = a;
  for (auto& row : out)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias(0, j);
  return out;
}

Mat layer_norm(const Mat& x, const Matrix<double>& gain, const Matrix<double>& bias) {
  Mat out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = static_cast<double>(x[i].size());
    double mean = 0;
    for (double v : x[i]) mean += v / e;
    double var = 0;
    for (double v : x[i]) var += (v - mean) * (v - mean) / e;
    for (std::size_t j = 0; j < x[i].size(); ++j) {
      out[i][j] = (x[i][j] - mean) / std::sqrt(var + 1e-5) * gain(0, j) + bias(0, j);
    }
  }
  return out;
}

double ref_gelu(double x) {
  const double pi = std::acos(-1.0);
  return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / pi) * (x + 0.044715 * x * x * x)));
}

Mat attention(const Mat& x, const BlockParams<double>& p, std::size_t heads) {
  const Mat q = matmul(x, to_mat(p.wq));
  const Mat k = matmul(x, to_mat(p.wk));
  const Mat v = matmul(x, to_mat(p.wv));
  const std::size_t n = x.size();
  const std::size_t e = x[0].size();
  const std::size_t dh = e / heads;
  Mat concat(n, std::vector<double>(e, 0.0));
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> logits(n);
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0;
        for (std::size_t d = 0; d < dh; ++d) s += q[i][h * dh + d] * k[j][h * dh + d];
        logits[j] = s / std::sqrt(static_cast<double>(dh));
      }
      double z = 0;
      for (double l : logits) z += std::exp(l);
      for (std::size_t j = 0; j < n; ++j) {
        const double w = std::exp(logits[j]) / z;
        for (std::size_t d = 0; d < dh; ++d) concat[i][h * dh + d] += w * v[j][h * dh + d];
      }
    }
  }
  return matmul(concat, to_mat(p.wo));
}

Mat reference_forward(const std::vector<TokenId>& tokens, const EncoderParams<double>& p,
                      const EncoderConfig& cfg) {
  const std::size_t e = cfg.embed_dim;
  Mat x(tokens.size(), std::vector<double>(e));
  for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
    for (std::size_t i = 0; i < e; ++i) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(e));
      x[pos][i] = p.embedding(tokens[pos], i) + (i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  for (const auto& b : p.blocks) {
    const Mat mid = add(x, attention(layer_norm(x, b.ln1_gain, b.ln1_bias), b, cfg.attention_heads));
    Mat hidden = add_bias(matmul(layer_norm(mid, b.ln2_gain, b.ln2_bias), to_mat(b.ff1_w)), b.ff1_b);
    for (auto& row : hidden)
      for (double& v : row) v = ref_gelu(v);
    x = add(mid, add_bias(matmul(hidden, to_mat(b.ff2_w)), b.ff2_b));
  }
  return add_bias(matmul(x, to_mat(p.reduce_w)), p.reduce_b);
}

EncoderConfig config_for(std::size_t vocab, std::size_t blocks, std::size_t e, std::size_t h, std::size_t d) {
  auto c = testing::small_config(blocks, e, h, d);
  c.vocab_size = vocab;
  return c;
}

EncoderParams<double> random_params(const EncoderConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto p = init_encoder<double>(cfg, rng);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  p.for_each([&](const std::string& name, Matrix<double>& m) {
    if (name.find("ln") != std::string::npos || name.find("_b") != std::string::npos) {
      for (double& x : m.flat()) x += u(rng);
    }
  });
  return p;
}

TEST(Encoder, PositionsAreSinusoidal) {
  auto pe = sinusoidal_positions(8, 6);
  EXPECT_EQ(pe(0, 0), 0.0);
  EXPECT_EQ(pe(0, 1), 1.0);
  EXPECT_NEAR(pe(3, 2), std::sin(3.0 / std::pow(10000.0, 2.0 / 6.0)), 1e-15);
  EXPECT_NEAR(pe(5, 5), std::cos(5.0 / std::pow(10000.0, 4.0 / 6.0)), 1e-15);
}

TEST(Encoder, ZeroBlocksZeroWeightsGiveBias) {
  auto cfg = config_for(10, 0, 8, 2, 4);
  std::mt19937_64 rng(1);
  auto p = init_encoder<double>(cfg, rng);
  p.embedding.fill(0.0);
  p.reduce_w.fill(0.0);
  for (std::size_t j = 0; j < 4; ++j) p.reduce_b(0, j) = 0.25 * static_cast<double>(j) - 1.0;
  const std::vector<TokenId> tokens{3, 4, 5, 9};
  auto enc = encode<double>(tokens, p, cfg);
  for (std::size_t i = 0; i < tokens.size(); ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(enc.g(i, j), p.reduce_b(0, j));
}

TEST(Encoder, SingleTokenAttendsToItself) {
  auto cfg = config_for(10, 1, 8, 2, 4);
  auto p = random_params(cfg, 2);
  const std::vector<TokenId> tokens{7};
  auto enc = encode<double>(tokens, p, cfg);
  for (const auto& probs : enc.blocks[0].probs) {
    ASSERT_EQ(probs.rows(), 1u);
    EXPECT_EQ(probs(0, 0), 1.0);
  }
}

TEST(Encoder, MatchesReferenceForward) {
  for (std::size_t blocks : {0u, 1u, 2u}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto cfg = config_for(12, blocks, 8, 2, 4);
      auto p = random_params(cfg, seed);
      std::mt19937_64 rng(seed + 100);
      for (std::size_t n : {1u, 2u, 5u}) {
        const auto tokens = testing::random_tokens(rng, n, 12);
        const auto got = encode<double>(tokens, p, cfg).g;
        const auto want = reference_forward(tokens, p, cfg);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(got(i, j), want[i][j], 1e-10);
      }
    }
  }
}

TEST(Encoder, AttentionRowsAreDistributions) {
  auto cfg = config_for(30, 2, 16, 4, 8);
  auto p = random_params(cfg, 9);
  std::mt19937_64 rng(4);
  const auto tokens = testing::random_tokens(rng, 11, 30);
  auto enc = encode<double>(tokens, p, cfg);
  for (const auto& b : enc.blocks) {
    ASSERT_EQ(b.probs.size(), 4u);
    for (const auto& pr : b.probs) {
      for (std::size_t i = 0; i < pr.rows(); ++i) {
        double s = 0;
        for (double v : pr.row(i)) {
          EXPECT_GE(v, 0.0);
          s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
}

TEST(Encoder, WithoutBlocksTokensAreIndependentOfContext) {
  auto cfg = config_for(20, 0, 8, 2, 4);
  auto p = random_params(cfg, 3);
  const std::vector<TokenId> a{5, 6, 7}, b{5, 9, 10};
  auto ga = encode<double>(a, p, cfg).g;
  auto gb = encode<double>(b, p, cfg).g;
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(ga(0, j), gb(0, j));
}

TEST(Encoder, InputErrors) {
  auto cfg = config_for(10, 1, 8, 2, 4);
  auto p = random_params(cfg, 1);
  EXPECT_THROW(encode<double>(std::vector<TokenId>{}, p, cfg), ValidationError);
  EXPECT_THROW(encode<double>(std::vector<TokenId>{3, 10}, p, cfg), ValidationError);
  EXPECT_THROW(encode<double>(std::vector<TokenId>(65, 3), p, cfg), ValidationError);
}

TEST(Encoder, ConfigValidation) {
  auto cfg = config_for(10, 1, 8, 3, 4);
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = config_for(2, 1, 8, 2, 4);
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = config_for(10, 3, 8, 2, 4);
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_NO_THROW(config_for(10, 2, 8, 2, 4).validate());
}

TEST(Encoder, DeterministicInit) {
  auto cfg = config_for(10, 1, 8, 2, 4);
  std::mt19937_64 r1(5), r2(5);
  auto a = init_encoder<double>(cfg, r1);
  auto b = init_encoder<double>(cfg, r2);
  EXPECT_EQ(a.embedding, b.embedding);
  EXPECT_EQ(a.blocks[0].wq, b.blocks[0].wq);
  for (double v : a.embedding.flat()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(EncoderBackward, ZeroUpstreamGivesZeroGradients) {
  auto cfg = config_for(10, 2, 8, 2, 4);
  auto p = random_params(cfg, 6);
  const std::vector<TokenId> tokens{3, 4, 5};
  auto enc = encode<double>(tokens, p, cfg);
  auto grads = p.zeros_like();
  auto dx = encode_backward(enc, Matrix<double>(3, 4), p, cfg, grads);
  for (double v : dx.flat()) EXPECT_EQ(v, 0.0);
  grads.for_each([](const std::string& name, const Matrix<double>& m) {
    for (double v : m.flat()) EXPECT_EQ(v, 0.0) << name;
  });
}

TEST(EncoderBackward, ShapeMismatchIsContractError) {
  auto cfg = config_for(10, 1, 8, 2, 4);
  auto p = random_params(cfg, 6);
  const std::vector<TokenId> tokens{3, 4};
  auto enc = encode<double>(tokens, p, cfg);
  auto grads = p.zeros_like();
  EXPECT_THROW(encode_backward(enc, Matrix<double>(3, 4), p, cfg, grads), ContractError);
}

TEST(EncoderBackward, LinearCaseEmbeddingGradientIsClosedForm) {
  // n = 0: g_j = (E[t_j] + P_j) Wr + br, so dL/dE[t] = sum_{j: t_j = t} up_j Wr^T.
  auto cfg = config_for(10, 0, 6, 2, 3);
  auto p = random_params(cfg, 8);
  const std::vector<TokenId> tokens{4, 7, 4};
  auto enc = encode<double>(tokens, p, cfg);
  Matrix<double> up(3, 3);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (double& v : up.flat()) v = u(rng);
  auto grads = p.zeros_like();
  encode_backward(enc, up, p, cfg, grads);
  for (std::size_t i = 0; i < 6; ++i) {
    double want4 = 0, want7 = 0;
    for (std::size_t d = 0; d < 3; ++d) {
      want4 += (up(0, d) + up(2, d)) * p.reduce_w(i, d);
      want7 += up(1, d) * p.reduce_w(i, d);
    }
    EXPECT_NEAR(grads.embedding(4, i), want4, 1e-14);
    EXPECT_NEAR(grads.embedding(7, i), want7, 1e-14);
    EXPECT_EQ(grads.embedding(5, i), 0.0);
  }
}

TEST(GradCheck, LinearModelIsExact) {
  auto cfg = config_for(10, 0, 8, 2, 4);
  auto p = random_params(cfg, 1);
  const std::vector<TokenId> tokens{3, 5, 8, 3, 9, 4};
  auto r = grad_check(p, cfg, tokens, default_encoder_probe(7));
  EXPECT_LT(r.max_rel_error, 1e-9) << r.worst_tensor;
  EXPECT_GT(r.coordinates_checked, 0u);
}

TEST(GradCheck, FullEncoderAcrossSeeds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto cfg = config_for(12, seed % 2 + 1, 16, 2, 8);
    auto p = random_params(cfg, seed);
    std::mt19937_64 rng(seed);
    const auto tokens = testing::random_tokens(rng, 6, 12);
    GradCheckOptions opt;
    opt.seed = seed;
    auto r = grad_check(p, cfg, tokens, default_encoder_probe(seed), opt);
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed << " " << r.worst_tensor << "[" << r.worst_index << "]";
  }
}

TEST(GradCheck, DetectsSignFlippedGradient) {
  auto cfg = config_for(10, 1, 8, 2, 4);
  auto p = random_params(cfg, 2);
  const std::vector<TokenId> tokens{3, 4, 5};
  const auto probe = default_encoder_probe(3);
  auto grads = p.zeros_like();
  auto enc = encode<double>(tokens, p, cfg);
  Matrix<double> dg;
  probe(enc.g, dg);
  encode_backward(enc, dg, p, cfg, grads);
  for (double& v : grads.reduce_w.flat()) v = -v;
  auto loss = [&] {
    Matrix<double> unused;
    return probe(encode<double>(tokens, p, cfg).g, unused);
  };
  // |a - n| / (|a| + |n|) saturates at 1 when a = -n.
  auto r = finite_difference_check({{"reduce_w", &p.reduce_w, &grads.reduce_w}}, loss);
  EXPECT_NEAR(r.max_rel_error, 1.0, 1e-6);
}

TEST(GradCheck, NonFiniteLossIsNumericError) {
  Matrix<double> x(1, 1, 1.0), g(1, 1, 1.0);
  auto loss = [] { return std::numeric_limits<double>::quiet_NaN(); };
  EXPECT_THROW(finite_difference_check({{"x", &x, &g}}, loss), NumericError);
}

TEST(Gelu, DerivativeMatchesFiniteDifference) {
  for (double x = -4.0; x <= 4.0; x += 0.37) {
    const double h = 1e-6;
    const double fd = (gelu(x + h) - gelu(x - h)) / (2 * h);
    EXPECT_NEAR(gelu_derivative(x), fd, 1e-8) << x;
    EXPECT_NEAR(gelu(x), ref_gelu(x), 1e-15);
  }
}

}  // namespace
}  // namespace protodx
