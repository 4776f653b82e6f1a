// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "protodx/errors.hpp"
#include "protodx/protonet.hpp"
#include "test_util.hpp"

namespace protodx {
namespace {

constexpr ModelVariant kVariants[] = {ModelVariant::kProtoLabelwise, ModelVariant::kProtoPlain,
                                      ModelVariant::kLinearLabelwise, ModelVariant::kLinearPlain};

Matrix<double> rows(std::initializer_list<std::vector<double>> r) {
  Matrix<double> m(r.size(), r.begin()->size());
  std::size_t i = 0;
  for (const auto& row : r) {
    for (std::size_t j = 0; j < row.size(); ++j) m(i, j) = row[j];
    ++i;
  }
  return m;
}

TEST(LabelAttention, SingleTokenIsThatRow) {
  const auto g = rows({{0.3, -2.0, 5.0}});
  const std::vector<double> w{1, 2, 3};
  auto a = label_attention<double>(g, w);
  EXPECT_EQ(a.scores, std::vector<double>{1.0});
  EXPECT_EQ(a.pooled, (std::vector<double>{0.3, -2.0, 5.0}));
}

TEST(LabelAttention, IdenticalRowsSplitEvenly) {
  const auto g = rows({{1.5, -1.0}, {1.5, -1.0}});
  const std::vector<double> w{0.7, 0.2};
  auto a = label_attention<double>(g, w);
  EXPECT_DOUBLE_EQ(a.scores[0], 0.5);
  EXPECT_DOUBLE_EQ(a.scores[1], 0.5);
  EXPECT_DOUBLE_EQ(a.pooled[0], 1.5);
  EXPECT_DOUBLE_EQ(a.pooled[1], -1.0);
}

TEST(LabelAttention, HandComputedExample) {
  const auto g = rows({{1, 0}, {0, 1}});
  const std::vector<double> w{2, 0};
  auto a = label_attention<double>(g, w);
  const double e2 = std::exp(2.0);
  EXPECT_NEAR(a.scores[0], e2 / (e2 + 1), 1e-15);
  EXPECT_NEAR(a.scores[0], 0.8808, 1e-4);
  EXPECT_NEAR(a.scores[1], 0.1192, 1e-4);
  EXPECT_NEAR(a.pooled[0], 0.8808, 1e-4);
  EXPECT_NEAR(a.pooled[1], 0.1192, 1e-4);
}

TEST(LabelAttention, SimplexAndConvexCombination) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-6, 6);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rep % 9, d = 1 + rep % 5;
    Matrix<double> g(n, d);
    for (double& x : g.flat()) x = u(rng);
    std::vector<double> w(d);
    for (double& x : w) x = u(rng);
    auto a = label_attention<double>(g, w);
    double sum = 0;
    for (double s : a.scores) {
      EXPECT_GE(s, 0.0);
      sum += s;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    for (std::size_t i = 0; i < d; ++i) {
      double lo = g(0, i), hi = g(0, i);
      for (std::size_t j = 0; j < n; ++j) {
        lo = std::min(lo, g(j, i));
        hi = std::max(hi, g(j, i));
      }
      EXPECT_GE(a.pooled[i], lo - 1e-12);
      EXPECT_LE(a.pooled[i], hi + 1e-12);
    }
  }
}

TEST(PredictLabel, Examples) {
  const std::vector<double> v{1, 2}, u{1, 2}, w{4, 6};
  auto same = predict_label<double>(v, u);
  EXPECT_EQ(same.distance, 0.0);
  EXPECT_EQ(same.probability, 0.5);
  auto far = predict_label<double>(w, v);
  EXPECT_NEAR(far.distance, 5.0, 1e-15);
  EXPECT_NEAR(far.probability, 1.0 / (1.0 + std::exp(5.0)), 1e-15);
  EXPECT_NEAR(far.probability, 0.006693, 1e-6);
}

TEST(PredictLabel, ProbabilityStrictlyDecreasesWithDistance) {
  const std::vector<double> u{0, 0};
  double prev = 1.0;
  for (double d = 0.0; d < 30.0; d += 0.25) {
    const std::vector<double> v{d, 0};
    const double p = predict_label<double>(v, u).probability;
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Bce, Examples) {
  EXPECT_NEAR(bce_term(0.5, true), std::log(2.0), 1e-15);
  EXPECT_LT(bce_term(1.0 - 1e-12, true), 1e-6);
  EXPECT_NEAR(bce_term(0.0, true), -std::log(kProbabilityClamp), 1e-9);
  const auto pred = rows({{.9, .1}, {.2, .8}});
  const auto truth = rows({{1, 0}, {0, 1}});
  EXPECT_NEAR(bce_loss(pred, truth), -(2 * std::log(.9) + 2 * std::log(.8)), 1e-14);
  EXPECT_NEAR(bce_loss(pred, truth), 0.6570, 1e-4);
}

TEST(Variant, NamesRoundTrip) {
  for (auto v : kVariants) EXPECT_EQ(parse_variant(variant_name(v)), v);
  EXPECT_EQ(variant_name(ModelVariant::kProtoLabelwise), "proto_labelwise");
  EXPECT_THROW(parse_variant("proto"), ValidationError);
}

TEST(InitModel, TensorsPresentPerVariant) {
  for (auto v : kVariants) {
    auto m = testing::small_model<double>(v, 3, 1);
    EXPECT_EQ(m.params.head.attention.empty(), !uses_label_attention(v));
    EXPECT_EQ(m.params.head.prototypes.empty(), !uses_prototypes(v));
    EXPECT_EQ(m.params.head.linear_w.empty(), uses_prototypes(v));
    EXPECT_EQ(m.config.vocab_size, m.vocab.size());
  }
  auto a = testing::small_model<float>(ModelVariant::kProtoLabelwise, 3, 9);
  auto b = testing::small_model<float>(ModelVariant::kProtoLabelwise, 3, 9);
  EXPECT_EQ(a.params.head.prototypes, b.params.head.prototypes);
  EXPECT_EQ(a.params.encoder.embedding, b.params.encoder.embedding);
}

TEST(Forward, SingleLabelHasOneEntry) {
  for (auto v : kVariants) {
    auto m = testing::small_model<double>(v, 1, 2);
    Document d;
    d.tokens = {3, 4, 5};
    auto r = forward(d, m);
    ASSERT_EQ(r.probability.size(), 1u);
    ASSERT_EQ(r.score.size(), 1u);
    EXPECT_EQ(r.tokens, (std::vector<std::string>{"w0", "w1", "w2"}));
    EXPECT_EQ(r.vocab_hash, m.vocab_hash());
    EXPECT_EQ(r.attention.empty(), !uses_label_attention(v));
  }
}

TEST(Forward, LabelPermutationEquivariance) {
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  for (auto v : kVariants) {
    auto m = testing::small_model<double>(v, 4, 3);
    auto pm = m;
    for (std::size_t i = 0; i < 4; ++i) {
      pm.label_vocab[i] = m.label_vocab[perm[i]];
      for (Matrix<double>* t : {&pm.params.head.attention, &pm.params.head.prototypes, &pm.params.head.linear_w}) {
        const Matrix<double>* src = t == &pm.params.head.attention    ? &m.params.head.attention
                                    : t == &pm.params.head.prototypes ? &m.params.head.prototypes
                                                                      : &m.params.head.linear_w;
        if (t->empty()) continue;
        for (std::size_t j = 0; j < t->cols(); ++j) (*t)(i, j) = (*src)(perm[i], j);
      }
      if (!pm.params.head.linear_b.empty()) pm.params.head.linear_b(0, i) = m.params.head.linear_b(0, perm[i]);
    }
    Document d;
    d.tokens = {5, 3, 9, 9, 12};
    auto a = forward(d, m);
    auto b = forward(d, pm);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_EQ(b.probability[i], a.probability[perm[i]]);
      EXPECT_EQ(b.score[i], a.score[perm[i]]);
      if (!a.attention.empty()) {
        for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(b.attention(i, j), a.attention(perm[i], j));
      }
    }
  }
}

TEST(Forward, AddingALabelLeavesOthersUnchanged) {
  for (auto v : kVariants) {
    auto m = testing::small_model<double>(v, 2, 4);
    auto big = testing::small_model<double>(v, 3, 4);
    big.params.encoder = m.params.encoder;
    for (Matrix<double>* t : {&big.params.head.attention, &big.params.head.prototypes, &big.params.head.linear_w}) {
      const Matrix<double>* src = t == &big.params.head.attention    ? &m.params.head.attention
                                  : t == &big.params.head.prototypes ? &m.params.head.prototypes
                                                                     : &m.params.head.linear_w;
      for (std::size_t i = 0; i < 2 && !t->empty(); ++i)
        for (std::size_t j = 0; j < t->cols(); ++j) (*t)(i, j) = (*src)(i, j);
    }
    if (!big.params.head.linear_b.empty()) {
      big.params.head.linear_b(0, 0) = m.params.head.linear_b(0, 0);
      big.params.head.linear_b(0, 1) = m.params.head.linear_b(0, 1);
    }
    Document d;
    d.tokens = {3, 7, 8};
    auto a = forward(d, m);
    auto b = forward(d, big);
    ASSERT_EQ(b.probability.size(), 3u);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(a.probability[i], b.probability[i]);
  }
}

TEST(Forward, LinearAndPlainDefinitions) {
  auto m = testing::small_model<double>(ModelVariant::kLinearPlain, 2, 5);
  m.params.head.linear_b(0, 1) = 0.3;
  const std::vector<TokenId> tokens{3, 4, 11};
  auto cache = forward_cached(m, std::span<const TokenId>(tokens));
  const auto g = encode<double>(tokens, m.params.encoder, m.config).g;
  for (std::size_t c = 0; c < 2; ++c) {
    double z = m.params.head.linear_b(0, c);
    for (std::size_t i = 0; i < g.cols(); ++i) {
      double mean = 0;
      for (std::size_t j = 0; j < 3; ++j) mean += g(j, i) / 3.0;
      z += mean * m.params.head.linear_w(c, i);
    }
    EXPECT_NEAR(cache.score[c], z, 1e-12);
    EXPECT_NEAR(cache.probability[c], 1.0 / (1.0 + std::exp(-z)), 1e-12);
  }
}

TEST(Forward, RejectsUntokenisedDocument) {
  auto m = testing::small_model<double>(ModelVariant::kProtoLabelwise, 2, 5);
  Document d;
  d.id = "x";
  EXPECT_THROW(forward(d, m), ValidationError);
}

// End-to-end objective over two documents and three labels; all parameters.
double two_doc_loss(const ProtoModel<double>& m, const std::vector<std::vector<TokenId>>& docs,
                    const std::vector<std::vector<LabelId>>& truth) {
  double l = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) l += document_loss(m, std::span<const TokenId>(docs[i]), truth[i]);
  return l;
}

TEST(EndToEndGradient, MatchesFiniteDifferencesForEveryVariant) {
  const std::vector<std::vector<TokenId>> docs{{3, 4, 5, 6, 7, 8}, {9, 3, 3, 10, 11, 12}};
  const std::vector<std::vector<LabelId>> truth{{0, 2}, {1}};
  for (auto v : kVariants) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      auto m = testing::small_model<double>(v, 3, seed, testing::small_config(1, 16, 2, 8));
      auto grads = m.params.zeros_like();
      for (std::size_t i = 0; i < 2; ++i) loss_and_gradient(m, std::span<const TokenId>(docs[i]), truth[i], grads);
      std::vector<TensorRef> refs;
      std::vector<const Matrix<double>*> g;
      grads.for_each([&](const std::string&, const Matrix<double>& t) { g.push_back(&t); });
      std::size_t k = 0;
      m.params.for_each([&](const std::string& name, Matrix<double>& t) { refs.push_back({name, &t, g[k++]}); });
      GradCheckOptions opt;
      opt.seed = seed;
      // Some attention projections carry gradients near 1e-7 here, where
      // rounding in the summed loss dominates a 1e-5 central difference.
      opt.step = 1e-4;
      auto r = finite_difference_check(refs, [&] { return two_doc_loss(m, docs, truth); }, opt);
      EXPECT_LT(r.max_rel_error, 1e-4) << variant_name(v) << " " << r.worst_tensor << "[" << r.worst_index << "]";
    }
  }
}

TEST(EndToEndGradient, LossMatchesDocumentLoss) {
  auto m = testing::small_model<double>(ModelVariant::kProtoLabelwise, 3, 1);
  const std::vector<TokenId> tokens{3, 4, 5};
  const std::vector<LabelId> truth{1};
  auto grads = m.params.zeros_like();
  EXPECT_DOUBLE_EQ(loss_and_gradient(m, std::span<const TokenId>(tokens), truth, grads),
                   document_loss(m, std::span<const TokenId>(tokens), truth));
}

Corpus tiny_corpus(const Vocabulary& vocab, const std::vector<std::vector<std::string>>& words,
                   const std::vector<std::vector<LabelId>>& labels, std::size_t n_labels) {
  Corpus c;
  c.label_vocab = testing::label_names(n_labels);
  for (std::size_t i = 0; i < words.size(); ++i) {
    Document d;
    d.id = "d" + std::to_string(i);
    d.patient_id = d.id;
    d.words = words[i];
    d.labels = labels[i];
    c.documents.push_back(d);
  }
  c.recount_labels();
  apply_vocab(c, vocab);
  return c;
}

TEST(InitPrototypes, SinglePositiveGivesItsVector) {
  auto m = testing::small_model<double>(ModelVariant::kProtoLabelwise, 2, 3);
  auto c = tiny_corpus(m.vocab, {{"w0", "w1", "w5"}, {"w2", "w3"}}, {{0}, {}}, 2);
  std::mt19937_64 rng(1);
  auto u = init_prototypes(c, m, rng);
  const LabelId zero[1] = {0};
  auto cache = forward_cached(m, std::span<const TokenId>(c.documents[0].tokens), zero);
  for (std::size_t i = 0; i < u.cols(); ++i) EXPECT_DOUBLE_EQ(u(0, i), cache.pooled(0, i));
  double norm = 0;
  for (std::size_t i = 0; i < u.cols(); ++i) norm += u(1, i) * u(1, i);
  EXPECT_LT(std::sqrt(norm), 0.1 * std::sqrt(static_cast<double>(u.cols())));
}

TEST(InitPrototypes, MeanOfPositives) {
  for (bool pooled : {false, true}) {
    auto m = testing::small_model<double>(ModelVariant::kProtoLabelwise, 1, 3);
    auto c = tiny_corpus(m.vocab, {{"w0", "w1"}, {"w2", "w3", "w4"}, {"w9"}}, {{0}, {0}, {}}, 1);
    std::mt19937_64 rng(1);
    auto u = init_prototypes(c, m, rng, pooled);
    std::vector<double> want(u.cols(), 0.0);
    for (std::size_t k = 0; k < 2; ++k) {
      const auto& t = c.documents[k].tokens;
      const auto g = encode<double>(t, m.params.encoder, m.config).g;
      std::vector<double> v(u.cols(), 0.0);
      if (pooled) {
        for (std::size_t j = 0; j < g.rows(); ++j)
          for (std::size_t i = 0; i < g.cols(); ++i) v[i] += g(j, i) / static_cast<double>(g.rows());
      } else {
        v = label_attention<double>(g, m.params.head.attention.row(0)).pooled;
      }
      for (std::size_t i = 0; i < v.size(); ++i) want[i] += v[i] / 2.0;
    }
    for (std::size_t i = 0; i < u.cols(); ++i) EXPECT_NEAR(u(0, i), want[i], 1e-12);
  }
}

TEST(InitAttention, SingleInformativeOccurrence) {
  auto m = testing::small_model<double>(ModelVariant::kProtoLabelwise, 2, 6);
  // "w7" is the only token of label 0's positive document absent elsewhere.
  auto c = tiny_corpus(m.vocab, {{"w1", "w7", "w2"}, {"w1", "w2"}, {"w2", "w1", "w1"}}, {{0}, {}, {}}, 2);
  auto tfidf = compute_tfidf(c, m.vocab.size());
  std::mt19937_64 rng(1);
  AttentionInitReport report;
  auto w = init_attention(c, tfidf, 0.01, m, rng, &report);
  const auto g = encode<double>(c.documents[0].tokens, m.params.encoder, m.config).g;
  for (std::size_t i = 0; i < w.cols(); ++i) EXPECT_DOUBLE_EQ(w(0, i), g(1, i));
  EXPECT_EQ(report.informative_tokens[0], 1u);
  EXPECT_EQ(report.occurrences[0], 1u);
  EXPECT_FALSE(report.fallback[0]);
  EXPECT_TRUE(report.fallback[1]);
  EXPECT_EQ(report.informative_tokens[1], 0u);
}

TEST(InitAttention, RejectsMismatchedTable) {
  auto m = testing::small_model<double>(ModelVariant::kProtoLabelwise, 2, 6);
  auto c = tiny_corpus(m.vocab, {{"w1"}}, {{0}}, 2);
  auto tfidf = compute_tfidf(c, m.vocab.size() + 1);
  std::mt19937_64 rng(1);
  EXPECT_THROW(init_attention(c, tfidf, 0.01, m, rng), ContractError);
}

}  // namespace
}  // namespace protodx
