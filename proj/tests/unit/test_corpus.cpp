// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "protodx/corpus.hpp"
#include "protodx/errors.hpp"
#include "test_util.hpp"

namespace protodx {
namespace {

using testing::parse_jsonl;

using Words = std::vector<std::string>;

TEST(Tokenize, SplitsPunctuationAndLowercases) {
  EXPECT_EQ(tokenize("Chest pain, SOB."), (Words{"chest", "pain", ",", "sob", "."}));
  EXPECT_EQ(tokenize(""), Words{});
  EXPECT_EQ(tokenize("BP 120/80"), (Words{"bp", "120", "/", "80"}));
  EXPECT_EQ(tokenize("  \t\n "), Words{});
  EXPECT_EQ(tokenize("a--b"), (Words{"a", "-", "-", "b"}));
}

TEST(Tokenize, NonAsciiBytesAreWordCharacters) {
  EXPECT_EQ(tokenize("Fi\xc3\xa8vre, toux"), (Words{"fi\xc3\xa8vre", ",", "toux"}));
}

TEST(Tokenize, OutputNeverContainsWhitespaceOrUppercase) {
  std::mt19937_64 rng(5);
  const std::string alphabet = "aZ 9,.\t/Q(x)";
  for (int rep = 0; rep < 500; ++rep) {
    std::string s;
    std::uniform_int_distribution<std::size_t> len(0, 30), pick(0, alphabet.size() - 1);
    for (std::size_t i = len(rng); i > 0; --i) s += alphabet[pick(rng)];
    for (const auto& t : tokenize(s)) {
      ASSERT_FALSE(t.empty());
      for (char ch : t) {
        EXPECT_FALSE(std::isspace(static_cast<unsigned char>(ch)));
        EXPECT_FALSE(std::isupper(static_cast<unsigned char>(ch)));
      }
      if (t.size() > 1) {
        for (char ch : t) EXPECT_FALSE(std::ispunct(static_cast<unsigned char>(ch))) << s;
      }
    }
  }
}

TEST(CorpusLoad, SingleRecord) {
  auto c = parse_jsonl(R"({"id":"d1","patient_id":"p1","text":"fever cough","labels":["PNA"]})" "\n");
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.documents[0].words, (Words{"fever", "cough"}));
  EXPECT_EQ(c.label_vocab, Words{"PNA"});
  EXPECT_EQ(c.documents[0].labels, std::vector<LabelId>{0});
  EXPECT_EQ(c.label_train_freq, std::vector<std::size_t>{1});
}

TEST(CorpusLoad, EmptyInputGivesEmptyCorpus) {
  auto c = parse_jsonl("");
  EXPECT_TRUE(c.empty());
  EXPECT_EQ(c.n_labels(), 0u);
}

TEST(CorpusLoad, TruncatesToMaxLen) {
  std::string text;
  for (int i = 0; i < 600; ++i) text += "w" + std::to_string(i) + " ";
  auto c = parse_jsonl(R"({"id":"d1","patient_id":"p1","text":")" + text + R"(","labels":[]})");
  ASSERT_EQ(c.documents[0].words.size(), 512u);
  EXPECT_EQ(c.documents[0].words.back(), "w511");
  LoadOptions opt;
  opt.max_len = 7;
  EXPECT_EQ(parse_jsonl(R"({"id":"d1","patient_id":"p1","text":")" + text + R"(","labels":[]})", opt)
                .documents[0]
                .words.size(),
            7u);
}

TEST(CorpusLoad, MalformedRecordsNameTheLine) {
  const std::string good = R"({"id":"d1","patient_id":"p1","text":"a","labels":[]})";
  for (const std::string bad : {R"({"patient_id":"p1","text":"a","labels":[]})",
                                R"({"id":"d2","patient_id":"p1","labels":[]})",
                                R"({"id":"d2","patient_id":"p1","text":"a"})", R"({"id":"d2",)", "[1,2]",
                                R"({"id":"d2","patient_id":"p1","text":"a","labels":[3]})"}) {
    try {
      parse_jsonl(good + "\n\n" + bad + "\n");
      FAIL() << "accepted " << bad;
    } catch (const ParseError& e) {
      EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
  }
}

TEST(CorpusLoad, UnknownLabelWithFixedVocabulary) {
  const Words labels{"A", "B"};
  LoadOptions opt;
  opt.label_vocab = &labels;
  auto ok = parse_jsonl(R"({"id":"d1","patient_id":"p1","text":"x","labels":["B","B"]})", opt);
  EXPECT_EQ(ok.documents[0].labels, std::vector<LabelId>{1});
  EXPECT_EQ(ok.label_train_freq, (std::vector<std::size_t>{0, 1}));
  EXPECT_THROW(parse_jsonl(R"({"id":"d1","patient_id":"p1","text":"x","labels":["C"]})", opt), ValidationError);
}

TEST(CorpusLoad, EmptyTextIsRejected) {
  EXPECT_THROW(parse_jsonl(R"({"id":"d1","patient_id":"p1","text":" ","labels":[]})"), ValidationError);
}

TEST(CorpusLoad, WriteParseRoundTrip) {
  auto c = parse_jsonl(R"({"id":"d1","patient_id":"p1","text":"Fever, \"cough\"","labels":["B","A"]})" "\n"
                       R"({"id":"d2","patient_id":"p1","text":"ok","labels":[]})" "\n");
  std::ostringstream out;
  write_corpus(out, c);
  const Words labels = c.label_vocab;
  LoadOptions opt;
  opt.label_vocab = &labels;
  auto again = parse_jsonl(out.str(), opt);
  ASSERT_EQ(again.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(again.documents[i].id, c.documents[i].id);
    EXPECT_EQ(again.documents[i].text, c.documents[i].text);
    EXPECT_EQ(again.documents[i].labels, c.documents[i].labels);
  }
}

Corpus word_corpus(const std::vector<Words>& docs) {
  Corpus c;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    Document d;
    d.id = "d" + std::to_string(i);
    d.patient_id = "p" + std::to_string(i);
    d.words = docs[i];
    c.documents.push_back(d);
  }
  return c;
}

TEST(Vocabulary, ReservedIdsAndFrequencyOrder) {
  auto c = word_corpus({{"fever", "fever", "cough", "beta"}, {"fever", "fever", "fever", "alpha"}});
  auto v = build_vocab(c, 2);
  EXPECT_EQ(v.size(), 4u);
  EXPECT_EQ(v.id("fever"), kFirstWordId);
  EXPECT_EQ(v.id("cough"), kUnkId);
  EXPECT_EQ(v.word(kPadId), "<pad>");
  EXPECT_EQ(v.word(kMaskId), "<mask>");
  auto all = build_vocab(c, 1);
  // alpha, beta, cough tie at frequency 1: lexicographic order.
  EXPECT_LT(all.id("alpha"), all.id("beta"));
  EXPECT_LT(all.id("beta"), all.id("cough"));
  EXPECT_EQ(build_vocab(c, 100).size(), 3u);
}

TEST(Vocabulary, SerializeParseRoundTripAndHash) {
  auto v = Vocabulary::from_words({"b", "a", "c"});
  auto again = Vocabulary::parse(v.serialize());
  EXPECT_EQ(again, v);
  EXPECT_EQ(again.content_hash(), v.content_hash());
  EXPECT_NE(Vocabulary::from_words({"a", "b", "c"}).content_hash(), v.content_hash());
  EXPECT_THROW(Vocabulary::from_words({"a", "a"}), ValidationError);
  EXPECT_THROW(Vocabulary::parse("x\ny\nz\n"), ValidationError);
}

TEST(Vocabulary, ApplyMapsUnknownWordsAndStampsHash) {
  auto c = word_corpus({{"a", "zzz"}});
  auto v = Vocabulary::from_words({"a"});
  apply_vocab(c, v);
  EXPECT_EQ(c.documents[0].tokens, (std::vector<TokenId>{kFirstWordId, kUnkId}));
  EXPECT_EQ(c.documents[0].vocab_hash, v.content_hash());
}

// Class-conditional tf over concatenated positives, corpus-level ln idf.
double brute_tfidf(const Corpus& c, LabelId label, TokenId t) {
  double count = 0, total = 0, df = 0;
  for (const auto& d : c.documents) {
    const bool has = std::count(d.tokens.begin(), d.tokens.end(), t) > 0;
    df += has ? 1 : 0;
    if (!d.has_label(label)) continue;
    total += static_cast<double>(d.tokens.size());
    count += static_cast<double>(std::count(d.tokens.begin(), d.tokens.end(), t));
  }
  if (count == 0 || total == 0) return 0.0;
  return count / total * std::log(static_cast<double>(c.size()) / df);
}

TEST(Tfidf, HandComputedExample) {
  // Label 0 positives hold 10 tokens, "t" twice; "t" occurs in one of 4 docs.
  auto c = word_corpus({{"t", "t", "a", "b", "c"}, {"a", "b", "c", "d", "e"}, {"a"}, {"b"}});
  c.label_vocab = {"X"};
  c.documents[0].labels = {0};
  c.documents[1].labels = {0};
  c.recount_labels();
  auto v = build_vocab(c, 1);
  apply_vocab(c, v);
  auto table = compute_tfidf(c, v.size());
  EXPECT_NEAR(table.score(0, v.id("t")), 0.2 * std::log(4.0), 1e-15);
  EXPECT_NEAR(table.score(0, v.id("t")), 0.2773, 1e-4);
}

TEST(Tfidf, AbsentAndUbiquitousTokensScoreZero) {
  auto c = word_corpus({{"all", "x"}, {"all", "y"}});
  c.label_vocab = {"X"};
  c.documents[0].labels = {0};
  c.recount_labels();
  auto v = build_vocab(c, 1);
  apply_vocab(c, v);
  auto table = compute_tfidf(c, v.size());
  EXPECT_EQ(table.score(0, v.id("all")), 0.0);
  EXPECT_EQ(table.score(0, v.id("y")), 0.0);
  EXPECT_GT(table.score(0, v.id("x")), 0.0);
}

TEST(Tfidf, MatchesBruteForceOnRandomCorpora) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    auto v = Vocabulary::from_words(testing::word_pool(15));
    auto c = testing::random_corpus(rng, v, 15, 4, 12);
    auto table = compute_tfidf(c, v.size());
    for (LabelId l = 0; l < 4; ++l) {
      for (TokenId t = 0; t < v.size(); ++t) {
        EXPECT_NEAR(table.score(l, t), brute_tfidf(c, l, t), 1e-12);
      }
    }
  }
}

TEST(Tfidf, InformativeTokensThreshold) {
  std::mt19937_64 rng(1);
  auto v = Vocabulary::from_words(testing::word_pool(15));
  auto c = testing::random_corpus(rng, v, 15, 3, 20);
  auto table = compute_tfidf(c, v.size());
  std::size_t scored = 0;
  for (TokenId t = kFirstWordId; t < v.size(); ++t) scored += table.score(0, t) > 0 ? 1 : 0;
  EXPECT_EQ(informative_tokens(0, table, 0.0).size(), scored);
  EXPECT_TRUE(informative_tokens(0, table, 1e9).empty());
  auto some = informative_tokens(0, table, 0.05);
  EXPECT_TRUE(std::is_sorted(some.begin(), some.end()));
  for (auto t : some) EXPECT_GT(table.score(0, t), 0.05);
  EXPECT_THROW(informative_tokens(7, table, 0.0), ContractError);
}

TEST(Synthetic, SingleLabelLabelsEveryDocument) {
  SyntheticSpec s;
  s.n_labels = 1;
  s.mean_labels_per_doc = 1;
  s.n_docs = 50;
  auto out = generate_synthetic(s);
  for (const auto& d : out.corpus.documents) EXPECT_EQ(d.labels, std::vector<LabelId>{0});
}

TEST(Synthetic, SameSeedByteIdentical) {
  SyntheticSpec s;
  s.n_docs = 300;
  s.seed = 9;
  std::ostringstream a, b, c;
  write_corpus(a, generate_synthetic(s).corpus);
  write_corpus(b, generate_synthetic(s).corpus);
  s.seed = 10;
  write_corpus(c, generate_synthetic(s).corpus);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str(), c.str());
}

TEST(Synthetic, DocumentsCarryTheirLabelsPlantedTokens) {
  SyntheticSpec s;
  s.n_docs = 200;
  s.seed = 3;
  auto out = generate_synthetic(s);
  const auto n_indicative = static_cast<std::size_t>(std::llround(s.indicative_rate * s.tokens_per_doc));
  for (const auto& d : out.corpus.documents) {
    EXPECT_EQ(d.words.size(), s.tokens_per_doc);
    std::size_t planted = 0;
    for (LabelId c : d.labels) {
      const auto& p = out.planted[c];
      planted += std::count_if(d.words.begin(), d.words.end(),
                               [&](const std::string& w) { return std::find(p.begin(), p.end(), w) != p.end(); });
    }
    EXPECT_EQ(planted, n_indicative);
  }
}

TEST(Synthetic, RejectsOversizedIndicativeRequest) {
  SyntheticSpec s;
  s.indicative_vocab_size = 10;
  EXPECT_THROW(generate_synthetic(s), ConfigError);
  s = {};
  s.n_labels = 0;
  EXPECT_THROW(generate_synthetic(s), ConfigError);
}

TEST(Synthetic, ZipfFrequenciesAreMonotoneOnLargeCorpus) {
  SyntheticSpec s;
  s.n_labels = 10;
  s.n_docs = 10000;
  s.tokens_per_doc = 4;
  s.seed = 2;
  auto out = generate_synthetic(s);
  const auto& f = out.corpus.label_train_freq;
  for (std::size_t k = 1; k < f.size(); ++k) EXPECT_GT(f[k - 1], f[k]) << k;
}

// Expected positives per rank for (50 labels, exponent 1.2, 2000 docs,
// mean 3 labels) from tests/oracles/zipf_expected.py (200 Monte-Carlo
// trials). The generator averaged over 20 seeds must agree.
TEST(Synthetic, ZipfCountsMatchIndependentOracle) {
  const std::map<std::size_t, double> expected{{1, 1260.1}, {2, 761.9}, {5, 307.8},
                                               {10, 140.7}, {25, 48.2}, {50, 21.6}};
  std::vector<double> mean(50, 0.0);
  const int seeds = 20;
  for (int seed = 0; seed < seeds; ++seed) {
    SyntheticSpec s;
    s.tokens_per_doc = 4;
    s.seed = static_cast<std::uint64_t>(seed);
    auto out = generate_synthetic(s);
    for (std::size_t c = 0; c < 50; ++c) mean[c] += static_cast<double>(out.corpus.label_train_freq[c]) / seeds;
  }
  for (auto [rank, value] : expected) {
    const double tol = rank <= 10 ? 0.06 : 0.15;
    EXPECT_NEAR(mean[rank - 1], value, tol * value) << "rank " << rank;
  }
}

Corpus patient_corpus(const std::vector<std::string>& patients) {
  Corpus c;
  for (std::size_t i = 0; i < patients.size(); ++i) {
    Document d;
    d.id = "d" + std::to_string(i);
    d.patient_id = patients[i];
    d.words = {"x"};
    c.documents.push_back(d);
  }
  return c;
}

TEST(Split, TenPatientsEightOneOne) {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("p" + std::to_string(i));
  auto s = split(patient_corpus(ids), {0.8, 0.1, 0.1}, 4);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.val.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(Split, PatientsNeverStraddleParts) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pid(0, 14);
    std::vector<std::string> ids;
    for (int i = 0; i < 40; ++i) ids.push_back("p" + std::to_string(pid(rng)));
    ids.push_back("a");
    ids.push_back("b");
    ids.push_back("c");
    auto s = split(patient_corpus(ids), {0.6, 0.2, 0.2}, seed);
    EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), ids.size());
    std::set<std::string> parts[3];
    const Corpus* cs[3] = {&s.train, &s.val, &s.test};
    for (int k = 0; k < 3; ++k)
      for (const auto& d : cs[k]->documents) parts[k].insert(d.patient_id);
    for (int a = 0; a < 3; ++a)
      for (int b = a + 1; b < 3; ++b)
        for (const auto& p : parts[a]) EXPECT_EQ(parts[b].count(p), 0u) << p;
  }
}

TEST(Split, OnePatientsDocumentsStayTogether) {
  auto s = split(patient_corpus({"a", "a", "a", "b", "c", "d", "e"}), {0.5, 0.25, 0.25}, 1);
  int holders = 0;
  for (const Corpus* c : {&s.train, &s.val, &s.test}) {
    const auto n = std::count_if(c->documents.begin(), c->documents.end(),
                                 [](const Document& d) { return d.patient_id == "a"; });
    if (n) {
      ++holders;
      EXPECT_EQ(n, 3);
    }
  }
  EXPECT_EQ(holders, 1);
}

TEST(Split, ErrorsAndDeterminism) {
  EXPECT_THROW(split(patient_corpus({"a", "b"}), {0.8, 0.1, 0.1}, 0), ConfigError);
  EXPECT_THROW(split(patient_corpus({"a", "b", "c"}), {0.8, 0.3, 0.1}, 0), ConfigError);
  std::vector<std::string> ids;
  for (int i = 0; i < 50; ++i) ids.push_back("p" + std::to_string(i));
  auto a = split(patient_corpus(ids), {}, 11);
  auto b = split(patient_corpus(ids), {}, 11);
  ASSERT_EQ(a.test.size(), b.test.size());
  for (std::size_t i = 0; i < a.test.size(); ++i) EXPECT_EQ(a.test.documents[i].id, b.test.documents[i].id);
}

}  // namespace
}  // namespace protodx
