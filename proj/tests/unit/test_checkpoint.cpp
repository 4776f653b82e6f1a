// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "json.hpp"
#include "protodx/checkpoint.hpp"
#include "protodx/errors.hpp"
#include "test_util.hpp"

namespace protodx {
namespace {

using testing::TempDir;

ProtoModel<float> trained_looking_model(ModelVariant v, std::uint64_t seed) {
  auto m = testing::small_model<float>(v, 3, seed);
  std::mt19937_64 rng(seed);
  testing::randomize(m.params, rng);
  m.label_train_freq = {4, 0, 9};
  m.label_val_roc_auc = {0.75, std::nullopt, 1.0};
  return m;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

void expect_load_error(const std::filesystem::path& dir, const std::string& field) {
  try {
    load_model(dir);
    FAIL() << "loaded a corrupt checkpoint";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, RoundTripIsBitExactForEveryVariant) {
  for (auto v : {ModelVariant::kProtoLabelwise, ModelVariant::kProtoPlain, ModelVariant::kLinearLabelwise,
                 ModelVariant::kLinearPlain}) {
    TempDir dir("ckpt");
    const auto m = trained_looking_model(v, 3);
    save_model(m, dir.path());
    const auto back = load_model(dir.path());
    EXPECT_EQ(back.variant, v);
    EXPECT_EQ(back.config, m.config);
    EXPECT_EQ(back.vocab, m.vocab);
    EXPECT_EQ(back.label_vocab, m.label_vocab);
    EXPECT_EQ(back.label_train_freq, m.label_train_freq);
    EXPECT_EQ(back.label_val_roc_auc, m.label_val_roc_auc);
    std::vector<const Matrix<float>*> a;
    m.params.for_each([&](const std::string&, const Matrix<float>& t) { a.push_back(&t); });
    std::size_t k = 0;
    back.params.for_each([&](const std::string& name, const Matrix<float>& t) {
      ASSERT_LT(k, a.size());
      EXPECT_EQ(std::memcmp(t.data(), a[k]->data(), t.size() * sizeof(float)), 0) << name;
      ++k;
    });
    EXPECT_EQ(k, a.size());
    EXPECT_EQ(back.params.encoder.positions, m.params.encoder.positions);
    EXPECT_EQ(model_hash(back), model_hash(m));
  }
}

TEST(Checkpoint, ForwardOutputsIdenticalAfterRoundTrip) {
  TempDir dir("ckpt");
  const auto m = trained_looking_model(ModelVariant::kProtoLabelwise, 5);
  save_model(m, dir.path());
  const auto back = load_model(dir.path());
  std::mt19937_64 rng(1);
  auto corpus = testing::random_corpus(rng, m.vocab, 20, 3, 100);
  for (const auto& d : corpus.documents) {
    const auto a = forward(d, m);
    const auto b = forward(d, back);
    EXPECT_EQ(a.probability, b.probability);
    EXPECT_EQ(a.score, b.score);
    EXPECT_EQ(a.attention, b.attention);
  }
}

TEST(Checkpoint, SerializationIsDeterministic) {
  const auto a = serialize_model(trained_looking_model(ModelVariant::kProtoLabelwise, 8));
  const auto b = serialize_model(trained_looking_model(ModelVariant::kProtoLabelwise, 8));
  EXPECT_EQ(a.model_json, b.model_json);
  EXPECT_EQ(a.tensors, b.tensors);
  EXPECT_EQ(a.vocab, b.vocab);
  const auto j = nlohmann::json::parse(a.model_json);
  EXPECT_EQ(j["format_version"], kCheckpointFormatVersion);
  EXPECT_EQ(j["tensors"]["head.prototypes"]["shape"], (nlohmann::json{3, 8}));
  EXPECT_EQ(j["tensors"]["encoder.embedding"]["offset"], 0);
  EXPECT_EQ(j["tensors"]["head.prototypes"]["dtype"], "f32");
}

TEST(Checkpoint, TruncatedTensorFile) {
  TempDir dir("ckpt");
  save_model(trained_looking_model(ModelVariant::kProtoLabelwise, 1), dir.path());
  auto bytes = testing::read_file(dir / "tensors.bin");
  write_text(dir / "tensors.bin", bytes.substr(0, bytes.size() - 4));
  expect_load_error(dir.path(), "tensors.bin size");
  write_text(dir / "tensors.bin", bytes + "xxxx");
  expect_load_error(dir.path(), "tensors.bin size");
}

nlohmann::json read_json(const std::filesystem::path& p) { return nlohmann::json::parse(testing::read_file(p)); }

TEST(Checkpoint, EditedLabelCount) {
  TempDir dir("ckpt");
  save_model(trained_looking_model(ModelVariant::kProtoLabelwise, 1), dir.path());
  auto j = read_json(dir / "model.json");
  j["labels"].push_back("EXTRA");
  write_text(dir / "model.json", j.dump());
  expect_load_error(dir.path(), "label_train_freq");

  j["label_train_freq"].push_back(0);
  j["label_val_roc_auc"].push_back(nullptr);
  write_text(dir / "model.json", j.dump());
  try {
    load_model(dir.path());
    FAIL();
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("tensors.head."), std::string::npos) << what;
    EXPECT_NE(what.find("label count 4"), std::string::npos) << what;
  }
}

TEST(Checkpoint, VersionMismatch) {
  TempDir dir("ckpt");
  save_model(trained_looking_model(ModelVariant::kProtoLabelwise, 1), dir.path());
  auto j = read_json(dir / "model.json");
  j["format_version"] = 99;
  write_text(dir / "model.json", j.dump());
  expect_load_error(dir.path(), "format_version");
}

TEST(Checkpoint, VocabularyHashMismatch) {
  TempDir dir("ckpt");
  save_model(trained_looking_model(ModelVariant::kProtoLabelwise, 1), dir.path());
  auto vocab = testing::read_file(dir / "vocab.txt");
  write_text(dir / "vocab.txt", vocab + "newword\n");
  expect_load_error(dir.path(), "vocab_hash");
}

TEST(Checkpoint, ManifestProblems) {
  TempDir dir("ckpt");
  save_model(trained_looking_model(ModelVariant::kLinearPlain, 1), dir.path());
  const auto original = read_json(dir / "model.json");

  auto j = original;
  j["tensors"].erase("head.linear_b");
  write_text(dir / "model.json", j.dump());
  expect_load_error(dir.path(), "tensors.head.linear_b");

  j = original;
  j["tensors"]["head.reduce_w"]["dtype"] = "f16";
  write_text(dir / "model.json", j.dump());
  expect_load_error(dir.path(), "tensors.head.reduce_w.dtype");

  j = original;
  j["tensors"]["encoder.block0.wq"]["shape"] = {16, 15};
  write_text(dir / "model.json", j.dump());
  expect_load_error(dir.path(), "tensors.encoder.block0.wq.shape");

  j = original;
  j.erase("variant");
  write_text(dir / "model.json", j.dump());
  expect_load_error(dir.path(), "variant");

  write_text(dir / "model.json", "{not json");
  expect_load_error(dir.path(), "model.json");

  std::filesystem::remove(dir / "model.json");
  expect_load_error(dir.path(), "model.json");
}

}  // namespace
}  // namespace protodx
