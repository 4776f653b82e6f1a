// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

#include "protodx/presets.hpp"

#include <algorithm>

#include "protodx/errors.hpp"

namespace protodx {

namespace {

TrainConfig synthetic_train_config() {
  TrainConfig t;
  t.encoder.embed_dim = 64;
  t.encoder.context_blocks = 1;
  t.encoder.attention_heads = 4;
  t.encoder.output_dim = 32;
  t.encoder.max_len = 128;
  // The encoder starts from random weights, so it trains at a rate closer
  // to the head's than a pre-trained encoder would.
  t.lr_encoder = 1e-2;
  t.lr_head = 2e-2;
  t.batch_size = 10;
  t.init.attention_tfidf_init = true;
  t.eval_every = 50;
  return t;
}

}  // namespace

std::vector<std::string> preset_names() { return {"overfit", "desk", "rare-labels"}; }

Preset find_preset(std::string_view name) {
  Preset p;
  p.name = std::string(name);
  p.train = synthetic_train_config();
  if (name == "overfit") {
    p.spec.n_labels = 4;
    p.spec.n_docs = 32;
    p.spec.tokens_per_doc = 16;
    p.spec.indicative_tokens_per_label = 4;
    p.spec.noise_vocab_size = 40;
    p.spec.mean_labels_per_doc = 1.5;
    p.ratios = {1.0, 0.0, 0.0};
    p.train.encoder.embed_dim = 32;
    p.train.encoder.attention_heads = 2;
    p.train.encoder.output_dim = 16;
    p.train.total_steps = 500;
    p.train.batch_size = 8;
    p.train.h = 0.02;
  } else if (name == "desk") {
    p.spec.n_labels = 50;
    p.spec.n_docs = 2000;
    p.ratios = {0.7, 0.1, 0.2};
    p.train.total_steps = 2000;
    p.train.h = 0.02;
  } else if (name == "rare-labels") {
    p.spec.n_labels = 100;
    p.spec.n_docs = 1500;
    p.ratios = {0.6, 0.1, 0.3};
    p.train.total_steps = 1500;
    p.train.h = 0.03;
  } else {
    throw ValidationError("unknown preset '" + std::string(name) + "' (expected overfit, desk or rare-labels)");
  }
  return p;
}

PreparedData prepare_data(const SyntheticSpec& spec, const SplitRatios& ratios, std::size_t min_freq,
                          std::uint64_t seed) {
  SyntheticSpec s = spec;
  s.seed = seed;
  PreparedData out;
  out.synthetic = generate_synthetic(s);
  out.split = split(out.synthetic.corpus, ratios, seed);
  out.vocab = build_vocab(out.split.train, min_freq);
  apply_vocab(out.split.train, out.vocab);
  apply_vocab(out.split.val, out.vocab);
  apply_vocab(out.split.test, out.vocab);
  return out;
}

TrainConfig preset_train_config(const Preset& preset, const Vocabulary& vocab, std::uint64_t seed) {
  TrainConfig t = preset.train;
  t.encoder.vocab_size = vocab.size();
  t.seed = seed;
  return t;
}

nlohmann::ordered_json to_json(const SyntheticSpec& s) {
  nlohmann::ordered_json j;
  j["n_labels"] = s.n_labels;
  j["zipf_exponent"] = s.zipf_exponent;
  j["n_docs"] = s.n_docs;
  j["tokens_per_doc"] = s.tokens_per_doc;
  j["indicative_tokens_per_label"] = s.indicative_tokens_per_label;
  j["noise_vocab_size"] = s.noise_vocab_size;
  j["mean_labels_per_doc"] = s.mean_labels_per_doc;
  j["indicative_rate"] = s.indicative_rate;
  j["indicative_vocab_size"] = s.indicative_vocab_size;
  j["repeat_patient_rate"] = s.repeat_patient_rate;
  j["seed"] = s.seed;
  return j;
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j, SyntheticSpec s) {
  if (!j.is_object()) throw ConfigError("synthetic spec must be a JSON object");
  static const char* known[] = {"n_labels",       "zipf_exponent",       "n_docs",
                                "tokens_per_doc", "indicative_tokens_per_label", "noise_vocab_size",
                                "mean_labels_per_doc", "indicative_rate", "indicative_vocab_size",
                                "repeat_patient_rate", "seed"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw ConfigError("synthetic spec: unknown field '" + key + "'");
    }
  }
  try {
    s.n_labels = j.value("n_labels", s.n_labels);
    s.zipf_exponent = j.value("zipf_exponent", s.zipf_exponent);
    s.n_docs = j.value("n_docs", s.n_docs);
    s.tokens_per_doc = j.value("tokens_per_doc", s.tokens_per_doc);
    s.indicative_tokens_per_label = j.value("indicative_tokens_per_label", s.indicative_tokens_per_label);
    s.noise_vocab_size = j.value("noise_vocab_size", s.noise_vocab_size);
    s.mean_labels_per_doc = j.value("mean_labels_per_doc", s.mean_labels_per_doc);
    s.indicative_rate = j.value("indicative_rate", s.indicative_rate);
    s.indicative_vocab_size = j.value("indicative_vocab_size", s.indicative_vocab_size);
    s.repeat_patient_rate = j.value("repeat_patient_rate", s.repeat_patient_rate);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
  return s;
}

nlohmann::ordered_json to_json(const SplitRatios& r) {
  nlohmann::ordered_json j;
  j["train"] = r.train;
  j["val"] = r.val;
  j["test"] = r.test;
  return j;
}

SplitRatios split_ratios_from_json(const nlohmann::json& j, SplitRatios r) {
  r.train = j.value("train", r.train);
  r.val = j.value("val", r.val);
  r.test = j.value("test", r.test);
  return r;
}

nlohmann::ordered_json planted_truth_json(const SyntheticCorpus& synthetic) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  const auto& labels = synthetic.corpus.label_vocab;
  for (std::size_t c = 0; c < labels.size(); ++c) j[labels[c]] = synthetic.planted[c];
  return j;
}

}  // namespace protodx
