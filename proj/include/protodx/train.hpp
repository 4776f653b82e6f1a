// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "json.hpp"
#include "protodx/corpus.hpp"
#include "protodx/metrics.hpp"
#include "protodx/protonet.hpp"

namespace protodx {

struct InitFlags {
  bool proto_mean_init = true;
  bool attention_tfidf_init = false;
  // Mean-init prototypes from the mean-pooled vector instead of v_pc.
  bool pooled_proto_init = false;
};

struct TrainConfig {
  EncoderConfig encoder;
  double lr_encoder = 5e-5;
  double lr_head = 5e-3;  // W, U, reduction layer, linear heads
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  std::optional<std::size_t> warmup_steps;  // default 5% of total_steps
  std::size_t total_steps = 1000;
  std::size_t batch_size = 10;
  std::uint64_t seed = 0;
  InitFlags init;
  double h = 0.05;
  std::size_t eval_every = 50;
  // Per (document, label) validation loss that counts as converged.
  std::optional<double> convergence_threshold;
  bool select_best = true;

  std::size_t resolved_warmup() const;
  void validate() const;
};

struct EvalPoint {
  std::size_t step = 0;         // optimiser steps taken
  double val_loss = 0.0;        // mean per (document, label) term
  std::optional<double> val_roc_auc_macro;
};

struct TrainStats {
  std::vector<double> step_loss;  // summed batch loss per step
  std::vector<EvalPoint> evals;
  std::optional<std::size_t> steps_to_convergence;
  std::size_t best_step = 0;
  AttentionInitReport attention_init;
};

struct TrainResult {
  ProtoModel<float> model;
  TrainStats stats;
};

// First evaluation step whose validation loss is below `threshold`.
std::optional<std::size_t> steps_to_threshold(const TrainStats& stats, double threshold);

// Initialised (not yet trained) model, with attention and prototype
// initialisation applied according to `config.init`.
ProtoModel<float> initial_model(const Corpus& train, const Vocabulary& vocab, ModelVariant variant,
                                const TrainConfig& config, AttentionInitReport* report = nullptr);

// Mini-batch training on the summed BCE objective. Documents must carry
// token ids under `vocab`.
TrainResult train(const Corpus& train, const Corpus& val, const Vocabulary& vocab, ModelVariant variant,
                  const TrainConfig& config);

struct CorpusPredictions {
  Matrix<double> probability;  // documents x labels
  BinaryMatrix truth;
};

template <class T>
CorpusPredictions predict_corpus(const ProtoModel<T>& model, const Corpus& corpus);

template <class T>
MetricReport evaluate_model(const ProtoModel<T>& model, const Corpus& corpus);

// Summed BCE over the corpus.
template <class T>
double corpus_loss(const ProtoModel<T>& model, const Corpus& corpus);

nlohmann::ordered_json to_json(const TrainStats& stats);
nlohmann::ordered_json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
nlohmann::ordered_json to_json(const EncoderConfig& config);
EncoderConfig encoder_config_from_json(const nlohmann::json& j, EncoderConfig base = {});

}  // namespace protodx
