// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

#include "protodx/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "protodx/errors.hpp"
#include "protodx/optimizer.hpp"
#include "protodx/parallel.hpp"

namespace protodx {

std::size_t TrainConfig::resolved_warmup() const {
  if (warmup_steps) return *warmup_steps;
  return static_cast<std::size_t>(std::llround(0.05 * static_cast<double>(total_steps)));
}

void TrainConfig::validate() const {
  if (!(lr_encoder > 0.0) || !(lr_head > 0.0)) throw ConfigError("train: learning rates must be positive");
  if (resolved_warmup() > total_steps) throw ConfigError("train: warmup_steps exceeds total_steps");
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (eval_every == 0) throw ConfigError("train: eval_every must be positive");
}

std::optional<std::size_t> steps_to_threshold(const TrainStats& stats, double threshold) {
  for (const auto& e : stats.evals) {
    if (e.val_loss < threshold) return e.step;
  }
  return std::nullopt;
}

namespace {

void require_tokens(const Corpus& corpus, const Vocabulary& vocab, const char* what) {
  const std::string hash = vocab.content_hash();
  for (const auto& d : corpus.documents) {
    if (d.tokens.empty() || d.vocab_hash != hash) {
      throw ValidationError(std::string(what) + ": document '" + d.id +
                            "' is not tokenised with the training vocabulary");
    }
  }
}

template <class T>
void zero(Parameters<T>& p) {
  p.for_each([](const std::string&, Matrix<T>& m) { m.fill(T{0}); });
}

}  // namespace

ProtoModel<float> initial_model(const Corpus& train, const Vocabulary& vocab, ModelVariant variant,
                                const TrainConfig& config, AttentionInitReport* report) {
  require_tokens(train, vocab, "train");
  auto model = init_model<float>(vocab, train.label_vocab, variant, config.encoder, config.seed);
  model.label_train_freq = train.label_train_freq;
  std::mt19937_64 rng(config.seed ^ 0x5bd1e995ULL);
  if (config.init.attention_tfidf_init && uses_label_attention(variant)) {
    const auto tfidf = compute_tfidf(train, vocab.size());
    model.params.head.attention = init_attention(train, tfidf, config.h, model, rng, report);
  }
  if (config.init.proto_mean_init && uses_prototypes(variant)) {
    model.params.head.prototypes = init_prototypes(train, model, rng, config.init.pooled_proto_init);
  }
  return model;
}

template <class T>
CorpusPredictions predict_corpus(const ProtoModel<T>& model, const Corpus& corpus) {
  CorpusPredictions out;
  const std::size_t c = model.n_labels();
  out.probability = Matrix<double>(corpus.size(), c);
  out.truth = BinaryMatrix(corpus.size(), c);
  parallel_for(corpus.size(), [&](std::size_t i) {
    const auto& doc = corpus.documents[i];
    const auto cache = forward_cached(model, std::span<const TokenId>(doc.tokens));
    for (std::size_t k = 0; k < c; ++k) out.probability(i, k) = static_cast<double>(cache.probability[k]);
    for (LabelId l : doc.labels) out.truth(i, l) = 1;
  });
  return out;
}

template <class T>
MetricReport evaluate_model(const ProtoModel<T>& model, const Corpus& corpus) {
  if (corpus.label_vocab != model.label_vocab) {
    throw ValidationError("evaluate: corpus label vocabulary differs from the model's");
  }
  const auto pred = predict_corpus(model, corpus);
  return evaluate_scores(pred.probability, pred.truth, model.label_vocab, model.label_train_freq);
}

template <class T>
double corpus_loss(const ProtoModel<T>& model, const Corpus& corpus) {
  std::vector<double> losses(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) {
    const auto& doc = corpus.documents[i];
    losses[i] = document_loss(model, std::span<const TokenId>(doc.tokens), std::span<const LabelId>(doc.labels));
  });
  return std::accumulate(losses.begin(), losses.end(), 0.0);
}

TrainResult train(const Corpus& train_corpus, const Corpus& val, const Vocabulary& vocab, ModelVariant variant,
                  const TrainConfig& config) {
  config.validate();
  if (!val.empty()) require_tokens(val, vocab, "val");
  TrainResult result;
  result.model = initial_model(train_corpus, vocab, variant, config, &result.stats.attention_init);
  auto& model = result.model;
  if (config.total_steps == 0) return result;
  if (train_corpus.empty()) throw ConfigError("train: empty training corpus");

  std::vector<Matrix<float>*> tensors;
  std::vector<bool> is_encoder;
  model.params.for_each([&](const std::string& name, Matrix<float>& m) {
    tensors.push_back(&m);
    is_encoder.push_back(name.rfind("encoder.", 0) == 0);
  });
  AdamW<float> optimizer({config.beta1, config.beta2, config.eps, config.weight_decay});
  for (auto* t : tensors) optimizer.add(*t);

  const std::size_t batch_size = std::min(config.batch_size, train_corpus.size());
  std::vector<Parameters<float>> slots(batch_size, model.params.zeros_like());
  std::vector<std::vector<Matrix<float>*>> slot_tensors(batch_size);
  for (std::size_t s = 0; s < batch_size; ++s) {
    slots[s].for_each([&](const std::string&, Matrix<float>& m) { slot_tensors[s].push_back(&m); });
  }
  const std::vector<const Matrix<float>*> reduced(slot_tensors[0].begin(), slot_tensors[0].end());

  std::mt19937_64 order_rng(config.seed * 0x9E3779B97F4A7C15ULL + 17);
  std::vector<std::size_t> order(train_corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  const std::size_t warmup = config.resolved_warmup();
  const double val_terms = static_cast<double>(val.size() * model.n_labels());
  std::optional<double> best_auc;
  double best_loss = 0.0;
  std::optional<Parameters<float>> best_params;
  std::vector<double> doc_losses(batch_size);
  std::vector<float> mask_row(model.config.embed_dim);

  auto evaluate = [&](std::size_t at_step) {
    const auto pred = predict_corpus(model, val);
    EvalPoint point;
    point.step = at_step;
    double total = 0.0;
    for (std::size_t i = 0; i < pred.probability.size(); ++i) {
      total += bce_term(pred.probability.data()[i], pred.truth.data()[i] != 0);
    }
    point.val_loss = total / val_terms;
    point.val_roc_auc_macro =
        evaluate_scores(pred.probability, pred.truth, model.label_vocab, model.label_train_freq).roc_auc_macro;
    result.stats.evals.push_back(point);

    const double auc = point.val_roc_auc_macro.value_or(-1.0);
    const bool better = !best_auc || auc > *best_auc || (auc == *best_auc && point.val_loss <= best_loss);
    if (config.select_best && better) {
      best_auc = auc;
      best_loss = point.val_loss;
      best_params = model.params;
      result.stats.best_step = point.step;
    }
  };
  if (!val.empty()) evaluate(0);

  for (std::size_t step = 0; step < config.total_steps; ++step) {
    if (cursor >= order.size()) {
      std::shuffle(order.begin(), order.end(), order_rng);
      cursor = 0;
    }
    const std::size_t take = std::min(batch_size, order.size() - cursor);
    std::vector<std::size_t> batch(order.begin() + cursor, order.begin() + cursor + take);
    cursor += take;
    std::sort(batch.begin(), batch.end(), [&](std::size_t a, std::size_t b) {
      return train_corpus.documents[a].id < train_corpus.documents[b].id;
    });

    parallel_for(take, [&](std::size_t i) {
      zero(slots[i]);
      const auto& doc = train_corpus.documents[batch[i]];
      doc_losses[i] = loss_and_gradient(model, std::span<const TokenId>(doc.tokens),
                                        std::span<const LabelId>(doc.labels), slots[i]);
    });
    double loss = 0.0;
    for (std::size_t i = 0; i < take; ++i) loss += doc_losses[i];
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "non-finite training loss at step " << step << "; batch documents:";
      for (auto b : batch) msg << ' ' << train_corpus.documents[b].id;
      throw NumericError(msg.str());
    }
    for (std::size_t i = 1; i < take; ++i) {
      for (std::size_t k = 0; k < tensors.size(); ++k) {
        add_inplace(*slot_tensors[0][k], *slot_tensors[i][k]);
      }
    }
    std::fill_n(slots[0].encoder.embedding.row(kMaskId).data(), model.config.embed_dim, 0.0f);

    const double mult = lr_multiplier(step, warmup, config.total_steps);
    std::vector<double> lrs(tensors.size());
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      lrs[k] = mult * (is_encoder[k] ? config.lr_encoder : config.lr_head);
    }
    std::copy_n(model.params.encoder.embedding.row(kMaskId).data(), mask_row.size(), mask_row.data());
    optimizer.step(tensors, reduced, lrs);
    std::copy_n(mask_row.data(), mask_row.size(), model.params.encoder.embedding.row(kMaskId).data());
    result.stats.step_loss.push_back(loss);

    if (!val.empty() && ((step + 1) % config.eval_every == 0 || step + 1 == config.total_steps)) {
      evaluate(step + 1);
    }
  }
  if (best_params) model.params = std::move(*best_params);
  if (!best_params) result.stats.best_step = config.total_steps;
  if (config.convergence_threshold) {
    result.stats.steps_to_convergence = steps_to_threshold(result.stats, *config.convergence_threshold);
  }
  if (!val.empty()) {
    const auto report = evaluate_model(model, val);
    model.label_val_roc_auc.clear();
    for (const auto& m : report.per_label) model.label_val_roc_auc.push_back(m.roc_auc);
  }
  return result;
}

// ------------------------------------------------------------------ JSON

nlohmann::ordered_json to_json(const TrainStats& stats) {
  nlohmann::ordered_json j;
  j["steps"] = stats.step_loss.size();
  j["final_loss"] = stats.step_loss.empty() ? nlohmann::ordered_json(nullptr)
                                            : nlohmann::ordered_json(stats.step_loss.back());
  j["step_loss"] = stats.step_loss;
  nlohmann::ordered_json evals = nlohmann::ordered_json::array();
  for (const auto& e : stats.evals) {
    nlohmann::ordered_json p;
    p["step"] = e.step;
    p["val_loss"] = e.val_loss;
    p["val_roc_auc_macro"] =
        e.val_roc_auc_macro ? nlohmann::ordered_json(*e.val_roc_auc_macro) : nlohmann::ordered_json(nullptr);
    evals.push_back(std::move(p));
  }
  j["evals"] = std::move(evals);
  j["best_step"] = stats.best_step;
  j["steps_to_convergence"] = stats.steps_to_convergence ? nlohmann::ordered_json(*stats.steps_to_convergence)
                                                         : nlohmann::ordered_json(nullptr);
  if (!stats.attention_init.fallback.empty()) {
    nlohmann::ordered_json cov;
    cov["informative_tokens"] = stats.attention_init.informative_tokens;
    cov["occurrences"] = stats.attention_init.occurrences;
    std::vector<int> fb(stats.attention_init.fallback.begin(), stats.attention_init.fallback.end());
    cov["fallback"] = fb;
    j["attention_init"] = std::move(cov);
  }
  return j;
}

nlohmann::ordered_json to_json(const EncoderConfig& c) {
  nlohmann::ordered_json j;
  j["vocab_size"] = c.vocab_size;
  j["embed_dim"] = c.embed_dim;
  j["context_blocks"] = c.context_blocks;
  j["attention_heads"] = c.attention_heads;
  j["ff_dim"] = c.feed_forward_dim();
  j["output_dim"] = c.output_dim;
  j["max_len"] = c.max_len;
  return j;
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j, EncoderConfig c) {
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.context_blocks = j.value("context_blocks", c.context_blocks);
  c.attention_heads = j.value("attention_heads", c.attention_heads);
  c.ff_dim = j.value("ff_dim", c.ff_dim);
  c.output_dim = j.value("output_dim", c.output_dim);
  c.max_len = j.value("max_len", c.max_len);
  return c;
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["encoder"] = to_json(c.encoder);
  j["lr_encoder"] = c.lr_encoder;
  j["lr_head"] = c.lr_head;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["eps"] = c.eps;
  j["weight_decay"] = c.weight_decay;
  j["warmup_steps"] = c.resolved_warmup();
  j["total_steps"] = c.total_steps;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["proto_mean_init"] = c.init.proto_mean_init;
  j["attention_tfidf_init"] = c.init.attention_tfidf_init;
  j["pooled_proto_init"] = c.init.pooled_proto_init;
  j["h"] = c.h;
  j["eval_every"] = c.eval_every;
  j["convergence_threshold"] =
      c.convergence_threshold ? nlohmann::ordered_json(*c.convergence_threshold) : nlohmann::ordered_json(nullptr);
  j["select_best"] = c.select_best;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  if (j.contains("encoder")) c.encoder = encoder_config_from_json(j["encoder"], c.encoder);
  c.lr_encoder = j.value("lr_encoder", c.lr_encoder);
  c.lr_head = j.value("lr_head", c.lr_head);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  if (j.contains("warmup_steps") && !j["warmup_steps"].is_null()) c.warmup_steps = j["warmup_steps"].get<std::size_t>();
  c.total_steps = j.value("total_steps", c.total_steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.init.proto_mean_init = j.value("proto_mean_init", c.init.proto_mean_init);
  c.init.attention_tfidf_init = j.value("attention_tfidf_init", c.init.attention_tfidf_init);
  c.init.pooled_proto_init = j.value("pooled_proto_init", c.init.pooled_proto_init);
  c.h = j.value("h", c.h);
  c.eval_every = j.value("eval_every", c.eval_every);
  if (j.contains("convergence_threshold") && !j["convergence_threshold"].is_null()) {
    c.convergence_threshold = j["convergence_threshold"].get<double>();
  }
  c.select_best = j.value("select_best", c.select_best);
  return c;
}

template CorpusPredictions predict_corpus<float>(const ProtoModel<float>&, const Corpus&);
template CorpusPredictions predict_corpus<double>(const ProtoModel<double>&, const Corpus&);
template MetricReport evaluate_model<float>(const ProtoModel<float>&, const Corpus&);
template MetricReport evaluate_model<double>(const ProtoModel<double>&, const Corpus&);
template double corpus_loss<float>(const ProtoModel<float>&, const Corpus&);
template double corpus_loss<double>(const ProtoModel<double>&, const Corpus&);

}  // namespace protodx
