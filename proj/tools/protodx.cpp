// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

// protodx: generate synthetic corpora, train and evaluate prototype models,
// explain predictions, measure saliency faithfulness, and serve a model.
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 runtime or
// numeric failure (a diagnostics.json is written under --out when possible).

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "protodx/checkpoint.hpp"
#include "protodx/errors.hpp"
#include "protodx/explain.hpp"
#include "protodx/hash.hpp"
#include "protodx/parallel.hpp"
#include "protodx/presets.hpp"
#include "protodx/server.hpp"
#include "protodx/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace protodx;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

// Resolved configuration and provenance of one invocation. Written as
// manifest.json under --out; holds nothing time- or host-dependent so that
// identical invocations produce identical manifests.
struct Run {
  std::string command;
  std::vector<std::string> argv;
  fs::path out;
  std::uint64_t seed = 0;
  json config = json::object();
  json inputs = json::object();
  std::vector<std::string> outputs;

  void input_file(const std::string& role, const fs::path& path) {
    inputs[role] = {{"path", path.string()}, {"sha256", sha256_hex(read_text(path))}};
  }

  void output(const std::string& name, const std::string& text) {
    write_text(out / name, text);
    outputs.push_back(name);
  }

  void write_manifest() const {
    json m;
    m["tool_version"] = kVersion;
    m["command"] = command;
    m["argv"] = argv;
    m["seed"] = seed;
    m["config"] = config;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    write_text(out / "manifest.json", m.dump(2) + "\n");
  }
};

bool on_off(const std::string& v) { return v == "on"; }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

LabelId require_label(const ProtoModel<float>& model, const std::string& name) {
  for (LabelId c = 0; c < model.n_labels(); ++c) {
    if (model.label_vocab[c] == name) return c;
  }
  throw ValidationError("unknown label '" + name + "'");
}

Corpus load_for_model(const fs::path& path, const ProtoModel<float>& model) {
  LoadOptions opts;
  opts.vocab = &model.vocab;
  opts.label_vocab = &model.label_vocab;
  opts.max_len = model.config.max_len;
  Corpus c = load_corpus(path, opts);
  c.label_train_freq = model.label_train_freq;
  return c;
}

// ------------------------------------------------------------- gen-data

struct GenDataArgs {
  std::string preset;
  std::string spec_file;
  std::uint64_t seed = 0;
  std::string out;
};

void gen_data(const GenDataArgs& a, Run& run) {
  SyntheticSpec spec;
  SplitRatios ratios;
  std::size_t min_freq = 1;
  if (!a.spec_file.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text(a.spec_file));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("spec file: " + std::string(e.what()));
    }
    if (j.contains("split")) {
      ratios = split_ratios_from_json(j["split"]);
      j.erase("split");
    }
    spec = synthetic_spec_from_json(j);
    run.input_file("spec", a.spec_file);
  } else {
    const Preset p = find_preset(a.preset);
    spec = p.spec;
    ratios = p.ratios;
    min_freq = p.min_freq;
  }
  spec.seed = a.seed;
  const auto data = prepare_data(spec, ratios, min_freq, a.seed);
  run.config["preset"] = a.spec_file.empty() ? json(a.preset) : json(nullptr);
  run.config["spec"] = to_json(spec);
  run.config["split"] = to_json(ratios);

  auto dump = [](const Corpus& c) {
    std::ostringstream ss;
    write_corpus(ss, c);
    return ss.str();
  };
  run.output("corpus.jsonl", dump(data.synthetic.corpus));
  run.output("train.jsonl", dump(data.split.train));
  run.output("val.jsonl", dump(data.split.val));
  run.output("test.jsonl", dump(data.split.test));
  std::string labels;
  for (const auto& l : data.synthetic.corpus.label_vocab) labels += l + "\n";
  run.output("labels.txt", labels);
  run.output("truth.json", planted_truth_json(data.synthetic).dump(2) + "\n");
  std::cout << "wrote " << data.synthetic.corpus.size() << " documents (" << data.split.train.size() << " train, "
            << data.split.val.size() << " val, " << data.split.test.size() << " test) to " << a.out << "\n";
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string train, val, labels, preset = "desk", config_file, variant = "proto_labelwise", out;
  std::string attn_init, proto_init;
  std::optional<std::size_t> dim, steps, blocks, embed_dim, batch_size, min_freq;
  std::optional<double> h, lr_encoder, lr_head;
  std::uint64_t seed = 0;
};

void train_cmd(const TrainArgs& a, Run& run) {
  const Preset preset = find_preset(a.preset);
  const ModelVariant variant = parse_variant(a.variant);

  std::vector<std::string> label_vocab;
  if (!a.labels.empty()) {
    label_vocab = load_label_vocab(a.labels);
    run.input_file("labels", a.labels);
  }
  LoadOptions opts;
  opts.max_len = preset.train.encoder.max_len;
  if (!label_vocab.empty()) opts.label_vocab = &label_vocab;
  Corpus train_corpus = load_corpus(a.train, opts);
  run.input_file("train", a.train);
  if (label_vocab.empty()) {
    label_vocab = train_corpus.label_vocab;
    opts.label_vocab = &label_vocab;
  }
  Corpus val;
  val.label_vocab = label_vocab;
  if (!a.val.empty()) {
    val = load_corpus(a.val, opts);
    run.input_file("val", a.val);
  }
  if (train_corpus.empty()) throw ValidationError("training corpus is empty");

  const std::size_t min_freq = a.min_freq.value_or(preset.min_freq);
  const Vocabulary vocab = build_vocab(train_corpus, min_freq);
  apply_vocab(train_corpus, vocab);
  apply_vocab(val, vocab);

  TrainConfig cfg = preset_train_config(preset, vocab, a.seed);
  if (!a.config_file.empty()) {
    try {
      cfg = train_config_from_json(nlohmann::json::parse(read_text(a.config_file)), cfg);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config file: " + std::string(e.what()));
    }
    cfg.encoder.vocab_size = vocab.size();
    cfg.seed = a.seed;
    run.input_file("config", a.config_file);
  }
  if (a.dim) cfg.encoder.output_dim = *a.dim;
  if (a.steps) cfg.total_steps = *a.steps;
  if (a.blocks) cfg.encoder.context_blocks = *a.blocks;
  if (a.embed_dim) cfg.encoder.embed_dim = *a.embed_dim;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.h) cfg.h = *a.h;
  if (a.lr_encoder) cfg.lr_encoder = *a.lr_encoder;
  if (a.lr_head) cfg.lr_head = *a.lr_head;
  if (!a.attn_init.empty()) cfg.init.attention_tfidf_init = on_off(a.attn_init);
  if (!a.proto_init.empty()) cfg.init.proto_mean_init = on_off(a.proto_init);
  cfg.encoder.validate();
  cfg.validate();

  run.config["preset"] = a.preset;
  run.config["variant"] = a.variant;
  run.config["min_freq"] = min_freq;
  run.config["train"] = to_json(cfg);

  const TrainResult result = train(train_corpus, val, vocab, variant, cfg);
  save_model(result.model, run.out / "model");
  run.outputs.push_back("model/model.json");
  run.outputs.push_back("model/tensors.bin");
  run.outputs.push_back("model/vocab.txt");

  json stats = to_json(result.stats);
  const double train_loss = corpus_loss(result.model, train_corpus);
  stats["train_loss"] = train_loss;
  stats["train_loss_per_term"] = train_loss / static_cast<double>(train_corpus.size() * train_corpus.n_labels());
  const auto train_report = evaluate_model(result.model, train_corpus);
  stats["train_roc_auc_macro"] =
      train_report.roc_auc_macro ? json(*train_report.roc_auc_macro) : json(nullptr);
  stats["model_hash"] = model_hash(result.model);
  run.output("stats.json", stats.dump(2) + "\n");
  std::cout << "trained " << variant_name(variant) << " for " << cfg.total_steps << " steps; train loss "
            << train_loss << ", train macro ROC AUC "
            << (train_report.roc_auc_macro ? std::to_string(*train_report.roc_auc_macro) : "n/a") << "\n";
}

// ----------------------------------------------------------------- eval

struct EvalArgs {
  std::string model, corpus, out;
  bool buckets = false;
};

void eval_cmd(const EvalArgs& a, Run& run) {
  const auto model = load_model(a.model);
  const Corpus corpus = load_for_model(a.corpus, model);
  run.input_file("corpus", a.corpus);
  run.inputs["model"] = {{"path", a.model}, {"model_hash", model_hash(model)}};
  run.config["buckets"] = a.buckets;
  const auto report = evaluate_model(model, corpus);
  const std::string text = to_json(report, a.buckets).dump(2) + "\n";
  run.output("metrics.json", text);
  std::cout << text;
}

// -------------------------------------------------------------- explain

struct ExplainArgs {
  std::string model, corpus, train_corpus, doc_id, format = "json", method, mode = "typical", out;
  std::size_t top_k = 3;
  std::size_t exemplars = 0;
};

void explain_cmd(const ExplainArgs& a, Run& run) {
  const auto model = load_model(a.model);
  const std::string hash = model_hash(model);
  const Corpus corpus = load_for_model(a.corpus, model);
  run.input_file("corpus", a.corpus);
  run.inputs["model"] = {{"path", a.model}, {"model_hash", hash}};
  const Document* doc = corpus.find(a.doc_id);
  if (!doc) throw ValidationError("document '" + a.doc_id + "' not found in " + a.corpus);

  std::string method = a.method;
  if (method.empty()) method = uses_label_attention(model.variant) ? "proto_attention" : "occlusion";
  const SaliencyMethod sm = parse_saliency_method(method);
  const ExemplarMode mode = parse_exemplar_mode(a.mode);
  Corpus exemplar_source;
  const Corpus* pool = &corpus;
  if (a.exemplars > 0 && !a.train_corpus.empty()) {
    exemplar_source = load_for_model(a.train_corpus, model);
    run.input_file("train_corpus", a.train_corpus);
    pool = &exemplar_source;
  }
  run.config["top_k"] = a.top_k;
  run.config["exemplars"] = a.exemplars;
  run.config["method"] = method;
  run.config["mode"] = a.mode;
  run.config["format"] = a.format;

  const auto prediction = forward(*doc, model);
  std::vector<LabelId> order(model.n_labels());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](LabelId x, LabelId y) { return prediction.probability[x] > prediction.probability[y]; });
  order.resize(std::min(order.size(), a.top_k));

  std::mt19937_64 rng(run.seed);
  std::vector<std::string> warnings;
  std::vector<ReportInput> inputs;
  for (LabelId c : order) {
    ReportInput in{c, saliency(model, std::span<const TokenId>(doc->tokens), c, sm, rng), {}};
    if (a.exemplars > 0 && uses_prototypes(model.variant)) {
      in.exemplars = retrieve_exemplars(model, *pool, c, a.exemplars, mode, &warnings);
    }
    inputs.push_back(std::move(in));
  }
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  const auto report = render_report(*doc, prediction, uses_prototypes(model.variant), model.label_vocab, inputs, hash);
  const std::string text = a.format == "html" ? report.html() : report.json().dump(2) + "\n";
  run.output(a.format == "html" ? "report.html" : "report.json", text);
  std::cout << text;
}

// --------------------------------------------------------- faithfulness

struct FaithArgs {
  std::string model, corpus, labels, method = "all", out;
};

void faithfulness_cmd(const FaithArgs& a, Run& run) {
  const auto model = load_model(a.model);
  const Corpus corpus = load_for_model(a.corpus, model);
  run.input_file("corpus", a.corpus);
  run.inputs["model"] = {{"path", a.model}, {"model_hash", model_hash(model)}};
  std::vector<LabelId> labels;
  for (const auto& name : split_list(a.labels)) labels.push_back(require_label(model, name));
  if (labels.empty()) throw ValidationError("--labels must name at least one label");
  std::vector<SaliencyMethod> methods;
  if (a.method == "all") {
    for (auto m : kAllSaliencyMethods) {
      if (m == SaliencyMethod::kProtoAttention && !uses_label_attention(model.variant)) continue;
      methods.push_back(m);
    }
  } else {
    for (const auto& m : split_list(a.method)) methods.push_back(parse_saliency_method(m));
  }
  run.config["labels"] = split_list(a.labels);
  run.config["method"] = a.method;

  json reports = json::array();
  for (auto m : methods) {
    const auto r = faithfulness(model, corpus, labels, m, run.seed);
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << method_name(m) << ": score " << r.score << " (unmasked " << r.reference << ")\n";
    reports.push_back(to_json(r));
  }
  run.output("faithfulness.json", json{{"reports", reports}}.dump(2) + "\n");
}

// ------------------------------------------------------------ top-words

struct TopWordsArgs {
  std::string model, corpus, label, out;
  std::size_t m = 8;
};

void top_words_cmd(const TopWordsArgs& a, Run& run) {
  const auto model = load_model(a.model);
  const Corpus corpus = load_for_model(a.corpus, model);
  run.input_file("corpus", a.corpus);
  run.inputs["model"] = {{"path", a.model}, {"model_hash", model_hash(model)}};
  run.config["label"] = a.label;
  run.config["m"] = a.m;
  json list = json::array();
  for (const auto& w : top_attended_words(model, corpus, require_label(model, a.label), a.m)) {
    list.push_back({{"word", w.word}, {"mass", w.mass}});
  }
  const std::string text = json{{"label", a.label}, {"words", list}}.dump(2) + "\n";
  run.output("top_words.json", text);
  std::cout << text;
}

// ---------------------------------------------------------------- serve

struct ServeArgs {
  std::string model, addr = "127.0.0.1:8080", train_corpus, allow_origin, out;
};

HttpService* g_service = nullptr;

void serve_cmd(const ServeArgs& a, Run& run) {
  auto model = load_model(a.model);
  Corpus train;
  const Corpus* train_ptr = nullptr;
  if (!a.train_corpus.empty()) {
    train = load_for_model(a.train_corpus, model);
    train_ptr = &train;
  }
  const ServiceState state = make_service_state(std::move(model), train_ptr);
  ServerOptions opts;
  const auto colon = a.addr.rfind(':');
  if (colon == std::string::npos) throw ValidationError("--addr must be host:port");
  opts.host = a.addr.substr(0, colon);
  try {
    opts.port = std::stoi(a.addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw ValidationError("--addr port is not a number");
  }
  opts.allow_origin = a.allow_origin;
  opts.threads = std::max<std::size_t>(2, worker_count());
  if (!a.out.empty()) {
    run.config["addr"] = a.addr;
    run.config["allow_origin"] = a.allow_origin;
    run.inputs["model"] = {{"path", a.model}, {"model_hash", state.model_hash}};
    run.write_manifest();
  }
  HttpService service(state, opts);
  const int port = service.bind();
  g_service = &service;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_service) g_service->stop();
  });
  std::cout << "serving " << state.model.n_labels() << " labels on http://" << opts.host << ":" << port
            << (state.has_exemplar_index ? " with exemplar index" : "") << std::endl;
  service.serve();
  g_service = nullptr;
}

void write_diagnostics(const fs::path& out, const std::string& command, const std::exception& e) {
  if (out.empty()) return;
  try {
    json d;
    d["command"] = command;
    d["error"] = e.what();
    write_text(out / "diagnostics.json", d.dump(2) + "\n");
    std::cerr << "diagnostics written to " << (out / "diagnostics.json").string() << "\n";
  } catch (...) {
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prototype networks with label-wise attention for multi-label text classification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Run run;
  for (int i = 0; i < argc; ++i) run.argv.emplace_back(argv[i]);
  if (!run.argv.empty()) run.argv[0] = "protodx";
  std::string out_dir;

  auto common = [&](CLI::App* sub, bool out_required) {
    sub->add_option("--seed", run.seed, "Seed for all randomness")->capture_default_str();
    auto* o = sub->add_option("--out", out_dir, "Output directory");
    if (out_required) o->required();
  };

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic corpus with planted indicative tokens");
  auto* preset_opt = gen_cmd->add_option("--preset", gen.preset, "overfit | desk | rare-labels")
                         ->check(CLI::IsMember(preset_names()));
  gen_cmd->add_option("--spec", gen.spec_file, "JSON synthetic spec (optionally with a \"split\" object)")
      ->check(CLI::ExistingFile)
      ->excludes(preset_opt);
  common(gen_cmd, true);

  TrainArgs tr;
  auto* train_sub = app.add_subcommand("train", "Train a model");
  train_sub->set_help_flag("--help", "Print this help message and exit");
  train_sub->add_option("--train", tr.train, "Training corpus (JSONL)")->required()->check(CLI::ExistingFile);
  train_sub->add_option("--val", tr.val, "Validation corpus (JSONL)")->check(CLI::ExistingFile);
  train_sub->add_option("--labels", tr.labels, "Label vocabulary file (one per line)")->check(CLI::ExistingFile);
  train_sub->add_option("--preset", tr.preset, "Hyperparameter preset")
      ->check(CLI::IsMember(preset_names()))
      ->capture_default_str();
  train_sub->add_option("--config", tr.config_file, "JSON training config overriding the preset")
      ->check(CLI::ExistingFile);
  train_sub->add_option("--variant", tr.variant, "Model variant")
      ->check(CLI::IsMember({"proto_labelwise", "proto_plain", "linear_labelwise", "linear_plain"}))
      ->capture_default_str();
  train_sub->add_option("--dim", tr.dim, "Output dimension D")->check(CLI::PositiveNumber);
  train_sub->add_option("--embed-dim", tr.embed_dim, "Embedding dimension E")->check(CLI::PositiveNumber);
  train_sub->add_option("--blocks", tr.blocks, "Context blocks (0, 1 or 2)")->check(CLI::Range(0, 2));
  train_sub->add_option("--attn-init", tr.attn_init, "TF-IDF attention initialisation")
      ->check(CLI::IsMember({"on", "off"}));
  train_sub->add_option("--proto-init", tr.proto_init, "Mean prototype initialisation")
      ->check(CLI::IsMember({"on", "off"}));
  train_sub->add_option("--h", tr.h, "TF-IDF threshold")->check(CLI::NonNegativeNumber);
  train_sub->add_option("--steps", tr.steps, "Optimiser steps");
  train_sub->add_option("--batch-size", tr.batch_size, "Documents per batch")->check(CLI::PositiveNumber);
  train_sub->add_option("--lr-encoder", tr.lr_encoder, "Encoder learning rate")->check(CLI::PositiveNumber);
  train_sub->add_option("--lr-head", tr.lr_head, "Head learning rate")->check(CLI::PositiveNumber);
  train_sub->add_option("--min-freq", tr.min_freq, "Vocabulary frequency cutoff")->check(CLI::PositiveNumber);
  common(train_sub, true);

  EvalArgs ev;
  auto* eval_sub = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus");
  eval_sub->add_option("--model", ev.model, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  eval_sub->add_option("--corpus", ev.corpus, "Corpus (JSONL)")->required()->check(CLI::ExistingFile);
  eval_sub->add_flag("--buckets", ev.buckets, "Include frequency-bucketed macro ROC AUC");
  common(eval_sub, true);

  ExplainArgs ex;
  auto* explain_sub = app.add_subcommand("explain", "Explain the predictions for one document");
  explain_sub->add_option("--model", ex.model, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  explain_sub->add_option("--corpus", ex.corpus, "Corpus containing the document")
      ->required()
      ->check(CLI::ExistingFile);
  explain_sub->add_option("--doc-id", ex.doc_id, "Document id")->required();
  explain_sub->add_option("--top-k", ex.top_k, "Labels to explain")->check(CLI::PositiveNumber)->capture_default_str();
  explain_sub->add_option("--exemplars", ex.exemplars, "Exemplars per label")->capture_default_str();
  explain_sub->add_option("--train-corpus", ex.train_corpus, "Exemplar pool (defaults to --corpus)")
      ->check(CLI::ExistingFile);
  explain_sub->add_option("--mode", ex.mode, "typical | atypical")
      ->check(CLI::IsMember({"typical", "atypical"}))
      ->capture_default_str();
  explain_sub->add_option("--method", ex.method, "Saliency method")
      ->check(CLI::IsMember({"proto_attention", "occlusion", "gradient", "input_x_gradient", "random_control"}));
  explain_sub->add_option("--format", ex.format, "json | html")
      ->check(CLI::IsMember({"json", "html"}))
      ->capture_default_str();
  common(explain_sub, true);

  FaithArgs fa;
  auto* faith_sub = app.add_subcommand("faithfulness", "Saliency faithfulness by incremental masking");
  faith_sub->add_option("--model", fa.model, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  faith_sub->add_option("--corpus", fa.corpus, "Evaluation corpus")->required()->check(CLI::ExistingFile);
  faith_sub->add_option("--labels", fa.labels, "Comma-separated label names")->required();
  faith_sub->add_option("--method", fa.method, "Saliency method, comma list, or all")->capture_default_str();
  common(faith_sub, true);

  TopWordsArgs tw;
  auto* words_sub = app.add_subcommand("top-words", "Most attended words for a label");
  words_sub->add_option("--model", tw.model, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  words_sub->add_option("--corpus", tw.corpus, "Corpus (usually the training split)")
      ->required()
      ->check(CLI::ExistingFile);
  words_sub->add_option("--label", tw.label, "Label name")->required();
  words_sub->add_option("--m", tw.m, "Number of words")->check(CLI::PositiveNumber)->capture_default_str();
  common(words_sub, true);

  ServeArgs sv;
  auto* serve_sub = app.add_subcommand("serve", "Serve a checkpoint over HTTP");
  serve_sub->add_option("--model", sv.model, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  serve_sub->add_option("--addr", sv.addr, "host:port")->capture_default_str();
  serve_sub->add_option("--train-corpus", sv.train_corpus, "Training corpus for the exemplar index")
      ->check(CLI::ExistingFile);
  serve_sub->add_option("--allow-origin", sv.allow_origin, "CORS origin for the UI");
  common(serve_sub, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  run.command = sub->get_name();
  run.out = out_dir;
  try {
    if (sub == gen_cmd) {
      if (gen.preset.empty() && gen.spec_file.empty()) throw ValidationError("gen-data needs --preset or --spec");
      gen.seed = run.seed;
      gen.out = out_dir;
      gen_data(gen, run);
    } else if (sub == train_sub) {
      tr.seed = run.seed;
      train_cmd(tr, run);
    } else if (sub == eval_sub) {
      eval_cmd(ev, run);
    } else if (sub == explain_sub) {
      explain_cmd(ex, run);
    } else if (sub == faith_sub) {
      faithfulness_cmd(fa, run);
    } else if (sub == words_sub) {
      top_words_cmd(tw, run);
    } else if (sub == serve_sub) {
      sv.out = out_dir;
      serve_cmd(sv, run);
      return 0;
    }
    run.write_manifest();
    return 0;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    write_diagnostics(run.out, run.command, e);
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    write_diagnostics(run.out, run.command, e);
    return 2;
  }
}
