// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

#include "protodx/server.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>

#include "httplib.h"
#include "protodx/checkpoint.hpp"
#include "protodx/errors.hpp"

namespace protodx {

ServiceState make_service_state(ProtoModel<float> model, const Corpus* train) {
  ServiceState s;
  s.model = std::move(model);
  s.model_hash = model_hash(s.model);
  if (train && uses_prototypes(s.model.variant)) {
    if (!train->empty() && train->documents.front().vocab_hash != s.model.vocab_hash()) {
      throw ValidationError("exemplar index: training corpus is not tokenised with the model vocabulary");
    }
    s.exemplars.resize(s.model.n_labels());
    for (LabelId c = 0; c < s.model.n_labels(); ++c) s.exemplars[c] = exemplar_candidates(s.model, *train, c);
    s.has_exemplar_index = true;
  }
  return s;
}

Response error_response(int status, std::string_view code, std::string_view message) {
  Response r;
  r.status = status;
  r.body["error"] = std::string(message);
  r.body["code"] = std::string(code);
  return r;
}

namespace {

std::optional<long long> parse_int(std::string_view s) {
  long long v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return v;
}

}  // namespace

Response handle_predict(const ServiceState& state, std::string_view body) {
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    return error_response(400, "invalid_json", "request body is not valid JSON");
  }
  if (!req.is_object()) return error_response(400, "invalid_json", "request body must be a JSON object");
  if (!req.contains("text") || !req["text"].is_string()) {
    return error_response(400, "missing_text", "field 'text' must be a string");
  }
  long long top_k = static_cast<long long>(kDefaultTopK);
  if (req.contains("top_k")) {
    if (!req["top_k"].is_number_integer()) return error_response(400, "invalid_top_k", "top_k must be an integer");
    top_k = req["top_k"].get<long long>();
  }
  if (top_k < 1) return error_response(400, "invalid_top_k", "top_k must be at least 1");

  const auto& model = state.model;
  auto words = tokenize(req["text"].get<std::string>());
  if (words.size() > model.config.max_len) words.resize(model.config.max_len);
  if (words.empty()) return error_response(400, "empty_text", "text contains no tokens");
  std::vector<TokenId> tokens;
  tokens.reserve(words.size());
  for (const auto& w : words) tokens.push_back(model.vocab.id(w));

  const auto cache = forward_cached(model, std::span<const TokenId>(tokens));
  std::vector<LabelId> order(model.n_labels());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](LabelId a, LabelId b) { return cache.probability[a] > cache.probability[b]; });
  order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(top_k)));

  Response r;
  nlohmann::ordered_json labels = nlohmann::ordered_json::array();
  const double uniform = 1.0 / static_cast<double>(tokens.size());
  for (LabelId c : order) {
    nlohmann::ordered_json e;
    e["label"] = model.label_vocab[c];
    e["id"] = c;
    e["probability"] = static_cast<double>(cache.probability[c]);
    e["distance"] = uses_prototypes(model.variant) ? nlohmann::ordered_json(static_cast<double>(cache.score[c]))
                                                   : nlohmann::ordered_json(nullptr);
    std::vector<double> scores(tokens.size(), uniform);
    if (!cache.attention.empty()) {
      for (std::size_t j = 0; j < tokens.size(); ++j) scores[j] = static_cast<double>(cache.attention(c, j));
    }
    e["token_scores"] = std::move(scores);
    labels.push_back(std::move(e));
  }
  r.body["labels"] = std::move(labels);
  r.body["tokens"] = words;
  return r;
}

Response handle_prototypes(const ServiceState& state, std::string_view label, std::optional<std::string> k,
                           std::optional<std::string> mode) {
  const auto& names = state.model.label_vocab;
  const auto it = std::find(names.begin(), names.end(), label);
  if (it == names.end()) return error_response(404, "unknown_label", "unknown label '" + std::string(label) + "'");
  std::size_t count = kDefaultExemplarK;
  if (k) {
    const auto v = parse_int(*k);
    if (!v || *v < 1) return error_response(400, "invalid_k", "k must be a positive integer");
    count = static_cast<std::size_t>(*v);
  }
  ExemplarMode m = ExemplarMode::kTypical;
  if (mode) {
    try {
      m = parse_exemplar_mode(*mode);
    } catch (const ValidationError&) {
      return error_response(400, "invalid_mode", "mode must be 'typical' or 'atypical'");
    }
  }
  if (!uses_prototypes(state.model.variant)) {
    return error_response(400, "no_prototypes", "the loaded model variant has no prototypes");
  }
  if (!state.has_exemplar_index) {
    return error_response(503, "no_exemplar_index", "server was started without a training corpus");
  }
  const auto c = static_cast<std::size_t>(it - names.begin());
  Response r;
  r.body["label"] = names[c];
  r.body["mode"] = std::string(mode_name(m));
  r.body["k"] = count;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& e : rank_exemplars(state.exemplars[c], count, m)) list.push_back(to_json(e));
  r.body["exemplars"] = std::move(list);
  return r;
}

Response handle_labels(const ServiceState& state) {
  const auto& model = state.model;
  Response r;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < model.n_labels(); ++c) {
    nlohmann::ordered_json e;
    e["id"] = c;
    e["name"] = model.label_vocab[c];
    e["train_freq"] = model.label_train_freq[c];
    const bool bundled = c < model.label_val_roc_auc.size() && model.label_val_roc_auc[c];
    e["val_roc_auc"] = bundled ? nlohmann::ordered_json(*model.label_val_roc_auc[c]) : nlohmann::ordered_json(nullptr);
    list.push_back(std::move(e));
  }
  r.body["labels"] = std::move(list);
  return r;
}

Response handle_health(const ServiceState& state) {
  Response r;
  r.body["model_hash"] = state.model_hash;
  r.body["n_labels"] = state.model.n_labels();
  return r;
}

// ------------------------------------------------------------------ HTTP

struct HttpService::Impl {
  const ServiceState& state;
  ServerOptions options;
  httplib::Server server;
  int port = -1;

  Impl(const ServiceState& s, ServerOptions o) : state(s), options(std::move(o)) {}

  void send(httplib::Response& res, const Response& r) const {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  }
};

HttpService::HttpService(const ServiceState& state, ServerOptions options)
    : impl_(std::make_unique<Impl>(state, std::move(options))) {
  auto& srv = impl_->server;
  const Impl* impl = impl_.get();
  const std::size_t threads = std::max<std::size_t>(1, impl_->options.threads);
  srv.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };

  if (!impl_->options.allow_origin.empty()) {
    const std::string origin = impl_->options.allow_origin;
    srv.set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", origin);
      res.set_header("Vary", "Origin");
    });
    srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
  }

  srv.Post("/predict", [impl](const httplib::Request& req, httplib::Response& res) {
    impl->send(res, handle_predict(impl->state, req.body));
  });
  srv.Get("/prototypes/:label", [impl](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::string> k, mode;
    if (req.has_param("k")) k = req.get_param_value("k");
    if (req.has_param("mode")) mode = req.get_param_value("mode");
    impl->send(res, handle_prototypes(impl->state, req.path_params.at("label"), k, mode));
  });
  srv.Get("/labels", [impl](const httplib::Request&, httplib::Response& res) {
    impl->send(res, handle_labels(impl->state));
  });
  srv.Get("/health", [impl](const httplib::Request&, httplib::Response& res) {
    impl->send(res, handle_health(impl->state));
  });
  srv.set_error_handler([impl](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      const std::string code = res.status == 404 ? "not_found" : "http_error";
      impl->send(res, error_response(res.status, code, "no such endpoint or method"));
    }
  });
  srv.set_exception_handler([impl](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    impl->send(res, error_response(500, "internal_error", what));
  });
}

HttpService::~HttpService() { stop(); }

int HttpService::bind() {
  auto& o = impl_->options;
  if (o.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(o.host);
  } else {
    impl_->port = impl_->server.bind_to_port(o.host, o.port) ? o.port : -1;
  }
  if (impl_->port < 0) throw ConfigError("cannot bind " + o.host + ":" + std::to_string(o.port));
  return impl_->port;
}

void HttpService::serve() { impl_->server.listen_after_bind(); }

void HttpService::wait_until_ready() const { impl_->server.wait_until_ready(); }

void HttpService::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace protodx
