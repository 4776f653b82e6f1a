// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

// Read-only JSON inference service. Handlers are pure functions of the
// immutable ServiceState and the request, so they can be exercised without
// a socket; HttpService binds them to HTTP routes.

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "protodx/explain.hpp"
#include "protodx/protonet.hpp"

namespace protodx {

struct ServiceState {
  ProtoModel<float> model;
  std::string model_hash;
  bool has_exemplar_index = false;
  // Per label: candidates ascending by (distance, doc id).
  std::vector<std::vector<PrototypeExemplar>> exemplars;
};

// Builds the exemplar index from `train` when given (prototype variants
// only). `train` must be tokenised with the model's vocabulary.
ServiceState make_service_state(ProtoModel<float> model, const Corpus* train);

struct Response {
  int status = 200;
  nlohmann::ordered_json body;
};

Response error_response(int status, std::string_view code, std::string_view message);

inline constexpr std::size_t kDefaultTopK = 5;
inline constexpr std::size_t kDefaultExemplarK = 3;

// POST /predict {text, top_k}
Response handle_predict(const ServiceState& state, std::string_view body);
// GET /prototypes/{label}?k=&mode=
Response handle_prototypes(const ServiceState& state, std::string_view label, std::optional<std::string> k,
                           std::optional<std::string> mode);
// GET /labels
Response handle_labels(const ServiceState& state);
// GET /health
Response handle_health(const ServiceState& state);

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;              // 0 picks a free port
  std::string allow_origin;     // CORS origin; empty disables CORS headers
  std::size_t threads = 4;
};

class HttpService {
 public:
  HttpService(const ServiceState& state, ServerOptions options);
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  // Returns the bound port; throws ConfigError when binding fails.
  int bind();
  // Blocks until stop() is called.
  void serve();
  // Blocks until serve() is accepting connections.
  void wait_until_ready() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace protodx
