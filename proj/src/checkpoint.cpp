// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

#include "protodx/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "protodx/errors.hpp"
#include "protodx/hash.hpp"
#include "protodx/train.hpp"

namespace protodx {

namespace fs = std::filesystem;

namespace {

void append_f32(std::string& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>(bits & 0xffu));
    bits >>= 8;
  }
}

float read_f32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 3; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<float>(bits);
}

std::string read_file(const fs::path& path, const std::string& field) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(field + ": cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("write failed: " + path.string());
}

}  // namespace

SerializedModel serialize_model(const ProtoModel<float>& model) {
  SerializedModel out;
  nlohmann::ordered_json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["variant"] = std::string(variant_name(model.variant));
  j["encoder"] = to_json(model.config);
  j["labels"] = model.label_vocab;
  j["label_train_freq"] = model.label_train_freq;
  nlohmann::ordered_json val = nlohmann::ordered_json::array();
  for (const auto& v : model.label_val_roc_auc) {
    val.push_back(v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr));
  }
  j["label_val_roc_auc"] = std::move(val);
  j["vocab_hash"] = model.vocab_hash();

  nlohmann::ordered_json manifest = nlohmann::ordered_json::object();
  model.params.for_each([&](const std::string& name, const Matrix<float>& m) {
    nlohmann::ordered_json entry;
    entry["offset"] = out.tensors.size();
    entry["shape"] = {m.rows(), m.cols()};
    entry["dtype"] = "f32";
    manifest[name] = std::move(entry);
    for (float v : m.flat()) append_f32(out.tensors, v);
  });
  j["tensors"] = std::move(manifest);
  out.model_json = j.dump(2) + "\n";
  out.vocab = model.vocab.serialize();
  return out;
}

void save_model(const ProtoModel<float>& model, const fs::path& dir) {
  const auto s = serialize_model(model);
  fs::create_directories(dir);
  write_file(dir / "vocab.txt", s.vocab);
  write_file(dir / "tensors.bin", s.tensors);
  write_file(dir / "model.json", s.model_json);
}

ProtoModel<float> load_model(const fs::path& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(dir / "model.json", "model.json"));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("model.json: ") + e.what());
  }
  auto field = [&](const char* name) -> const nlohmann::json& {
    if (!j.contains(name)) throw LoadError(std::string(name) + ": missing from model.json");
    return j[name];
  };

  try {
    const int version = field("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw LoadError("format_version: expected " + std::to_string(kCheckpointFormatVersion) + ", found " +
                      std::to_string(version));
    }
    const Vocabulary vocab = Vocabulary::parse(read_file(dir / "vocab.txt", "vocab.txt"));
    const std::string expected_hash = field("vocab_hash").get<std::string>();
    if (vocab.content_hash() != expected_hash) {
      throw LoadError("vocab_hash: vocab.txt hashes to " + vocab.content_hash() + ", model.json records " +
                      expected_hash);
    }
    const ModelVariant variant = parse_variant(field("variant").get<std::string>());
    EncoderConfig config = encoder_config_from_json(field("encoder"));
    if (config.vocab_size != vocab.size()) {
      throw LoadError("encoder.vocab_size: " + std::to_string(config.vocab_size) + " but vocab.txt has " +
                      std::to_string(vocab.size()) + " entries");
    }
    const auto labels = field("labels").get<std::vector<std::string>>();
    ProtoModel<float> model;
    try {
      model = init_model<float>(vocab, labels, variant, config, 0);
    } catch (const ConfigError& e) {
      throw LoadError(std::string("encoder: ") + e.what());
    }
    model.label_train_freq = field("label_train_freq").get<std::vector<std::size_t>>();
    if (model.label_train_freq.size() != labels.size()) {
      throw LoadError("label_train_freq: " + std::to_string(model.label_train_freq.size()) + " entries for " +
                      std::to_string(labels.size()) + " labels");
    }
    if (j.contains("label_val_roc_auc")) {
      for (const auto& v : j["label_val_roc_auc"]) {
        model.label_val_roc_auc.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
      }
      if (!model.label_val_roc_auc.empty() && model.label_val_roc_auc.size() != labels.size()) {
        throw LoadError("label_val_roc_auc: " + std::to_string(model.label_val_roc_auc.size()) +
                        " entries for " + std::to_string(labels.size()) + " labels");
      }
    }

    const std::string bytes = read_file(dir / "tensors.bin", "tensors.bin");
    const auto& manifest = field("tensors");
    std::size_t expected_bytes = 0;
    std::size_t seen = 0;
    model.params.for_each([&](const std::string& name, Matrix<float>& m) {
      if (!manifest.contains(name)) throw LoadError("tensors." + name + ": missing from manifest");
      const auto& entry = manifest[name];
      if (entry.value("dtype", std::string()) != "f32") throw LoadError("tensors." + name + ".dtype: expected f32");
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols()) {
        std::string got = shape.size() == 2 ? std::to_string(shape[0]) + "x" + std::to_string(shape[1]) : "?";
        const bool label_rows = name.rfind("head.", 0) == 0 && name != "head.reduce_w" && name != "head.reduce_b";
        throw LoadError("tensors." + name + ".shape: expected " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()) + ", found " + got +
                        (label_rows ? " (label count " + std::to_string(labels.size()) + ")" : ""));
      }
      const std::size_t offset = entry.at("offset").get<std::size_t>();
      const std::size_t need = m.size() * 4;
      if (offset + need > bytes.size()) {
        throw LoadError("tensors.bin size: " + std::to_string(bytes.size()) + " bytes, tensor " + name +
                        " needs [" + std::to_string(offset) + ", " + std::to_string(offset + need) + ")");
      }
      const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + offset;
      for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = read_f32(p + 4 * i);
      expected_bytes += need;
      ++seen;
    });
    if (seen != manifest.size()) {
      throw LoadError("tensors: manifest lists " + std::to_string(manifest.size()) + " tensors, model expects " +
                      std::to_string(seen));
    }
    if (bytes.size() != expected_bytes) {
      throw LoadError("tensors.bin size: " + std::to_string(bytes.size()) + " bytes, manifest describes " +
                      std::to_string(expected_bytes));
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("model.json: ") + e.what());
  } catch (const LoadError&) {
    throw;
  } catch (const ValidationError& e) {
    throw LoadError(std::string("model.json: ") + e.what());
  } catch (const ParseError& e) {
    throw LoadError(std::string("model.json: ") + e.what());
  }
}

std::string model_hash(const ProtoModel<float>& model) {
  const auto s = serialize_model(model);
  return sha256_hex(s.model_json + s.tensors);
}

}  // namespace protodx
