// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Checkpoint directory layout:
//   model.json   format_version, encoder config, variant, labels, vocab hash,
//                tensor manifest (name -> {offset, shape, dtype})
//   tensors.bin  little-endian f32, concatenated in manifest order
//   vocab.txt    one token per line, line index = id

#include <filesystem>
#include <string>

#include "protodx/protonet.hpp"

namespace protodx {

inline constexpr int kCheckpointFormatVersion = 1;

struct SerializedModel {
  std::string model_json;
  std::string tensors;
  std::string vocab;
};

SerializedModel serialize_model(const ProtoModel<float>& model);

void save_model(const ProtoModel<float>& model, const std::filesystem::path& dir);

// Throws LoadError naming the offending field.
ProtoModel<float> load_model(const std::filesystem::path& dir);

// SHA-256 over model.json followed by tensors.bin.
std::string model_hash(const ProtoModel<float>& model);

}  // namespace protodx
