// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "protodx/corpus.hpp"
#include "protodx/train.hpp"

namespace protodx {

// A synthetic corpus recipe plus the training setup used on it.
struct Preset {
  std::string name;
  SyntheticSpec spec;
  SplitRatios ratios;
  std::size_t min_freq = 1;
  TrainConfig train;
};

// "overfit", "desk" or "rare-labels"; ValidationError otherwise.
Preset find_preset(std::string_view name);
std::vector<std::string> preset_names();

struct PreparedData {
  SyntheticCorpus synthetic;
  CorpusSplit split;
  Vocabulary vocab;  // built on the training part
};

// Generates the corpus with `seed`, splits it with the same seed, builds the
// vocabulary on the training part and tokenises all three parts.
PreparedData prepare_data(const SyntheticSpec& spec, const SplitRatios& ratios, std::size_t min_freq,
                          std::uint64_t seed);

// Preset training config with the encoder sized for `vocab` and `seed` set.
TrainConfig preset_train_config(const Preset& preset, const Vocabulary& vocab, std::uint64_t seed);

nlohmann::ordered_json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j, SyntheticSpec base = {});
nlohmann::ordered_json to_json(const SplitRatios& ratios);
SplitRatios split_ratios_from_json(const nlohmann::json& j, SplitRatios base = {});

// Label name -> planted indicative words.
nlohmann::ordered_json planted_truth_json(const SyntheticCorpus& synthetic);

}  // namespace protodx
