// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

// Multi-label ranking metrics. A label is "degenerate" for ROC AUC when it
// has no positives or no negatives; degenerate labels are excluded from
// macro averages and counted.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "protodx/matrix.hpp"

namespace protodx {

using BinaryMatrix = Matrix<std::uint8_t>;

// Mann-Whitney statistic via average-rank summation; nullopt when degenerate.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Average precision over a stable descending sort (ties keep input order);
// nullopt when there are no positives.
std::optional<double> pr_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// All (document, label) cells pooled into one ranking problem. Throws
// ValidationError when the pooled cells are degenerate.
double micro_roc_auc(const Matrix<double>& scores, const BinaryMatrix& labels);

struct FrequencyBucket {
  std::string name;
  std::size_t lo;  // inclusive
  std::size_t hi;  // exclusive; SIZE_MAX for open-ended
};

const std::vector<FrequencyBucket>& frequency_buckets();

struct BucketResult {
  FrequencyBucket bucket;
  double mean;
  std::size_t n_labels;
};

// Mean per-label value per training-frequency bucket. Buckets with no
// included label are omitted.
std::vector<BucketResult> bucketed_macro(std::span<const std::optional<double>> per_label,
                                         std::span<const std::size_t> label_train_freq);

struct LabelMetrics {
  std::string label;
  std::size_t train_freq = 0;
  std::size_t positives = 0;
  std::optional<double> roc_auc;
  std::optional<double> pr_auc;
};

struct MetricReport {
  std::optional<double> roc_auc_macro;
  std::optional<double> roc_auc_micro;
  std::optional<double> pr_auc_macro;
  std::vector<LabelMetrics> per_label;
  std::vector<BucketResult> buckets;
  std::size_t excluded_degenerate = 0;
};

// scores/labels: documents x labels.
MetricReport evaluate_scores(const Matrix<double>& scores, const BinaryMatrix& labels,
                             const std::vector<std::string>& label_names,
                             std::span<const std::size_t> label_train_freq);

// Mean of the included per-label values; nullopt when none are included.
std::optional<double> macro_mean(std::span<const std::optional<double>> values);

nlohmann::ordered_json to_json(const MetricReport& report, bool include_buckets = true);

}  // namespace protodx
