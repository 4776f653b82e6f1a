// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

#include "protodx/metrics.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>

#include "protodx/errors.hpp"

namespace protodx {

std::optional<double> roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ContractError("roc_auc: length mismatch");
  const std::size_t n = scores.size();
  std::size_t positives = 0;
  for (auto y : labels) positives += y ? 1 : 0;
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average 1-based ranks over tie groups; ranks are multiples of 0.5.
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]]) positive_rank_sum += avg_rank;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

std::optional<double> pr_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ContractError("pr_auc: length mismatch");
  std::size_t positives = 0;
  for (auto y : labels) positives += y ? 1 : 0;
  if (positives == 0) return std::nullopt;
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!labels[order[r]]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return sum / static_cast<double>(positives);
}

double micro_roc_auc(const Matrix<double>& scores, const BinaryMatrix& labels) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols()) {
    throw ContractError("micro_roc_auc: shape mismatch");
  }
  auto auc = roc_auc(scores.flat(), labels.flat());
  if (!auc) throw ValidationError("micro_roc_auc: pooled cells have no positive or no negative");
  return *auc;
}

const std::vector<FrequencyBucket>& frequency_buckets() {
  static const std::vector<FrequencyBucket> buckets{
      {"1-9", 1, 10}, {"10-50", 10, 51}, {"51-100", 51, 101}, {"101+", 101, SIZE_MAX}};
  return buckets;
}

std::vector<BucketResult> bucketed_macro(std::span<const std::optional<double>> per_label,
                                         std::span<const std::size_t> label_train_freq) {
  if (per_label.size() != label_train_freq.size()) throw ContractError("bucketed_macro: length mismatch");
  std::vector<BucketResult> out;
  for (const auto& b : frequency_buckets()) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t c = 0; c < per_label.size(); ++c) {
      const std::size_t f = label_train_freq[c];
      if (!per_label[c] || f < b.lo || f >= b.hi) continue;
      sum += *per_label[c];
      ++count;
    }
    if (count > 0) out.push_back({b, sum / static_cast<double>(count), count});
  }
  return out;
}

std::optional<double> macro_mean(std::span<const std::optional<double>> values) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& v : values) {
    if (!v) continue;
    sum += *v;
    ++count;
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

MetricReport evaluate_scores(const Matrix<double>& scores, const BinaryMatrix& labels,
                             const std::vector<std::string>& label_names,
                             std::span<const std::size_t> label_train_freq) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols() ||
      scores.cols() != label_names.size() || label_train_freq.size() != label_names.size()) {
    throw ContractError("evaluate_scores: shape mismatch");
  }
  MetricReport report;
  const std::size_t n_docs = scores.rows();
  const std::size_t n_labels = scores.cols();
  std::vector<double> col_scores(n_docs);
  std::vector<std::uint8_t> col_labels(n_docs);
  std::vector<std::optional<double>> rocs(n_labels), prs(n_labels);
  for (std::size_t c = 0; c < n_labels; ++c) {
    std::size_t positives = 0;
    for (std::size_t p = 0; p < n_docs; ++p) {
      col_scores[p] = scores(p, c);
      col_labels[p] = labels(p, c);
      positives += labels(p, c) ? 1 : 0;
    }
    LabelMetrics m;
    m.label = label_names[c];
    m.train_freq = label_train_freq[c];
    m.positives = positives;
    m.roc_auc = roc_auc(col_scores, col_labels);
    if (m.roc_auc) m.pr_auc = pr_auc(col_scores, col_labels);
    if (!m.roc_auc) ++report.excluded_degenerate;
    rocs[c] = m.roc_auc;
    prs[c] = m.pr_auc;
    report.per_label.push_back(std::move(m));
  }
  report.roc_auc_macro = macro_mean(rocs);
  report.pr_auc_macro = macro_mean(prs);
  report.roc_auc_micro = roc_auc(scores.flat(), labels.flat());
  report.buckets = bucketed_macro(rocs, label_train_freq);
  return report;
}

namespace {

nlohmann::ordered_json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

nlohmann::ordered_json to_json(const MetricReport& report, bool include_buckets) {
  nlohmann::ordered_json out;
  out["roc_auc_macro"] = optional_number(report.roc_auc_macro);
  out["roc_auc_micro"] = optional_number(report.roc_auc_micro);
  out["pr_auc_macro"] = optional_number(report.pr_auc_macro);
  nlohmann::ordered_json per_label = nlohmann::ordered_json::array();
  for (const auto& m : report.per_label) {
    nlohmann::ordered_json entry;
    entry["label"] = m.label;
    entry["train_freq"] = m.train_freq;
    entry["positives"] = m.positives;
    entry["roc_auc"] = optional_number(m.roc_auc);
    entry["pr_auc"] = optional_number(m.pr_auc);
    per_label.push_back(std::move(entry));
  }
  out["per_label"] = std::move(per_label);
  nlohmann::ordered_json buckets = nlohmann::ordered_json::array();
  if (include_buckets) {
    for (const auto& b : report.buckets) {
      nlohmann::ordered_json entry;
      entry["range"] = b.bucket.name;
      entry["min_freq"] = b.bucket.lo;
      entry["max_freq"] = b.bucket.hi == SIZE_MAX ? nlohmann::ordered_json(nullptr)
                                                  : nlohmann::ordered_json(b.bucket.hi - 1);
      entry["roc_auc_macro"] = b.mean;
      entry["n_labels"] = b.n_labels;
      buckets.push_back(std::move(entry));
    }
  }
  out["buckets"] = std::move(buckets);
  out["excluded_degenerate"] = report.excluded_degenerate;
  return out;
}

}  // namespace protodx
