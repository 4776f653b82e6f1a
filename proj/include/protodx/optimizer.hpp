// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "protodx/errors.hpp"
#include "protodx/matrix.hpp"

namespace protodx {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adaptive moment estimation with decoupled weight decay. Moments are kept
// per element; every registered tensor is decayed on every step, whether or
// not its gradient is zero.
template <class T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  // Registers tensors in a fixed order; `step` expects the same order.
  void add(const Matrix<T>& like) {
    m_.emplace_back(like.rows(), like.cols());
    v_.emplace_back(like.rows(), like.cols());
  }

  std::size_t size() const { return m_.size(); }
  std::size_t steps() const { return t_; }

  // lrs[i] is the learning rate applied to tensor i on this step.
  void step(const std::vector<Matrix<T>*>& params, const std::vector<const Matrix<T>*>& grads,
            const std::vector<double>& lrs) {
    if (params.size() != m_.size() || grads.size() != m_.size() || lrs.size() != m_.size()) {
      throw ContractError("AdamW::step: tensor count mismatch");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(config_.beta1);
    const T b2 = static_cast<T>(config_.beta2);
    for (std::size_t k = 0; k < params.size(); ++k) {
      T* p = params[k]->data();
      const T* g = grads[k]->data();
      T* m = m_[k].data();
      T* v = v_[k].data();
      const double lr = lrs[k];
      const T decay = static_cast<T>(1.0 - lr * config_.weight_decay);
      const T step_size = static_cast<T>(lr / bc1);
      const T inv_bc2 = static_cast<T>(1.0 / bc2);
      const T eps = static_cast<T>(config_.eps);
      const std::size_t n = params[k]->size();
      if (grads[k]->size() != n) throw ContractError("AdamW::step: gradient shape mismatch");
      for (std::size_t i = 0; i < n; ++i) {
        p[i] *= decay;
        m[i] = b1 * m[i] + (T{1} - b1) * g[i];
        v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
        p[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
      }
    }
  }

 private:
  AdamWConfig config_;
  std::vector<Matrix<T>> m_;
  std::vector<Matrix<T>> v_;
  std::size_t t_ = 0;
};

// Linear warmup to 1 over `warmup` steps, then linear decay to 0 at `total`.
// `step` is 0-based.
inline double lr_multiplier(std::size_t step, std::size_t warmup, std::size_t total) {
  if (total == 0) return 0.0;
  if (step < warmup) return static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (total <= warmup) return 1.0;
  return std::max(0.0, static_cast<double>(total - step) / static_cast<double>(total - warmup));
}

}  // namespace protodx
