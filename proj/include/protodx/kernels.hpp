// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

// Inner-loop vector kernels. Every kernel has a scalar reference version and,
// on x86-64, an AVX2+FMA version. The active table is chosen once at first
// use from CPUID; PROTODX_SIMD=scalar forces the reference path.

#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace protodx::simd {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

template <class T>
struct KernelTable {
  Isa isa;
  // sum_i a[i] * b[i]
  T (*dot)(const T* a, const T* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  // sum_i (a[i] - b[i])^2
  T (*squared_distance)(const T* a, const T* b, std::size_t n);
  // x[i] *= alpha
  void (*scale)(T alpha, T* x, std::size_t n);
};

template <class T>
const KernelTable<T>& scalar_kernels();

// nullptr when the binary was built without AVX2 support or the CPU lacks it.
template <class T>
const KernelTable<T>* avx2_kernels();

template <class T>
const KernelTable<T>& active_kernels();

Isa active_isa();

template <class T>
inline T dot(std::span<const T> a, std::span<const T> b) {
  return active_kernels<T>().dot(a.data(), b.data(), a.size());
}

template <class T>
inline void axpy(T alpha, std::span<const T> x, std::span<T> y) {
  active_kernels<T>().axpy(alpha, x.data(), y.data(), x.size());
}

template <class T>
inline T squared_distance(std::span<const T> a, std::span<const T> b) {
  return active_kernels<T>().squared_distance(a.data(), b.data(), a.size());
}

template <class T>
inline void scale(T alpha, std::span<T> x) {
  active_kernels<T>().scale(alpha, x.data(), x.size());
}

}  // namespace protodx::simd
