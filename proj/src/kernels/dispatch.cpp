// Copyright 2026 The protodx Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <string_view>

#include "protodx/kernels.hpp"

namespace protodx::simd {

#if defined(PROTODX_HAVE_AVX2)
namespace avx2 {
float dot_f32(const float*, const float*, std::size_t);
double dot_f64(const double*, const double*, std::size_t);
void axpy_f32(float, const float*, float*, std::size_t);
void axpy_f64(double, const double*, double*, std::size_t);
float squared_distance_f32(const float*, const float*, std::size_t);
double squared_distance_f64(const double*, const double*, std::size_t);
void scale_f32(float, float*, std::size_t);
void scale_f64(double, double*, std::size_t);
}  // namespace avx2
#endif

namespace {

bool cpu_has_avx2() {
#if defined(PROTODX_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

bool scalar_forced() {
  const char* env = std::getenv("PROTODX_SIMD");
  return env != nullptr && std::string_view(env) == "scalar";
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

template <>
const KernelTable<float>* avx2_kernels<float>() {
#if defined(PROTODX_HAVE_AVX2)
  static const KernelTable<float> table{Isa::kAvx2, &avx2::dot_f32, &avx2::axpy_f32,
                                        &avx2::squared_distance_f32, &avx2::scale_f32};
  static const bool supported = cpu_has_avx2();
  return supported ? &table : nullptr;
#else
  return nullptr;
#endif
}

template <>
const KernelTable<double>* avx2_kernels<double>() {
#if defined(PROTODX_HAVE_AVX2)
  static const KernelTable<double> table{Isa::kAvx2, &avx2::dot_f64, &avx2::axpy_f64,
                                         &avx2::squared_distance_f64, &avx2::scale_f64};
  static const bool supported = cpu_has_avx2();
  return supported ? &table : nullptr;
#else
  return nullptr;
#endif
}

template <class T>
const KernelTable<T>& active_kernels() {
  static const KernelTable<T>& table = []() -> const KernelTable<T>& {
    if (!scalar_forced()) {
      if (const auto* fast = avx2_kernels<T>()) return *fast;
    }
    return scalar_kernels<T>();
  }();
  return table;
}

template const KernelTable<float>& active_kernels<float>();
template const KernelTable<double>& active_kernels<double>();

Isa active_isa() { return active_kernels<float>().isa; }

}  // namespace protodx::simd
