#include "spacebyte/kernels.h"

#include <atomic>
#include <stdexcept>
#include <string>

namespace spacebyte::kernels {
namespace {

bool cpu_has_avx2() noexcept {
#if defined(SPACEBYTE_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

std::atomic<Backend>& active_slot() {
  static std::atomic<Backend> slot{best_available()};
  return slot;
}

}  // namespace

bool backend_available(Backend b) noexcept {
  switch (b) {
    case Backend::scalar:
      return true;
    case Backend::avx2: {
      static const bool has = cpu_has_avx2();
      return has;
    }
  }
  return false;
}

Backend best_available() noexcept {
  return backend_available(Backend::avx2) ? Backend::avx2 : Backend::scalar;
}

Backend active_backend() noexcept { return active_slot().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (!backend_available(b)) {
    throw std::invalid_argument("kernel backend '" + std::string(backend_name(b)) +
                                "' is not supported on this CPU");
  }
  active_slot().store(b, std::memory_order_relaxed);
}

std::string_view backend_name(Backend b) noexcept {
  switch (b) {
    case Backend::scalar:
      return "scalar";
    case Backend::avx2:
      return "avx2";
  }
  return "?";
}

Backend parse_backend(std::string_view name) {
  if (name == "scalar") {
    return Backend::scalar;
  }
  if (name == "avx2") {
    return Backend::avx2;
  }
  if (name == "auto") {
    return best_available();
  }
  throw std::invalid_argument("unknown kernel backend '" + std::string(name) +
                              "' (expected scalar, avx2, or auto)");
}

template <>
const KernelTable<float>& table<float>(Backend b) {
  static const KernelTable<float> ref{&scalar::gemm<float>, &scalar::dot<float>,
                                      &scalar::axpy<float>};
#ifdef SPACEBYTE_HAVE_AVX2_KERNELS
  static const KernelTable<float> simd{&avx2::gemm_f32, &avx2::dot_f32, &avx2::axpy_f32};
  if (b == Backend::avx2 && backend_available(b)) {
    return simd;
  }
#endif
  (void)b;
  return ref;
}

template <>
const KernelTable<double>& table<double>(Backend b) {
  static const KernelTable<double> ref{&scalar::gemm<double>, &scalar::dot<double>,
                                       &scalar::axpy<double>};
#ifdef SPACEBYTE_HAVE_AVX2_KERNELS
  static const KernelTable<double> simd{&avx2::gemm_f64, &avx2::dot_f64, &avx2::axpy_f64};
  if (b == Backend::avx2 && backend_available(b)) {
    return simd;
  }
#endif
  (void)b;
  return ref;
}

}  // namespace spacebyte::kernels
