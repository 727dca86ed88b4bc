#pragma once

#include <cstddef>
#include <string_view>

// Dense inner loops shared by the tensor ops. Each kernel exists as a scalar
// reference and, on x86-64, an AVX2+FMA variant; the active table is chosen
// once at startup from CPUID and may be overridden for testing.
//
// Every variant reduces in an order fixed by the extents alone, so results
// are reproducible run-to-run on one build and backend. gemm accumulates
// each output over k in increasing order; the AVX2 dot keeps lane-wise
// partial sums. The AVX2 variants fuse multiply-add and therefore differ
// from the reference by rounding only.
namespace spacebyte::kernels {

enum class Backend { scalar, avx2 };

template <typename Real>
struct KernelTable {
  // C[m x n] (+)= A[m x k] * B[k x n], all row-major and contiguous.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b,
               Real* c, bool accumulate);
  Real (*dot)(const Real* x, const Real* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(Real alpha, const Real* x, Real* y, std::size_t n);
};

bool backend_available(Backend b) noexcept;
Backend best_available() noexcept;
Backend active_backend() noexcept;
// Throws std::invalid_argument when the backend is not supported by this CPU.
void set_backend(Backend b);
std::string_view backend_name(Backend b) noexcept;
Backend parse_backend(std::string_view name);

template <typename Real>
const KernelTable<Real>& table(Backend b);

template <typename Real>
const KernelTable<Real>& active() {
  return table<Real>(active_backend());
}

// RAII override used by the equivalence tests.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend b) : previous_(active_backend()) { set_backend(b); }
  ~ScopedBackend() { set_backend(previous_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend previous_;
};

namespace scalar {
template <typename Real>
void gemm(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c,
          bool accumulate);
template <typename Real>
Real dot(const Real* x, const Real* y, std::size_t n);
template <typename Real>
void axpy(Real alpha, const Real* x, Real* y, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define SPACEBYTE_HAVE_AVX2_KERNELS 1
namespace avx2 {
void gemm_f32(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
              float* c, bool accumulate);
void gemm_f64(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
              double* c, bool accumulate);
float dot_f32(const float* x, const float* y, std::size_t n);
double dot_f64(const double* x, const double* y, std::size_t n);
void axpy_f32(float alpha, const float* x, float* y, std::size_t n);
void axpy_f64(double alpha, const double* x, double* y, std::size_t n);
}  // namespace avx2
#endif

}  // namespace spacebyte::kernels
