// Compiled with -mavx2 -mfma; only reached after the CPUID check in
// kernels.cpp confirms support.
#include <immintrin.h>

#include <cmath>

#include "spacebyte/kernels.h"

namespace spacebyte::kernels::avx2 {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 sh = _mm_movehdup_ps(lo);
  lo = _mm_add_ps(lo, sh);
  sh = _mm_movehl_ps(sh, lo);
  lo = _mm_add_ss(lo, sh);
  return _mm_cvtss_f32(lo);
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  const __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// Vector traits so the tiled GEMM is written once for both precisions.
struct F32 {
  using Real = float;
  using Vec = __m256;
  static constexpr std::size_t kLanes = 8;
  static Vec zero() { return _mm256_setzero_ps(); }
  static Vec load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, Vec v) { _mm256_storeu_ps(p, v); }
  static Vec bcast(float x) { return _mm256_set1_ps(x); }
  static Vec fma(Vec a, Vec b, Vec c) { return _mm256_fmadd_ps(a, b, c); }
  static Vec add(Vec a, Vec b) { return _mm256_add_ps(a, b); }
};

struct F64 {
  using Real = double;
  using Vec = __m256d;
  static constexpr std::size_t kLanes = 4;
  static Vec zero() { return _mm256_setzero_pd(); }
  static Vec load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, Vec v) { _mm256_storeu_pd(p, v); }
  static Vec bcast(double x) { return _mm256_set1_pd(x); }
  static Vec fma(Vec a, Vec b, Vec c) { return _mm256_fmadd_pd(a, b, c); }
  static Vec add(Vec a, Vec b) { return _mm256_add_pd(a, b); }
};

// 4 rows x 2 vectors register tile, accumulated over the full k range.
template <typename V, std::size_t Rows>
inline void tile(std::size_t n, std::size_t k, const typename V::Real* a,
                 const typename V::Real* b, typename V::Real* c, std::size_t j,
                 bool accumulate) {
  using Vec = typename V::Vec;
  constexpr std::size_t L = V::kLanes;
  Vec acc0[Rows];
  Vec acc1[Rows];
  for (std::size_t r = 0; r < Rows; ++r) {
    acc0[r] = V::zero();
    acc1[r] = V::zero();
  }
  for (std::size_t p = 0; p < k; ++p) {
    const Vec b0 = V::load(b + p * n + j);
    const Vec b1 = V::load(b + p * n + j + L);
    for (std::size_t r = 0; r < Rows; ++r) {
      const Vec av = V::bcast(a[r * k + p]);
      acc0[r] = V::fma(av, b0, acc0[r]);
      acc1[r] = V::fma(av, b1, acc1[r]);
    }
  }
  for (std::size_t r = 0; r < Rows; ++r) {
    typename V::Real* crow = c + r * n + j;
    if (accumulate) {
      acc0[r] = V::add(V::load(crow), acc0[r]);
      acc1[r] = V::add(V::load(crow + L), acc1[r]);
    }
    V::store(crow, acc0[r]);
    V::store(crow + L, acc1[r]);
  }
}

template <typename V, std::size_t Rows>
inline void tile_single(std::size_t n, std::size_t k, const typename V::Real* a,
                        const typename V::Real* b, typename V::Real* c, std::size_t j,
                        bool accumulate) {
  using Vec = typename V::Vec;
  Vec acc[Rows];
  for (std::size_t r = 0; r < Rows; ++r) {
    acc[r] = V::zero();
  }
  for (std::size_t p = 0; p < k; ++p) {
    const Vec b0 = V::load(b + p * n + j);
    for (std::size_t r = 0; r < Rows; ++r) {
      acc[r] = V::fma(V::bcast(a[r * k + p]), b0, acc[r]);
    }
  }
  for (std::size_t r = 0; r < Rows; ++r) {
    typename V::Real* crow = c + r * n + j;
    if (accumulate) {
      acc[r] = V::add(V::load(crow), acc[r]);
    }
    V::store(crow, acc[r]);
  }
}

template <typename V, std::size_t Rows>
inline void tail_columns(std::size_t n, std::size_t k, const typename V::Real* a,
                         const typename V::Real* b, typename V::Real* c, std::size_t j0,
                         bool accumulate) {
  for (std::size_t r = 0; r < Rows; ++r) {
    for (std::size_t j = j0; j < n; ++j) {
      typename V::Real s = 0;
      for (std::size_t p = 0; p < k; ++p) {
        s = std::fma(a[r * k + p], b[p * n + j], s);
      }
      c[r * n + j] = accumulate ? c[r * n + j] + s : s;
    }
  }
}

template <typename V, std::size_t Rows>
inline void row_block(std::size_t n, std::size_t k, const typename V::Real* a,
                      const typename V::Real* b, typename V::Real* c, bool accumulate) {
  constexpr std::size_t L = V::kLanes;
  std::size_t j = 0;
  for (; j + 2 * L <= n; j += 2 * L) {
    tile<V, Rows>(n, k, a, b, c, j, accumulate);
  }
  for (; j + L <= n; j += L) {
    tile_single<V, Rows>(n, k, a, b, c, j, accumulate);
  }
  if (j < n) {
    tail_columns<V, Rows>(n, k, a, b, c, j, accumulate);
  }
}

template <typename V>
void gemm_impl(std::size_t m, std::size_t n, std::size_t k, const typename V::Real* a,
               const typename V::Real* b, typename V::Real* c, bool accumulate) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    row_block<V, 4>(n, k, a + i * k, b, c + i * n, accumulate);
  }
  for (; i < m; ++i) {
    row_block<V, 1>(n, k, a + i * k, b, c + i * n, accumulate);
  }
}

}  // namespace

void gemm_f32(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
              float* c, bool accumulate) {
  gemm_impl<F32>(m, n, k, a, b, c, accumulate);
}

void gemm_f64(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
              double* c, bool accumulate) {
  gemm_impl<F64>(m, n, k, a, b, c, accumulate);
}

float dot_f32(const float* x, const float* y, std::size_t n) {
  __m256 s0 = _mm256_setzero_ps();
  __m256 s1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    s0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), s0);
    s1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8), s1);
  }
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), s0);
  }
  float s = hsum(_mm256_add_ps(s0, s1));
  for (; i < n; ++i) {
    s = std::fma(x[i], y[i], s);
  }
  return s;
}

double dot_f64(const double* x, const double* y, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) {
    s = std::fma(x[i], y[i], s);
  }
  return s;
}

void axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) {
    y[i] = std::fma(alpha, x[i], y[i]);
  }
}

void axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) {
    y[i] = std::fma(alpha, x[i], y[i]);
  }
}

}  // namespace spacebyte::kernels::avx2
