#include <algorithm>
#include <vector>

#include "spacebyte/kernels.h"

namespace spacebyte::kernels::scalar {

template <typename Real>
void gemm(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c,
          bool accumulate) {
  std::vector<Real> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), Real(0));
    const Real* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = arow[p];
      const Real* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        acc[j] += av * brow[j];
      }
    }
    Real* crow = c + i * n;
    if (accumulate) {
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += acc[j];
      }
    } else {
      std::copy(acc.begin(), acc.end(), crow);
    }
  }
}

template <typename Real>
Real dot(const Real* x, const Real* y, std::size_t n) {
  Real s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    s += x[i] * y[i];
  }
  return s;
}

template <typename Real>
void axpy(Real alpha, const Real* x, Real* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] += alpha * x[i];
  }
}

template void gemm<float>(std::size_t, std::size_t, std::size_t, const float*, const float*,
                          float*, bool);
template void gemm<double>(std::size_t, std::size_t, std::size_t, const double*,
                           const double*, double*, bool);
template float dot<float>(const float*, const float*, std::size_t);
template double dot<double>(const double*, const double*, std::size_t);
template void axpy<float>(float, const float*, float*, std::size_t);
template void axpy<double>(double, const double*, double*, std::size_t);

}  // namespace spacebyte::kernels::scalar
