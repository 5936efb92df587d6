#include <cmath>

#include "rfbtd/simd/kernels.hpp"

namespace rfbtd::simd {

namespace {

void gemm_nn(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    float* ci = c + static_cast<std::ptrdiff_t>(i) * ldc;
    for (int p = 0; p < k; ++p) {
      const float aip = a[static_cast<std::ptrdiff_t>(i) * lda + p];
      if (aip == 0.0f) continue;
      const float* bp = b + static_cast<std::ptrdiff_t>(p) * ldb;
      for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void gemm_tn(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc) {
  for (int p = 0; p < k; ++p) {
    const float* ap = a + static_cast<std::ptrdiff_t>(p) * lda;
    const float* bp = b + static_cast<std::ptrdiff_t>(p) * ldb;
    for (int i = 0; i < m; ++i) {
      const float api = ap[i];
      if (api == 0.0f) continue;
      float* ci = c + static_cast<std::ptrdiff_t>(i) * ldc;
      for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

void gemm_nt(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    const float* ai = a + static_cast<std::ptrdiff_t>(i) * lda;
    for (int j = 0; j < n; ++j) {
      const float* bj = b + static_cast<std::ptrdiff_t>(j) * ldb;
      float s = 0.0f;
      for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
      c[static_cast<std::ptrdiff_t>(i) * ldc + j] += s;
    }
  }
}

void axpy(std::size_t n, float alpha, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void relu(std::size_t n, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(std::size_t n, const float* x, const float* gy, float* gx) {
  for (std::size_t i = 0; i < n; ++i) gx[i] = x[i] > 0.0f ? gy[i] : 0.0f;
}

void adagrad(std::size_t n, float lr, float eps, float* w, const float* g, float* acc) {
  for (std::size_t i = 0; i < n; ++i) {
    acc[i] += g[i] * g[i];
    w[i] -= lr * g[i] / (std::sqrt(acc[i]) + eps);
  }
}

constexpr KernelTable kTable{Isa::scalar, gemm_nn, gemm_tn, gemm_nt, axpy, relu, relu_backward, adagrad};

}  // namespace

const KernelTable& scalar_kernels() { return kTable; }

}  // namespace rfbtd::simd
