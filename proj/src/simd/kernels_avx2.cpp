// Compiled with -mavx2 -mfma. Only reached after a CPUID check.

#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "rfbtd/simd/kernels.hpp"

namespace rfbtd::simd {

namespace {

constexpr int kBlockK = 256;

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 sh = _mm_movehdup_ps(lo);
  __m128 s = _mm_add_ps(lo, sh);
  sh = _mm_movehl_ps(sh, s);
  s = _mm_add_ss(s, sh);
  return _mm_cvtss_f32(s);
}

// A element (row i, depth p) for the plain and transposed layouts.
template <bool TransA>
inline float a_at(const float* a, int lda, int i, int p) {
  if constexpr (TransA) {
    return a[static_cast<std::ptrdiff_t>(p) * lda + i];
  } else {
    return a[static_cast<std::ptrdiff_t>(i) * lda + p];
  }
}

template <bool TransA>
void gemm_block(int m, int n, int k0, int k1, const float* a, int lda, const float* b, int ldb, float* c, int ldc) {
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    float* c0 = c + static_cast<std::ptrdiff_t>(i) * ldc;
    float* c1 = c0 + ldc;
    float* c2 = c1 + ldc;
    float* c3 = c2 + ldc;
    int j = 0;
    for (; j + 16 <= n; j += 16) {
      __m256 r00 = _mm256_loadu_ps(c0 + j), r01 = _mm256_loadu_ps(c0 + j + 8);
      __m256 r10 = _mm256_loadu_ps(c1 + j), r11 = _mm256_loadu_ps(c1 + j + 8);
      __m256 r20 = _mm256_loadu_ps(c2 + j), r21 = _mm256_loadu_ps(c2 + j + 8);
      __m256 r30 = _mm256_loadu_ps(c3 + j), r31 = _mm256_loadu_ps(c3 + j + 8);
      for (int p = k0; p < k1; ++p) {
        const float* bp = b + static_cast<std::ptrdiff_t>(p) * ldb + j;
        const __m256 b0 = _mm256_loadu_ps(bp);
        const __m256 b1 = _mm256_loadu_ps(bp + 8);
        __m256 av = _mm256_set1_ps(a_at<TransA>(a, lda, i, p));
        r00 = _mm256_fmadd_ps(av, b0, r00);
        r01 = _mm256_fmadd_ps(av, b1, r01);
        av = _mm256_set1_ps(a_at<TransA>(a, lda, i + 1, p));
        r10 = _mm256_fmadd_ps(av, b0, r10);
        r11 = _mm256_fmadd_ps(av, b1, r11);
        av = _mm256_set1_ps(a_at<TransA>(a, lda, i + 2, p));
        r20 = _mm256_fmadd_ps(av, b0, r20);
        r21 = _mm256_fmadd_ps(av, b1, r21);
        av = _mm256_set1_ps(a_at<TransA>(a, lda, i + 3, p));
        r30 = _mm256_fmadd_ps(av, b0, r30);
        r31 = _mm256_fmadd_ps(av, b1, r31);
      }
      _mm256_storeu_ps(c0 + j, r00);
      _mm256_storeu_ps(c0 + j + 8, r01);
      _mm256_storeu_ps(c1 + j, r10);
      _mm256_storeu_ps(c1 + j + 8, r11);
      _mm256_storeu_ps(c2 + j, r20);
      _mm256_storeu_ps(c2 + j + 8, r21);
      _mm256_storeu_ps(c3 + j, r30);
      _mm256_storeu_ps(c3 + j + 8, r31);
    }
    for (; j + 8 <= n; j += 8) {
      __m256 r0 = _mm256_loadu_ps(c0 + j), r1 = _mm256_loadu_ps(c1 + j);
      __m256 r2 = _mm256_loadu_ps(c2 + j), r3 = _mm256_loadu_ps(c3 + j);
      for (int p = k0; p < k1; ++p) {
        const __m256 bv = _mm256_loadu_ps(b + static_cast<std::ptrdiff_t>(p) * ldb + j);
        r0 = _mm256_fmadd_ps(_mm256_set1_ps(a_at<TransA>(a, lda, i, p)), bv, r0);
        r1 = _mm256_fmadd_ps(_mm256_set1_ps(a_at<TransA>(a, lda, i + 1, p)), bv, r1);
        r2 = _mm256_fmadd_ps(_mm256_set1_ps(a_at<TransA>(a, lda, i + 2, p)), bv, r2);
        r3 = _mm256_fmadd_ps(_mm256_set1_ps(a_at<TransA>(a, lda, i + 3, p)), bv, r3);
      }
      _mm256_storeu_ps(c0 + j, r0);
      _mm256_storeu_ps(c1 + j, r1);
      _mm256_storeu_ps(c2 + j, r2);
      _mm256_storeu_ps(c3 + j, r3);
    }
    for (; j < n; ++j) {
      for (int r = 0; r < 4; ++r) {
        float s = 0.0f;
        for (int p = k0; p < k1; ++p) s += a_at<TransA>(a, lda, i + r, p) * b[static_cast<std::ptrdiff_t>(p) * ldb + j];
        c[static_cast<std::ptrdiff_t>(i + r) * ldc + j] += s;
      }
    }
  }
  for (; i < m; ++i) {
    float* ci = c + static_cast<std::ptrdiff_t>(i) * ldc;
    for (int p = k0; p < k1; ++p) {
      const float aip = a_at<TransA>(a, lda, i, p);
      const float* bp = b + static_cast<std::ptrdiff_t>(p) * ldb;
      const __m256 av = _mm256_set1_ps(aip);
      int j = 0;
      for (; j + 8 <= n; j += 8) _mm256_storeu_ps(ci + j, _mm256_fmadd_ps(av, _mm256_loadu_ps(bp + j), _mm256_loadu_ps(ci + j)));
      for (; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

template <bool TransA>
void gemm(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc) {
  for (int k0 = 0; k0 < k; k0 += kBlockK) {
    gemm_block<TransA>(m, n, k0, std::min(k, k0 + kBlockK), a, lda, b, ldb, c, ldc);
  }
}

void gemm_nn(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc) {
  gemm<false>(m, n, k, a, lda, b, ldb, c, ldc);
}

void gemm_tn(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc) {
  gemm<true>(m, n, k, a, lda, b, ldb, c, ldc);
}

inline float dot(const float* x, const float* y, int k) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  int p = 0;
  for (; p + 16 <= k; p += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + p), _mm256_loadu_ps(y + p), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + p + 8), _mm256_loadu_ps(y + p + 8), acc1);
  }
  for (; p + 8 <= k; p += 8) acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + p), _mm256_loadu_ps(y + p), acc0);
  float s = hsum(_mm256_add_ps(acc0, acc1));
  for (; p < k; ++p) s += x[p] * y[p];
  return s;
}

void gemm_nt(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    const float* ai = a + static_cast<std::ptrdiff_t>(i) * lda;
    float* ci = c + static_cast<std::ptrdiff_t>(i) * ldc;
    for (int j = 0; j < n; ++j) ci[j] += dot(ai, b + static_cast<std::ptrdiff_t>(j) * ldb, k);
  }
}

void axpy(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void relu(std::size_t n, const float* x, float* y) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(std::size_t n, const float* x, const float* gy, float* gx) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(gx + i, _mm256_and_ps(mask, _mm256_loadu_ps(gy + i)));
  }
  for (; i < n; ++i) gx[i] = x[i] > 0.0f ? gy[i] : 0.0f;
}

void adagrad(std::size_t n, float lr, float eps, float* w, const float* g, float* acc) {
  const __m256 lrv = _mm256_set1_ps(lr);
  const __m256 epsv = _mm256_set1_ps(eps);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 gv = _mm256_loadu_ps(g + i);
    const __m256 av = _mm256_add_ps(_mm256_loadu_ps(acc + i), _mm256_mul_ps(gv, gv));
    _mm256_storeu_ps(acc + i, av);
    const __m256 step = _mm256_div_ps(_mm256_mul_ps(lrv, gv), _mm256_add_ps(_mm256_sqrt_ps(av), epsv));
    _mm256_storeu_ps(w + i, _mm256_sub_ps(_mm256_loadu_ps(w + i), step));
  }
  for (; i < n; ++i) {
    acc[i] += g[i] * g[i];
    w[i] -= lr * g[i] / (std::sqrt(acc[i]) + eps);
  }
}

constexpr KernelTable kTable{Isa::avx2, gemm_nn, gemm_tn, gemm_nt, axpy, relu, relu_backward, adagrad};

}  // namespace

const KernelTable* avx2_kernels_impl() { return &kTable; }

}  // namespace rfbtd::simd
