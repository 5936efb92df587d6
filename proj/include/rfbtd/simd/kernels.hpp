#pragma once

// Data-parallel inner loops used by the convolution and optimizer code.
//
// Each kernel has a scalar reference implementation and, on x86-64, an
// AVX2/FMA variant compiled in its own translation unit. The variant is
// picked once at startup from CPUID; RFBTD_SIMD=scalar in the environment (or
// force_isa) pins the reference path. All matrices are row-major.

#include <cstddef>
#include <string_view>

namespace rfbtd::simd {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;

  // C[M,N] += A[M,K] * B[K,N]
  void (*gemm_nn)(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc);
  // C[M,N] += A[K,M]^T * B[K,N]
  void (*gemm_tn)(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc);
  // C[M,N] += A[M,K] * B[N,K]^T
  void (*gemm_nt)(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc);

  // y += alpha * x
  void (*axpy)(std::size_t n, float alpha, const float* x, float* y);
  // y = max(x, 0)
  void (*relu)(std::size_t n, const float* x, float* y);
  // gx = x > 0 ? gy : 0
  void (*relu_backward)(std::size_t n, const float* x, const float* gy, float* gx);
  // acc += g^2; w -= lr * g / (sqrt(acc) + eps)
  void (*adagrad)(std::size_t n, float lr, float eps, float* w, const float* g, float* acc);
};

const KernelTable& scalar_kernels();
// Null when the variant was not compiled in.
const KernelTable* avx2_kernels();

bool cpu_supports(Isa isa);

// The active table. Resolved lazily on first use.
const KernelTable& kernels();
Isa active_isa();
// Returns false (and changes nothing) when the ISA is unavailable here.
bool force_isa(Isa isa);

std::string_view isa_name(Isa isa);

}  // namespace rfbtd::simd
