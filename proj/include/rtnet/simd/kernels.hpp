#pragma once

#include <cstddef>
#include <string_view>

// Inner-loop arithmetic used by the convolution, linear and elementwise
// primitives. Every kernel has a scalar reference and an AVX2+FMA variant;
// the variant is picked once at startup from CPUID and can be forced with
// RTNET_SIMD=scalar|avx2.
//
// All matrices are row-major with explicit leading dimensions. The gemm
// kernels accumulate into C.

namespace rtnet::simd {

struct KernelTable {
  const char* name;

  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc);
  // C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc);
  // C[m x n] += A[k x m]^T * B[k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc);
  // y[i] = max(x[i], 0)
  void (*relu)(const double* x, double* y, std::size_t n);
  // dx[i] += x[i] > 0 ? dy[i] : 0
  void (*relu_backward)(const double* x, const double* dy, double* dx, std::size_t n);
  // z[i] = x[i] + y[i]
  void (*add)(const double* x, const double* y, double* z, std::size_t n);
};

const KernelTable& scalar_kernels();

/// The AVX2+FMA table, or nullptr when the build or the CPU lacks it.
const KernelTable* avx2_kernels();

/// Table in use by the primitives.
const KernelTable& active();

/// Switches the active table ("scalar", "avx2" or "auto"). Returns false if
/// the request cannot be honoured; the active table is then unchanged.
bool select(std::string_view name);

}  // namespace rtnet::simd
