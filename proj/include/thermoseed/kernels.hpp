#pragma once
// Dense double-precision kernels behind the autograd engine.
//
// Every kernel has a scalar reference implementation. An AVX2/FMA variant is
// compiled on x86-64 and selected at startup when the CPU supports it. Set
// THERMOSEED_KERNELS=scalar to force the reference path.
//
// Matrices are row-major and densely packed.

#include <cstddef>
#include <string_view>

namespace thermoseed::kernels {

struct KernelTable {
  const char* name;
  // C(m x n) (+)= A(m x k) * B(k x n)
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c, bool accumulate);
  // C(m x n) (+)= A(m x k) * B(n x k)^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c, bool accumulate);
  // C(m x n) (+)= A(k x m)^T * B(k x n)
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c, bool accumulate);
  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  // z = x + y
  void (*add)(std::size_t n, const double* x, const double* y, double* z);
  // z = x * y
  void (*mul)(std::size_t n, const double* x, const double* y, double* z);
  // z += x * y
  void (*mul_acc)(std::size_t n, const double* x, const double* y, double* z);
  // y = max(x, 0)
  void (*relu)(std::size_t n, const double* x, double* y);
  // gx += gy where x > 0
  void (*relu_backward)(std::size_t n, const double* x, const double* gy, double* gx);
  double (*dot)(std::size_t n, const double* x, const double* y);
  double (*sum)(std::size_t n, const double* x);
};

const KernelTable& scalar_kernels();

// nullptr when the variant is not compiled in or the CPU lacks the features.
const KernelTable* avx2_kernels();

// The table used by the engine. Chosen once on first use.
const KernelTable& active();

// Forces a variant by name ("scalar" or "avx2"); returns false if unavailable.
bool select(std::string_view name);

}  // namespace thermoseed::kernels
