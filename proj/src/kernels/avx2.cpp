// AVX2/FMA kernels. Built with -mavx2 -mfma; only reached through the
// dispatch table after a runtime CPU check.

#include <immintrin.h>

#include "thermoseed/kernels.hpp"

namespace thermoseed::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

template <bool TransA>
inline const double* a_ptr(const double* a, std::size_t m, std::size_t k, std::size_t i,
                           std::size_t p) {
  return TransA ? a + p * m + i : a + i * k + p;
}

// C(m x n) (+)= op(A) * B where op(A)(i, p) is A[i*k + p] or A[p*m + i].
// Register block: 4 rows x 8 columns.
template <bool TransA>
void gemm_xn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    double* c0 = c + (i + 0) * n;
    double* c1 = c + (i + 1) * n;
    double* c2 = c + (i + 2) * n;
    double* c3 = c + (i + 3) * n;
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      __m256d r00, r01, r10, r11, r20, r21, r30, r31;
      if (accumulate) {
        r00 = _mm256_loadu_pd(c0 + j);
        r01 = _mm256_loadu_pd(c0 + j + 4);
        r10 = _mm256_loadu_pd(c1 + j);
        r11 = _mm256_loadu_pd(c1 + j + 4);
        r20 = _mm256_loadu_pd(c2 + j);
        r21 = _mm256_loadu_pd(c2 + j + 4);
        r30 = _mm256_loadu_pd(c3 + j);
        r31 = _mm256_loadu_pd(c3 + j + 4);
      } else {
        r00 = r01 = r10 = r11 = r20 = r21 = r30 = r31 = _mm256_setzero_pd();
      }
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * n + j;
        const __m256d b0 = _mm256_loadu_pd(brow);
        const __m256d b1 = _mm256_loadu_pd(brow + 4);
        __m256d av = _mm256_broadcast_sd(a_ptr<TransA>(a, m, k, i + 0, p));
        r00 = _mm256_fmadd_pd(av, b0, r00);
        r01 = _mm256_fmadd_pd(av, b1, r01);
        av = _mm256_broadcast_sd(a_ptr<TransA>(a, m, k, i + 1, p));
        r10 = _mm256_fmadd_pd(av, b0, r10);
        r11 = _mm256_fmadd_pd(av, b1, r11);
        av = _mm256_broadcast_sd(a_ptr<TransA>(a, m, k, i + 2, p));
        r20 = _mm256_fmadd_pd(av, b0, r20);
        r21 = _mm256_fmadd_pd(av, b1, r21);
        av = _mm256_broadcast_sd(a_ptr<TransA>(a, m, k, i + 3, p));
        r30 = _mm256_fmadd_pd(av, b0, r30);
        r31 = _mm256_fmadd_pd(av, b1, r31);
      }
      _mm256_storeu_pd(c0 + j, r00);
      _mm256_storeu_pd(c0 + j + 4, r01);
      _mm256_storeu_pd(c1 + j, r10);
      _mm256_storeu_pd(c1 + j + 4, r11);
      _mm256_storeu_pd(c2 + j, r20);
      _mm256_storeu_pd(c2 + j + 4, r21);
      _mm256_storeu_pd(c3 + j, r30);
      _mm256_storeu_pd(c3 + j + 4, r31);
    }
    for (; j < n; ++j) {
      double s0 = accumulate ? c0[j] : 0.0;
      double s1 = accumulate ? c1[j] : 0.0;
      double s2 = accumulate ? c2[j] : 0.0;
      double s3 = accumulate ? c3[j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double bv = b[p * n + j];
        s0 += *a_ptr<TransA>(a, m, k, i + 0, p) * bv;
        s1 += *a_ptr<TransA>(a, m, k, i + 1, p) * bv;
        s2 += *a_ptr<TransA>(a, m, k, i + 2, p) * bv;
        s3 += *a_ptr<TransA>(a, m, k, i + 3, p) * bv;
      }
      c0[j] = s0;
      c1[j] = s1;
      c2[j] = s2;
      c3[j] = s3;
    }
  }
  for (; i < m; ++i) {
    double* crow = c + i * n;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      __m256d r = accumulate ? _mm256_loadu_pd(crow + j) : _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d av = _mm256_broadcast_sd(a_ptr<TransA>(a, m, k, i, p));
        r = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + p * n + j), r);
      }
      _mm256_storeu_pd(crow + j, r);
    }
    for (; j < n; ++j) {
      double s = accumulate ? crow[j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += *a_ptr<TransA>(a, m, k, i, p) * b[p * n + j];
      crow[j] = s;
    }
  }
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  gemm_xn<false>(m, n, k, a, b, c, accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  gemm_xn<true>(m, n, k, a, b, c, accumulate);
}

double dot(std::size_t n, const double* x, const double* y);

// Dot-product form; 2 rows of A against 4 rows of B per block.
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  const std::size_t kv = k - k % 4;
  std::size_t i = 0;
  for (; i + 2 <= m; i += 2) {
    const double* a0 = a + i * k;
    const double* a1 = a0 + k;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + j * k;
      const double* b1 = b0 + k;
      const double* b2 = b1 + k;
      const double* b3 = b2 + k;
      __m256d s00 = _mm256_setzero_pd(), s01 = s00, s02 = s00, s03 = s00;
      __m256d s10 = s00, s11 = s00, s12 = s00, s13 = s00;
      for (std::size_t p = 0; p < kv; p += 4) {
        const __m256d va0 = _mm256_loadu_pd(a0 + p);
        const __m256d va1 = _mm256_loadu_pd(a1 + p);
        __m256d vb = _mm256_loadu_pd(b0 + p);
        s00 = _mm256_fmadd_pd(va0, vb, s00);
        s10 = _mm256_fmadd_pd(va1, vb, s10);
        vb = _mm256_loadu_pd(b1 + p);
        s01 = _mm256_fmadd_pd(va0, vb, s01);
        s11 = _mm256_fmadd_pd(va1, vb, s11);
        vb = _mm256_loadu_pd(b2 + p);
        s02 = _mm256_fmadd_pd(va0, vb, s02);
        s12 = _mm256_fmadd_pd(va1, vb, s12);
        vb = _mm256_loadu_pd(b3 + p);
        s03 = _mm256_fmadd_pd(va0, vb, s03);
        s13 = _mm256_fmadd_pd(va1, vb, s13);
      }
      double r[2][4] = {{hsum(s00), hsum(s01), hsum(s02), hsum(s03)},
                        {hsum(s10), hsum(s11), hsum(s12), hsum(s13)}};
      for (std::size_t p = kv; p < k; ++p) {
        r[0][0] += a0[p] * b0[p];
        r[0][1] += a0[p] * b1[p];
        r[0][2] += a0[p] * b2[p];
        r[0][3] += a0[p] * b3[p];
        r[1][0] += a1[p] * b0[p];
        r[1][1] += a1[p] * b1[p];
        r[1][2] += a1[p] * b2[p];
        r[1][3] += a1[p] * b3[p];
      }
      for (std::size_t q = 0; q < 4; ++q) {
        double& d0 = c[i * n + j + q];
        double& d1 = c[(i + 1) * n + j + q];
        d0 = accumulate ? d0 + r[0][q] : r[0][q];
        d1 = accumulate ? d1 + r[1][q] : r[1][q];
      }
    }
    for (; j < n; ++j) {
      const double s0 = dot(k, a0, b + j * k);
      const double s1 = dot(k, a1, b + j * k);
      c[i * n + j] = accumulate ? c[i * n + j] + s0 : s0;
      c[(i + 1) * n + j] = accumulate ? c[(i + 1) * n + j] + s1 : s1;
    }
  }
  for (; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double s = dot(k, a + i * k, b + j * k);
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void add(std::size_t n, const double* x, const double* y, double* z) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(z + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) z[i] = x[i] + y[i];
}

void mul(std::size_t n, const double* x, const double* y, double* z) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(z + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) z[i] = x[i] * y[i];
}

void mul_acc(std::size_t n, const double* x, const double* y, double* z) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(z + i, _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i),
                                            _mm256_loadu_pd(z + i)));
  }
  for (; i < n; ++i) z[i] += x[i] * y[i];
}

void relu(std::size_t n, const double* x, double* y) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    // Keeps x where x > 0, otherwise +0.0 (matches the scalar definition).
    const __m256d mask = _mm256_cmp_pd(v, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(y + i, _mm256_and_pd(mask, v));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(std::size_t n, const double* x, const double* gy, double* gx) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d g = _mm256_and_pd(mask, _mm256_loadu_pd(gy + i));
    _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), g));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0) gx[i] += gy[i];
  }
}

double dot(std::size_t n, const double* x, const double* y) {
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
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

double sum(std::size_t n, const double* x) {
  __m256d s0 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) s0 = _mm256_add_pd(s0, _mm256_loadu_pd(x + i));
  double s = hsum(s0);
  for (; i < n; ++i) s += x[i];
  return s;
}

constexpr KernelTable kAvx2{
    "avx2", gemm_nn, gemm_nt, gemm_tn, axpy, add, mul, mul_acc, relu, relu_backward, dot, sum,
};

}  // namespace

const KernelTable* avx2_kernels_unchecked() { return &kAvx2; }

}  // namespace thermoseed::kernels
