#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "thermoseed/kernels.hpp"

namespace tk = thermoseed::kernels;

namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Naive triple loop, independent of both kernel tables.
void reference_gemm(std::size_t m, std::size_t n, std::size_t k, const std::vector<double>& a,
                    const std::vector<double>& b, std::vector<double>& c, bool ta, bool tb) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta ? a[p * m + i] : a[i * k + p];
        const double bv = tb ? b[j * k + p] : b[p * n + j];
        s += av * bv;
      }
      c[i * n + j] += s;
    }
  }
}

void expect_close(const std::vector<double>& x, const std::vector<double>& y, double tol) {
  ASSERT_EQ(x.size(), y.size());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x[i], y[i], tol) << "index " << i;
}

struct Shape {
  std::size_t m, n, k;
};

const Shape kShapes[] = {{1, 1, 1}, {1, 7, 3}, {5, 4, 9}, {16, 33, 17}, {16, 256, 96}, {3, 1, 65}};

}  // namespace

TEST(Kernels, ScalarGemmMatchesNaiveLoops) {
  std::mt19937_64 rng(1);
  const auto& s = tk::scalar_kernels();
  for (const auto& sh : kShapes) {
    const auto a = random_vector(sh.m * sh.k, rng);
    const auto b = random_vector(sh.k * sh.n, rng);
    const auto c0 = random_vector(sh.m * sh.n, rng);
    std::vector<double> ref = c0, got = c0;
    reference_gemm(sh.m, sh.n, sh.k, a, b, ref, false, false);
    s.gemm_nn(sh.m, sh.n, sh.k, a.data(), b.data(), got.data(), true);
    expect_close(got, ref, 1e-12);

    ref = c0;
    got = c0;
    reference_gemm(sh.m, sh.n, sh.k, a, b, ref, false, true);
    s.gemm_nt(sh.m, sh.n, sh.k, a.data(), b.data(), got.data(), true);
    expect_close(got, ref, 1e-12);

    ref = c0;
    got = c0;
    reference_gemm(sh.m, sh.n, sh.k, a, b, ref, true, false);
    s.gemm_tn(sh.m, sh.n, sh.k, a.data(), b.data(), got.data(), true);
    expect_close(got, ref, 1e-12);

    std::vector<double> zero(sh.m * sh.n, 0.0), overwrite = c0;
    reference_gemm(sh.m, sh.n, sh.k, a, b, zero, false, false);
    s.gemm_nn(sh.m, sh.n, sh.k, a.data(), b.data(), overwrite.data(), false);
    expect_close(overwrite, zero, 1e-12);
  }
}

TEST(Kernels, Avx2MatchesScalar) {
  const tk::KernelTable* v = tk::avx2_kernels();
  if (v == nullptr) GTEST_SKIP() << "AVX2 variant unavailable on this machine";
  const auto& s = tk::scalar_kernels();
  std::mt19937_64 rng(2);
  for (const auto& sh : kShapes) {
    const auto a = random_vector(sh.m * sh.k, rng);
    const auto b = random_vector(sh.k * sh.n, rng);
    const auto c0 = random_vector(sh.m * sh.n, rng);
    for (bool acc : {false, true}) {
      std::vector<double> x = c0, y = c0;
      s.gemm_nn(sh.m, sh.n, sh.k, a.data(), b.data(), x.data(), acc);
      v->gemm_nn(sh.m, sh.n, sh.k, a.data(), b.data(), y.data(), acc);
      expect_close(x, y, 1e-12);
      x = c0;
      y = c0;
      s.gemm_nt(sh.m, sh.n, sh.k, a.data(), b.data(), x.data(), acc);
      v->gemm_nt(sh.m, sh.n, sh.k, a.data(), b.data(), y.data(), acc);
      expect_close(x, y, 1e-12);
      x = c0;
      y = c0;
      s.gemm_tn(sh.m, sh.n, sh.k, a.data(), b.data(), x.data(), acc);
      v->gemm_tn(sh.m, sh.n, sh.k, a.data(), b.data(), y.data(), acc);
      expect_close(x, y, 1e-12);
    }
  }
  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 8u, 31u, 257u}) {
    const auto x = random_vector(n, rng);
    const auto y0 = random_vector(n, rng);
    std::vector<double> p = y0, q = y0;
    s.axpy(n, 0.37, x.data(), p.data());
    v->axpy(n, 0.37, x.data(), q.data());
    expect_close(p, q, 1e-15);
    s.add(n, x.data(), y0.data(), p.data());
    v->add(n, x.data(), y0.data(), q.data());
    expect_close(p, q, 0.0);
    s.mul(n, x.data(), y0.data(), p.data());
    v->mul(n, x.data(), y0.data(), q.data());
    expect_close(p, q, 0.0);
    p = y0;
    q = y0;
    s.mul_acc(n, x.data(), x.data(), p.data());
    v->mul_acc(n, x.data(), x.data(), q.data());
    expect_close(p, q, 1e-15);
    s.relu(n, x.data(), p.data());
    v->relu(n, x.data(), q.data());
    expect_close(p, q, 0.0);
    p = y0;
    q = y0;
    s.relu_backward(n, x.data(), y0.data(), p.data());
    v->relu_backward(n, x.data(), y0.data(), q.data());
    expect_close(p, q, 0.0);
    EXPECT_NEAR(s.dot(n, x.data(), y0.data()), v->dot(n, x.data(), y0.data()), 1e-12);
    EXPECT_NEAR(s.sum(n, x.data()), v->sum(n, x.data()), 1e-12);
  }
}

TEST(Kernels, ReluSemantics) {
  const auto& s = tk::scalar_kernels();
  const std::vector<double> x{-1.0, 0.0, 2.0};
  std::vector<double> y(3);
  s.relu(3, x.data(), y.data());
  EXPECT_EQ(y, (std::vector<double>{0.0, 0.0, 2.0}));
  // Subgradient at zero is zero.
  std::vector<double> g(3, 0.0);
  const std::vector<double> gy{1.0, 1.0, 1.0};
  s.relu_backward(3, x.data(), gy.data(), g.data());
  EXPECT_EQ(g, (std::vector<double>{0.0, 0.0, 1.0}));
}

TEST(Kernels, SelectByName) {
  EXPECT_TRUE(tk::select("scalar"));
  EXPECT_STREQ(tk::active().name, "scalar");
  EXPECT_FALSE(tk::select("no-such-variant"));
  if (tk::avx2_kernels() != nullptr) {
    EXPECT_TRUE(tk::select("avx2"));
    EXPECT_STREQ(tk::active().name, "avx2");
  }
}
