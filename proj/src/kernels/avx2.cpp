// SPDX-License-Identifier: Apache-2.0
//
// AVX2 + FMA kernels. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after a runtime CPU check.
#include <immintrin.h>

#include "fscap/kernels.hpp"

namespace fscap::kernels::detail {
namespace {

template <typename T>
struct Vec;

template <>
struct Vec<float> {
  using Reg = __m256;
  static constexpr std::size_t kLanes = 8;
  static Reg zero() { return _mm256_setzero_ps(); }
  static Reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, Reg v) { _mm256_storeu_ps(p, v); }
  static Reg splat(float v) { return _mm256_set1_ps(v); }
  static Reg fmadd(Reg a, Reg b, Reg c) { return _mm256_fmadd_ps(a, b, c); }
  static Reg add(Reg a, Reg b) { return _mm256_add_ps(a, b); }
  static float hsum(Reg v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
  }
};

template <>
struct Vec<double> {
  using Reg = __m256d;
  static constexpr std::size_t kLanes = 4;
  static Reg zero() { return _mm256_setzero_pd(); }
  static Reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, Reg v) { _mm256_storeu_pd(p, v); }
  static Reg splat(double v) { return _mm256_set1_pd(v); }
  static Reg fmadd(Reg a, Reg b, Reg c) { return _mm256_fmadd_pd(a, b, c); }
  static Reg add(Reg a, Reg b) { return _mm256_add_pd(a, b); }
  static double hsum(Reg v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d hi64 = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, hi64));
  }
};

// C += op(A) * B where op(A)(i, p) is supplied by `at`. Two rows of C and
// two vector widths of columns are kept in registers across the k loop.
template <typename T, typename At>
inline void gemm_rows(std::size_t m, std::size_t n, std::size_t k, At at, const T* b, T* c) {
  using V = Vec<T>;
  constexpr std::size_t L = V::kLanes;
  std::size_t j = 0;
  for (; j + 2 * L <= n; j += 2 * L) {
    std::size_t i = 0;
    for (; i + 2 <= m; i += 2) {
      T* c0 = c + i * n + j;
      T* c1 = c0 + n;
      auto c00 = V::load(c0), c01 = V::load(c0 + L);
      auto c10 = V::load(c1), c11 = V::load(c1 + L);
      for (std::size_t p = 0; p < k; ++p) {
        const T* bp = b + p * n + j;
        const auto b0 = V::load(bp), b1 = V::load(bp + L);
        const auto a0 = V::splat(at(i, p)), a1 = V::splat(at(i + 1, p));
        c00 = V::fmadd(a0, b0, c00);
        c01 = V::fmadd(a0, b1, c01);
        c10 = V::fmadd(a1, b0, c10);
        c11 = V::fmadd(a1, b1, c11);
      }
      V::store(c0, c00);
      V::store(c0 + L, c01);
      V::store(c1, c10);
      V::store(c1 + L, c11);
    }
    for (; i < m; ++i) {
      T* c0 = c + i * n + j;
      auto c00 = V::load(c0), c01 = V::load(c0 + L);
      for (std::size_t p = 0; p < k; ++p) {
        const T* bp = b + p * n + j;
        const auto a0 = V::splat(at(i, p));
        c00 = V::fmadd(a0, V::load(bp), c00);
        c01 = V::fmadd(a0, V::load(bp + L), c01);
      }
      V::store(c0, c00);
      V::store(c0 + L, c01);
    }
  }
  for (; j + L <= n; j += L) {
    for (std::size_t i = 0; i < m; ++i) {
      T* c0 = c + i * n + j;
      auto acc = V::load(c0);
      for (std::size_t p = 0; p < k; ++p) acc = V::fmadd(V::splat(at(i, p)), V::load(b + p * n + j), acc);
      V::store(c0, acc);
    }
  }
  for (; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      T acc = c[i * n + j];
      for (std::size_t p = 0; p < k; ++p) acc += at(i, p) * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

template <typename T>
T dot(std::size_t n, const T* a, const T* b) {
  using V = Vec<T>;
  constexpr std::size_t L = V::kLanes;
  auto acc0 = V::zero(), acc1 = V::zero();
  std::size_t i = 0;
  for (; i + 2 * L <= n; i += 2 * L) {
    acc0 = V::fmadd(V::load(a + i), V::load(b + i), acc0);
    acc1 = V::fmadd(V::load(a + i + L), V::load(b + i + L), acc1);
  }
  for (; i + L <= n; i += L) acc0 = V::fmadd(V::load(a + i), V::load(b + i), acc0);
  T acc = V::hsum(V::add(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  gemm_rows<T>(m, n, k, [a, k](std::size_t i, std::size_t p) { return a[i * k + p]; }, b, c);
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  gemm_rows<T>(m, n, k, [a, m](std::size_t i, std::size_t p) { return a[p * m + i]; }, b, c);
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot<T>(k, arow, b + j * k);
  }
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  using V = Vec<T>;
  constexpr std::size_t L = V::kLanes;
  const auto av = V::splat(alpha);
  std::size_t i = 0;
  for (; i + L <= n; i += L) V::store(y + i, V::fmadd(av, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

template <typename T>
const KernelTable<T>& avx2_table() {
  static const KernelTable<T> t{&gemm_nn<T>, &gemm_nt<T>, &gemm_tn<T>, &dot<T>, &axpy<T>};
  return t;
}

template const KernelTable<float>& avx2_table<float>();
template const KernelTable<double>& avx2_table<double>();

}  // namespace fscap::kernels::detail
