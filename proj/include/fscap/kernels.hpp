// SPDX-License-Identifier: Apache-2.0
//
// Dense inner-loop kernels. Every kernel has a portable scalar reference
// implementation and, on x86-64, an AVX2+FMA variant picked at runtime.
// All matrices are row-major and contiguous.
#pragma once

#include <cstddef>
#include <string_view>

namespace fscap::kernels {

enum class Isa { kScalar, kAvx2 };

template <typename T>
struct KernelTable {
  // C(m x n) += A(m x k) * B(k x n)
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);
  // C(m x n) += A(m x k) * B(n x k)^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);
  // C(m x n) += A(k x m)^T * B(k x n)
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);
  T (*dot)(std::size_t n, const T* a, const T* b);
  // y += alpha * x
  void (*axpy)(std::size_t n, T alpha, const T* x, T* y);
};

/// Best instruction set supported by the running CPU and this build.
Isa detect_isa();

/// Kernel set currently used by the free functions below.
Isa active_isa();

/// Force a kernel set. Returns false (and changes nothing) when the CPU or
/// the build cannot run it.
bool set_isa(Isa isa);

std::string_view isa_name(Isa isa);

template <typename T>
const KernelTable<T>& table(Isa isa);

template <typename T>
const KernelTable<T>& active_table();

template <typename T>
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  active_table<T>().gemm_nn(m, n, k, a, b, c);
}

template <typename T>
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  active_table<T>().gemm_nt(m, n, k, a, b, c);
}

template <typename T>
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  active_table<T>().gemm_tn(m, n, k, a, b, c);
}

template <typename T>
inline T dot(std::size_t n, const T* a, const T* b) {
  return active_table<T>().dot(n, a, b);
}

template <typename T>
inline void axpy(std::size_t n, T alpha, const T* x, T* y) {
  active_table<T>().axpy(n, alpha, x, y);
}

namespace detail {
template <typename T>
const KernelTable<T>& scalar_table();
#if defined(FSCAP_HAVE_AVX2)
template <typename T>
const KernelTable<T>& avx2_table();
#endif
}  // namespace detail

}  // namespace fscap::kernels
