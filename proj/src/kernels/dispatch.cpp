// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string>

#include "fscap/kernels.hpp"

namespace fscap::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(FSCAP_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  // FSCAP_ISA=scalar pins the reference kernels, e.g. for cross-checking runs.
  if (const char* env = std::getenv("FSCAP_ISA"); env != nullptr && std::string(env) == "scalar") {
    return Isa::kScalar;
  }
  return detect_isa();
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

Isa detect_isa() { return cpu_has_avx2() ? Isa::kAvx2 : Isa::kScalar; }

Isa active_isa() { return current().load(std::memory_order_relaxed); }

bool set_isa(Isa isa) {
  if (isa == Isa::kAvx2 && !cpu_has_avx2()) return false;
  current().store(isa, std::memory_order_relaxed);
  return true;
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

template <typename T>
const KernelTable<T>& table(Isa isa) {
#if defined(FSCAP_HAVE_AVX2)
  if (isa == Isa::kAvx2) return detail::avx2_table<T>();
#else
  (void)isa;
#endif
  return detail::scalar_table<T>();
}

template <typename T>
const KernelTable<T>& active_table() {
  return table<T>(active_isa());
}

template const KernelTable<float>& table<float>(Isa);
template const KernelTable<double>& table<double>(Isa);
template const KernelTable<float>& active_table<float>();
template const KernelTable<double>& active_table<double>();

}  // namespace fscap::kernels
