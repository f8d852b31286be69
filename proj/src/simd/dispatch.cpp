#include <atomic>
#include <cstdlib>
#include <string_view>

#include "rtnet/simd/kernels.hpp"

namespace rtnet::simd {

const KernelTable* avx2_table_if_built();

namespace {

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* best() {
  if (const auto* t = avx2_kernels()) return t;
  return &scalar_kernels();
}

const KernelTable* initial() {
  if (const char* env = std::getenv("RTNET_SIMD")) {
    std::string_view v(env);
    if (v == "scalar") return &scalar_kernels();
    if (v == "avx2" && avx2_kernels() != nullptr) return avx2_kernels();
  }
  return best();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> s{initial()};
  return s;
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable* t = cpu_has_avx2_fma() ? avx2_table_if_built() : nullptr;
  return t;
}

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

bool select(std::string_view name) {
  const KernelTable* t = nullptr;
  if (name == "scalar")
    t = &scalar_kernels();
  else if (name == "avx2")
    t = avx2_kernels();
  else if (name == "auto")
    t = best();
  if (t == nullptr) return false;
  slot().store(t, std::memory_order_relaxed);
  return true;
}

}  // namespace rtnet::simd
