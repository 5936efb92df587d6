#include <atomic>
#include <cstdlib>
#include <string>

#include "rfbtd/simd/kernels.hpp"

namespace rfbtd::simd {

#if defined(RFBTD_HAVE_AVX2)
const KernelTable* avx2_kernels_impl();
#endif

const KernelTable* avx2_kernels() {
#if defined(RFBTD_HAVE_AVX2)
  return avx2_kernels_impl();
#else
  return nullptr;
#endif
}

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(RFBTD_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

namespace {

const KernelTable* select_default() {
  const char* env = std::getenv("RFBTD_SIMD");
  if (env != nullptr && std::string(env) == "scalar") return &scalar_kernels();
  if (cpu_supports(Isa::avx2)) return avx2_kernels();
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& active() {
  static std::atomic<const KernelTable*> table{select_default()};
  return table;
}

}  // namespace

const KernelTable& kernels() { return *active().load(std::memory_order_acquire); }

Isa active_isa() { return kernels().isa; }

bool force_isa(Isa isa) {
  if (!cpu_supports(isa)) return false;
  active().store(isa == Isa::avx2 ? avx2_kernels() : &scalar_kernels(), std::memory_order_release);
  return true;
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

}  // namespace rfbtd::simd
