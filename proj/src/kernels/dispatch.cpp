#include <atomic>
#include <cstdlib>
#include <string>

#include "bima/error.hpp"
#include "bima/kernels.hpp"

namespace bima::kernels {
namespace {

const KernelTable* best_supported() {
#if defined(__x86_64__) || defined(_M_X64)
  if (backend_supported(Backend::avx2)) return &detail::avx2_table;
#endif
#if defined(__aarch64__)
  return &detail::neon_table;
#endif
  return &detail::scalar_table;
}

const KernelTable* initial_table() {
  if (const char* env = std::getenv("BIMA_KERNELS"); env != nullptr && *env != '\0') {
    return &table(parse_backend(env));
  }
  return best_supported();
}

std::atomic<const KernelTable*>& selected() {
  static std::atomic<const KernelTable*> current{initial_table()};
  return current;
}

}  // namespace

bool backend_supported(Backend backend) {
  switch (backend) {
    case Backend::scalar:
      return true;
    case Backend::avx2:
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Backend backend) {
  if (!backend_supported(backend)) {
    throw ParameterError("kernel backend not supported on this CPU");
  }
  switch (backend) {
#if defined(__x86_64__) || defined(_M_X64)
    case Backend::avx2:
      return detail::avx2_table;
#endif
#if defined(__aarch64__)
    case Backend::neon:
      return detail::neon_table;
#endif
    default:
      return detail::scalar_table;
  }
}

const KernelTable& active() { return *selected().load(std::memory_order_acquire); }

void set_backend(Backend backend) { selected().store(&table(backend), std::memory_order_release); }

Backend parse_backend(std::string_view name) {
  if (name == "scalar") return Backend::scalar;
  if (name == "avx2") return Backend::avx2;
  if (name == "neon") return Backend::neon;
  throw ParameterError("unknown kernel backend '" + std::string(name) +
                       "' (expected scalar, avx2 or neon)");
}

}  // namespace bima::kernels
