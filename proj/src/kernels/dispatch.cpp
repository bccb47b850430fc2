#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "armt/kernels/kernels.hpp"

namespace armt::kernels {

namespace {

Isa detect() {
#if defined(__x86_64__) || defined(__i386__)
  if (const char* forced = std::getenv("ARMT_KERNELS")) {
    if (std::string(forced) == "scalar") return Isa::scalar;
  }
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::avx2;
#endif
  return Isa::scalar;
}

std::atomic<Isa>& active_slot() {
  static std::atomic<Isa> slot{detect()};
  return slot;
}

template <typename T>
const KernelTable<T> kScalarTable{&scalar::gemm<T>, &scalar::dot<T>, &scalar::axpy<T>};

#if defined(__x86_64__) || defined(__i386__)
template <typename T>
const KernelTable<T> kAvx2Table{&avx2::gemm<T>, &avx2::dot<T>, &avx2::axpy<T>};
#endif

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  if (isa == Isa::scalar) return true;
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa active_isa() { return active_slot().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::runtime_error("kernel ISA not supported on this CPU: " + std::string(isa_name(isa)));
  }
  active_slot().store(isa, std::memory_order_relaxed);
}

template <typename T>
const KernelTable<T>& table(Isa isa) {
#if defined(__x86_64__) || defined(__i386__)
  if (isa == Isa::avx2) return kAvx2Table<T>;
#endif
  return kScalarTable<T>;
}

template const KernelTable<float>& table<float>(Isa);
template const KernelTable<double>& table<double>(Isa);

}  // namespace armt::kernels
