#include <atomic>
#include <cstdlib>
#include <string>

#include "relpool/errors.hpp"
#include "relpool/numeric/kernels.hpp"

namespace relpool::kernels {
namespace {

const KernelTable& table_for(Isa isa) {
  if (isa == Isa::kAvx2) {
    if (const KernelTable* t = avx2_table()) return *t;
  }
  return scalar_table();
}

Isa initial_isa() {
  if (const char* env = std::getenv("RELPOOL_KERNELS")) {
    const std::string v(env);
    if (v == "scalar") return Isa::kScalar;
    if (v == "avx2" && cpu_supports(Isa::kAvx2)) return Isa::kAvx2;
  }
  return detect_isa();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{&table_for(initial_isa())};
  return current;
}

}  // namespace

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(__x86_64__) || defined(__i386__)
      return avx2_table() != nullptr && __builtin_cpu_supports("avx2") &&
             __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Isa detect_isa() { return cpu_supports(Isa::kAvx2) ? Isa::kAvx2 : Isa::kScalar; }

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

void select_isa(Isa isa) {
  if (!cpu_supports(isa)) {
    throw InvalidArgument("kernel variant not supported on this build/CPU: " +
                          std::string(isa_name(isa)));
  }
  slot().store(&table_for(isa), std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

}  // namespace relpool::kernels
