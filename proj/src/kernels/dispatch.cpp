#include <atomic>

#include "uvit/kernels.hpp"

namespace uvit::kernels {

#ifndef UVIT_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif
#ifndef UVIT_HAVE_NEON
const KernelTable* neon_table() { return nullptr; }
#endif

namespace {

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(UVIT_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::neon:
#ifdef UVIT_HAVE_NEON
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable* table_for(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return &scalar_table();
    case Isa::avx2:
      return avx2_table();
    case Isa::neon:
      return neon_table();
  }
  return nullptr;
}

const KernelTable* best_table() {
  for (Isa isa : {Isa::avx2, Isa::neon}) {
    if (const KernelTable* t = table_for(isa); t != nullptr && cpu_supports(isa)) return t;
  }
  return &scalar_table();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{best_table()};
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::neon:
      return "neon";
  }
  return "unknown";
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
    if (table_for(isa) != nullptr && cpu_supports(isa)) out.push_back(isa);
  }
  return out;
}

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

bool set_active(Isa isa) {
  const KernelTable* t = table_for(isa);
  if (t == nullptr || !cpu_supports(isa)) return false;
  active_slot().store(t, std::memory_order_release);
  return true;
}

}  // namespace uvit::kernels
