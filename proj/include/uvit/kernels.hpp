#pragma once

// Inner-loop kernels behind the tensor ops. Each instruction set provides the
// same table; the SIMD variants vectorize across independent outputs only and
// never fuse multiply-add, so every variant reproduces the scalar reference
// bit for bit.

#include <cstddef>
#include <string_view>
#include <vector>

namespace uvit::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  /// c[m x n] = a[m x k] * b[k x n]; c is overwritten. For each output the
  /// sum runs over t = 0..k-1 in order.
  void (*gemm)(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n);
  /// y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  /// out = x + y
  void (*add)(const double* x, const double* y, double* out, std::size_t n);
  /// out = x * y (elementwise)
  void (*mul)(const double* x, const double* y, double* out, std::size_t n);
  /// out = alpha * x
  void (*scale)(double alpha, const double* x, double* out, std::size_t n);
};

const KernelTable& scalar_table();
/// nullptr when the variant was not compiled for this target.
const KernelTable* avx2_table();
const KernelTable* neon_table();

/// Instruction sets that are both compiled in and supported by this CPU.
std::vector<Isa> available_isas();

/// Best available table, chosen once on first use.
const KernelTable& active();

/// Forces a specific variant. Returns false (and changes nothing) when the
/// variant is unavailable.
bool set_active(Isa isa);

}  // namespace uvit::kernels
