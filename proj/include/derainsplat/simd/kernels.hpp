#pragma once

// Runtime-dispatched inner-loop kernels.
//
// Every kernel has a scalar reference implementation. Vector variants are
// compiled in separate translation units with their own target flags and are
// only selected when the running CPU reports support for them. Set the
// DERAINSPLAT_ISA environment variable to "scalar", "avx2" or "neon" to force
// a specific table (falls back to scalar when unavailable).
//
// Contracts shared by all variants:
//   axpy   y[i] += a * x[i]            bit-identical to scalar (no FMA contraction)
//   scale  y[i]  = a * x[i]            bit-identical to scalar
//   mul    z[i]  = x[i] * y[i]         bit-identical to scalar
//   dot    sum_i x[i] * y[i]           reassociated; equal to scalar within rounding
//   sum    sum_i x[i]                  reassociated; equal to scalar within rounding

#include <cstddef>
#include <string_view>

namespace drs::simd {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa) noexcept;

struct KernelTable {
    Isa isa;
    double (*dot)(const double* x, const double* y, std::size_t n);
    double (*sum)(const double* x, std::size_t n);
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
    void (*scale)(double a, const double* x, double* y, std::size_t n);
    void (*mul)(const double* x, const double* y, double* z, std::size_t n);
};

/// True when the variant is compiled in and the CPU can execute it.
bool isa_available(Isa isa) noexcept;

/// Table for a specific ISA. Throws std::invalid_argument when unavailable.
const KernelTable& kernels_for(Isa isa);

/// The table selected for this process (resolved once, thread-safe).
const KernelTable& kernels() noexcept;

namespace detail {
const KernelTable& scalar_table() noexcept;
const KernelTable* avx2_table() noexcept;  // nullptr when not compiled in
const KernelTable* neon_table() noexcept;  // nullptr when not compiled in
}  // namespace detail

}  // namespace drs::simd
