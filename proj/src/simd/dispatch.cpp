#include "derainsplat/simd/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace drs::simd {

namespace detail {
#if !defined(DRS_HAVE_AVX2_KERNELS)
const KernelTable* avx2_table() noexcept { return nullptr; }
#endif
#if !defined(DRS_HAVE_NEON_KERNELS)
const KernelTable* neon_table() noexcept { return nullptr; }
#endif
}  // namespace detail

std::string_view isa_name(Isa isa) noexcept {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
        case Isa::neon: return "neon";
    }
    return "unknown";
}

bool isa_available(Isa isa) noexcept {
    switch (isa) {
        case Isa::scalar: return true;
        case Isa::avx2:
#if defined(DRS_HAVE_AVX2_KERNELS) && (defined(__x86_64__) || defined(__i386__))
            return detail::avx2_table() != nullptr && __builtin_cpu_supports("avx2");
#else
            return false;
#endif
        case Isa::neon: return detail::neon_table() != nullptr;
    }
    return false;
}

const KernelTable& kernels_for(Isa isa) {
    if (!isa_available(isa)) {
        throw std::invalid_argument("kernel table '" + std::string(isa_name(isa)) + "' is not available on this CPU");
    }
    switch (isa) {
        case Isa::avx2: return *detail::avx2_table();
        case Isa::neon: return *detail::neon_table();
        case Isa::scalar: break;
    }
    return detail::scalar_table();
}

namespace {

const KernelTable& resolve() noexcept {
    if (const char* forced = std::getenv("DERAINSPLAT_ISA")) {
        const std::string name(forced);
        for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
            if (name == isa_name(isa) && isa_available(isa)) return kernels_for(isa);
        }
        return detail::scalar_table();
    }
    if (isa_available(Isa::avx2)) return *detail::avx2_table();
    if (isa_available(Isa::neon)) return *detail::neon_table();
    return detail::scalar_table();
}

}  // namespace

const KernelTable& kernels() noexcept {
    static const KernelTable& table = resolve();
    return table;
}

}  // namespace drs::simd
