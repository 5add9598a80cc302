#include "playtitle/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include "playtitle/error.hpp"

namespace playtitle::kernels {

namespace {

const KernelTable* detect() {
    if (const char* env = std::getenv("PLAYTITLE_SIMD")) {
        const std::string want(env);
        if (want == "scalar") return &scalar_table();
        if (want == "avx2") return &avx2_table();
        if (!want.empty() && want != "auto") throw InvalidArgument("PLAYTITLE_SIMD must be scalar, avx2 or auto");
    }
    return avx2_available() ? &avx2_table() : &scalar_table();
}

std::atomic<const KernelTable*>& slot() {
    static std::atomic<const KernelTable*> table{detect()};
    return table;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

void select_isa(Isa isa) { slot().store(isa == Isa::avx2 ? &avx2_table() : &scalar_table()); }

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

}  // namespace playtitle::kernels
