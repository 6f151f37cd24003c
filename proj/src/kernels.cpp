#include "idr/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace idr::kern {

bool avx2_available() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const Impl& active() {
    static const Impl& impl = []() -> const Impl& {
        const char* env = std::getenv("IDR_KERNELS");
        if (env && std::strcmp(env, "scalar") == 0) return scalar_impl();
        if (env && std::strcmp(env, "avx2") == 0) return avx2_impl();
        return avx2_available() ? avx2_impl() : scalar_impl();
    }();
    return impl;
}

}  // namespace idr::kern
