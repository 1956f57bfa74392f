// Runtime backend selection.

#include "stylealign/kernels.hpp"

#include <atomic>
#include <cstdlib>

#include "stylealign/errors.hpp"

namespace stylealign::kern {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

const Kernels* pick(std::string_view name) {
    if (name == "scalar") {
        return &kScalarKernels;
    }
    if (name == "avx2") {
#if defined(__x86_64__) || defined(_M_X64)
        if (cpu_has_avx2()) {
            return &kAvx2Kernels;
        }
#endif
        throw ConfigError("kernels: avx2 backend not supported on this CPU");
    }
    if (name == "neon") {
#if defined(__aarch64__)
        return &kNeonKernels;
#else
        throw ConfigError("kernels: neon backend not supported on this CPU");
#endif
    }
    if (name == "auto") {
#if defined(__x86_64__) || defined(_M_X64)
        if (cpu_has_avx2()) {
            return &kAvx2Kernels;
        }
#elif defined(__aarch64__)
        return &kNeonKernels;
#endif
        return &kScalarKernels;
    }
    throw ConfigError("kernels: unknown backend '" + std::string(name) +
                      "' (expected scalar, avx2, neon, or auto)");
}

const Kernels* initial_backend() {
    if (const char* env = std::getenv("STYLEALIGN_KERNELS")) {
        return pick(env);
    }
    return pick("auto");
}

std::atomic<const Kernels*>& slot() {
    static std::atomic<const Kernels*> current{initial_backend()};
    return current;
}

}  // namespace

const Kernels& active() { return *slot().load(std::memory_order_relaxed); }

void select(std::string_view name) {
    slot().store(pick(name), std::memory_order_relaxed);
}

std::vector<std::string> available_backends() {
    std::vector<std::string> names = {"scalar"};
#if defined(__x86_64__) || defined(_M_X64)
    if (cpu_has_avx2()) {
        names.push_back("avx2");
    }
#endif
#if defined(__aarch64__)
    names.push_back("neon");
#endif
    return names;
}

}  // namespace stylealign::kern
