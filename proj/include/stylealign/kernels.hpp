#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace stylealign::kern {

// Hyperparameters for one fused Adam update pass. bc1/bc2 are the
// precomputed bias corrections 1/(1-beta1^t) and 1/(1-beta2^t).
struct AdamUpdateArgs {
    double lr;
    double beta1;
    double beta2;
    double eps;
    double bc1;
    double bc2;
};

// One backend's kernel table.
//
// Reduction contract (dot, sum): four interleaved partial sums over the
// multiple-of-4 prefix, combined as (p0+p2)+(p1+p3), then the remaining
// 0-3 tail elements added sequentially. Every backend follows this order
// and no backend uses fused multiply-add, so all backends produce
// bit-identical results; the equivalence tests assert exact equality.
struct Kernels {
    const char* name;

    double (*dot)(const double* x, const double* y, size_t n);
    double (*sum)(const double* x, size_t n);
    // y[i] += a * x[i]
    void (*axpy)(double a, const double* x, double* y, size_t n);
    // x[i] *= a
    void (*scale)(double a, double* x, size_t n);
    // out[i] = x[i] + y[i]
    void (*add)(const double* x, const double* y, double* out, size_t n);
    // out[i] = x[i] - y[i]
    void (*sub)(const double* x, const double* y, double* out, size_t n);
    // out[i] = x[i] * y[i]
    void (*mul)(const double* x, const double* y, double* out, size_t n);
    // In-place Adam with bias correction over one parameter tensor.
    void (*adam_update)(double* p, const double* g, double* m, double* v,
                        size_t n, const AdamUpdateArgs& args);
};

extern const Kernels kScalarKernels;

#if defined(__x86_64__) || defined(_M_X64)
extern const Kernels kAvx2Kernels;
#endif
#if defined(__aarch64__)
extern const Kernels kNeonKernels;
#endif

// Currently selected backend. Defaults to the best supported one
// (AVX2 on x86-64 when the CPU has it, NEON on aarch64, scalar otherwise);
// the STYLEALIGN_KERNELS environment variable overrides the default.
const Kernels& active();

// Forces a backend by name: "scalar", "avx2", "neon", or "auto".
// Throws ConfigError for unknown names or backends unsupported on this CPU.
void select(std::string_view name);

// Names selectable on this machine.
std::vector<std::string> available_backends();

}  // namespace stylealign::kern
