// Scalar reference kernels. These define the numeric contract: every SIMD
// backend must reproduce them bit-for-bit (see the reduction contract in
// kernels.hpp). Keep the accumulation structure in sync with the vector
// implementations.

#include <cmath>
#include <cstddef>

#include "stylealign/kernels.hpp"

namespace stylealign::kern {

namespace {

double dot_scalar(const double* x, const double* y, size_t n) {
    double p0 = 0.0, p1 = 0.0, p2 = 0.0, p3 = 0.0;
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        p0 += x[i] * y[i];
        p1 += x[i + 1] * y[i + 1];
        p2 += x[i + 2] * y[i + 2];
        p3 += x[i + 3] * y[i + 3];
    }
    double total = (p0 + p2) + (p1 + p3);
    for (; i < n; ++i) {
        total += x[i] * y[i];
    }
    return total;
}

double sum_scalar(const double* x, size_t n) {
    double p0 = 0.0, p1 = 0.0, p2 = 0.0, p3 = 0.0;
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        p0 += x[i];
        p1 += x[i + 1];
        p2 += x[i + 2];
        p3 += x[i + 3];
    }
    double total = (p0 + p2) + (p1 + p3);
    for (; i < n; ++i) {
        total += x[i];
    }
    return total;
}

void axpy_scalar(double a, const double* x, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        y[i] += a * x[i];
    }
}

void scale_scalar(double a, double* x, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        x[i] *= a;
    }
}

void add_scalar(const double* x, const double* y, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        out[i] = x[i] + y[i];
    }
}

void sub_scalar(const double* x, const double* y, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        out[i] = x[i] - y[i];
    }
}

void mul_scalar(const double* x, const double* y, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        out[i] = x[i] * y[i];
    }
}

void adam_update_scalar(double* p, const double* g, double* m, double* v,
                        size_t n, const AdamUpdateArgs& args) {
    const double one_minus_b1 = 1.0 - args.beta1;
    const double one_minus_b2 = 1.0 - args.beta2;
    for (size_t i = 0; i < n; ++i) {
        m[i] = args.beta1 * m[i] + one_minus_b1 * g[i];
        v[i] = args.beta2 * v[i] + one_minus_b2 * (g[i] * g[i]);
        const double m_hat = m[i] * args.bc1;
        const double v_hat = v[i] * args.bc2;
        p[i] = p[i] - args.lr * (m_hat / (std::sqrt(v_hat) + args.eps));
    }
}

}  // namespace

const Kernels kScalarKernels = {
    "scalar",     dot_scalar, sum_scalar, axpy_scalar,        scale_scalar,
    add_scalar,   sub_scalar, mul_scalar, adam_update_scalar,
};

}  // namespace stylealign::kern
