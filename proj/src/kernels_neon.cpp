// NEON kernels, 2 doubles per vector, stepping 4 per iteration with two
// accumulators so the reduction order matches the scalar/AVX2 contract:
// accA holds partials (p0, p1), accB holds (p2, p3), and
// accA + accB = (p0+p2, p1+p3) combines exactly like the other backends.

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>
#include <cstddef>

#include "stylealign/kernels.hpp"

namespace stylealign::kern {

namespace {

inline double hsum(float64x2_t acc_a, float64x2_t acc_b) {
    float64x2_t pair = vaddq_f64(acc_a, acc_b);  // (p0+p2, p1+p3)
    return vgetq_lane_f64(pair, 0) + vgetq_lane_f64(pair, 1);
}

double dot_neon(const double* x, const double* y, size_t n) {
    float64x2_t acc_a = vdupq_n_f64(0.0);
    float64x2_t acc_b = vdupq_n_f64(0.0);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc_a = vaddq_f64(acc_a, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
        acc_b = vaddq_f64(acc_b,
                          vmulq_f64(vld1q_f64(x + i + 2), vld1q_f64(y + i + 2)));
    }
    double total = hsum(acc_a, acc_b);
    for (; i < n; ++i) {
        total += x[i] * y[i];
    }
    return total;
}

double sum_neon(const double* x, size_t n) {
    float64x2_t acc_a = vdupq_n_f64(0.0);
    float64x2_t acc_b = vdupq_n_f64(0.0);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc_a = vaddq_f64(acc_a, vld1q_f64(x + i));
        acc_b = vaddq_f64(acc_b, vld1q_f64(x + i + 2));
    }
    double total = hsum(acc_a, acc_b);
    for (; i < n; ++i) {
        total += x[i];
    }
    return total;
}

void axpy_neon(double a, const double* x, double* y, size_t n) {
    float64x2_t av = vdupq_n_f64(a);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t yv = vld1q_f64(y + i);
        vst1q_f64(y + i, vaddq_f64(yv, vmulq_f64(av, vld1q_f64(x + i))));
    }
    for (; i < n; ++i) {
        y[i] += a * x[i];
    }
}

void scale_neon(double a, double* x, size_t n) {
    float64x2_t av = vdupq_n_f64(a);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(x + i, vmulq_f64(av, vld1q_f64(x + i)));
    }
    for (; i < n; ++i) {
        x[i] *= a;
    }
}

void add_neon(const double* x, const double* y, double* out, size_t n) {
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(out + i, vaddq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
    }
    for (; i < n; ++i) {
        out[i] = x[i] + y[i];
    }
}

void sub_neon(const double* x, const double* y, double* out, size_t n) {
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(out + i, vsubq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
    }
    for (; i < n; ++i) {
        out[i] = x[i] - y[i];
    }
}

void mul_neon(const double* x, const double* y, double* out, size_t n) {
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(out + i, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
    }
    for (; i < n; ++i) {
        out[i] = x[i] * y[i];
    }
}

void adam_update_neon(double* p, const double* g, double* m, double* v,
                      size_t n, const AdamUpdateArgs& args) {
    const float64x2_t b1 = vdupq_n_f64(args.beta1);
    const float64x2_t b2 = vdupq_n_f64(args.beta2);
    const float64x2_t omb1 = vdupq_n_f64(1.0 - args.beta1);
    const float64x2_t omb2 = vdupq_n_f64(1.0 - args.beta2);
    const float64x2_t bc1 = vdupq_n_f64(args.bc1);
    const float64x2_t bc2 = vdupq_n_f64(args.bc2);
    const float64x2_t lr = vdupq_n_f64(args.lr);
    const float64x2_t eps = vdupq_n_f64(args.eps);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t gv = vld1q_f64(g + i);
        float64x2_t mv =
            vaddq_f64(vmulq_f64(b1, vld1q_f64(m + i)), vmulq_f64(omb1, gv));
        float64x2_t vv = vaddq_f64(vmulq_f64(b2, vld1q_f64(v + i)),
                                   vmulq_f64(omb2, vmulq_f64(gv, gv)));
        vst1q_f64(m + i, mv);
        vst1q_f64(v + i, vv);
        float64x2_t m_hat = vmulq_f64(mv, bc1);
        float64x2_t v_hat = vmulq_f64(vv, bc2);
        float64x2_t denom = vaddq_f64(vsqrtq_f64(v_hat), eps);
        float64x2_t step = vmulq_f64(lr, vdivq_f64(m_hat, denom));
        vst1q_f64(p + i, vsubq_f64(vld1q_f64(p + i), step));
    }
    const double one_minus_b1 = 1.0 - args.beta1;
    const double one_minus_b2 = 1.0 - args.beta2;
    for (; i < n; ++i) {
        m[i] = args.beta1 * m[i] + one_minus_b1 * g[i];
        v[i] = args.beta2 * v[i] + one_minus_b2 * (g[i] * g[i]);
        const double m_hat = m[i] * args.bc1;
        const double v_hat = v[i] * args.bc2;
        p[i] = p[i] - args.lr * (m_hat / (std::sqrt(v_hat) + args.eps));
    }
}

}  // namespace

const Kernels kNeonKernels = {
    "neon",   dot_neon, sum_neon, axpy_neon,        scale_neon,
    add_neon, sub_neon, mul_neon, adam_update_neon,
};

}  // namespace stylealign::kern

#endif  // __aarch64__
