// AVX2 kernels, 4 doubles per vector. Compiled with -mavx2 for this file
// only; the dispatcher guards selection with a runtime CPU check.
//
// No fmadd intrinsics anywhere: the scalar reference is compiled with
// contraction disabled, and bit-exact equivalence is part of the contract.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstddef>

#include "stylealign/kernels.hpp"

namespace stylealign::kern {

namespace {

// Combines lanes as (p0+p2)+(p1+p3), matching the scalar reference.
inline double hsum(__m256d acc) {
    __m128d lo = _mm256_castpd256_pd128(acc);   // (p0, p1)
    __m128d hi = _mm256_extractf128_pd(acc, 1); // (p2, p3)
    __m128d pair = _mm_add_pd(lo, hi);          // (p0+p2, p1+p3)
    return _mm_cvtsd_f64(pair) + _mm_cvtsd_f64(_mm_unpackhi_pd(pair, pair));
}

double dot_avx2(const double* x, const double* y, size_t n) {
    __m256d acc = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d xv = _mm256_loadu_pd(x + i);
        __m256d yv = _mm256_loadu_pd(y + i);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(xv, yv));
    }
    double total = hsum(acc);
    for (; i < n; ++i) {
        total += x[i] * y[i];
    }
    return total;
}

double sum_avx2(const double* x, size_t n) {
    __m256d acc = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    }
    double total = hsum(acc);
    for (; i < n; ++i) {
        total += x[i];
    }
    return total;
}

void axpy_avx2(double a, const double* x, double* y, size_t n) {
    __m256d av = _mm256_set1_pd(a);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d xv = _mm256_loadu_pd(x + i);
        __m256d yv = _mm256_loadu_pd(y + i);
        _mm256_storeu_pd(y + i, _mm256_add_pd(yv, _mm256_mul_pd(av, xv)));
    }
    for (; i < n; ++i) {
        y[i] += a * x[i];
    }
}

void scale_avx2(double a, double* x, size_t n) {
    __m256d av = _mm256_set1_pd(a);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(x + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) {
        x[i] *= a;
    }
}

void add_avx2(const double* x, const double* y, double* out, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i),
                                                _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) {
        out[i] = x[i] + y[i];
    }
}

void sub_avx2(const double* x, const double* y, double* out, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(x + i),
                                                _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) {
        out[i] = x[i] - y[i];
    }
}

void mul_avx2(const double* x, const double* y, double* out, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i),
                                                _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) {
        out[i] = x[i] * y[i];
    }
}

void adam_update_avx2(double* p, const double* g, double* m, double* v,
                      size_t n, const AdamUpdateArgs& args) {
    const __m256d b1 = _mm256_set1_pd(args.beta1);
    const __m256d b2 = _mm256_set1_pd(args.beta2);
    const __m256d omb1 = _mm256_set1_pd(1.0 - args.beta1);
    const __m256d omb2 = _mm256_set1_pd(1.0 - args.beta2);
    const __m256d bc1 = _mm256_set1_pd(args.bc1);
    const __m256d bc2 = _mm256_set1_pd(args.bc2);
    const __m256d lr = _mm256_set1_pd(args.lr);
    const __m256d eps = _mm256_set1_pd(args.eps);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d gv = _mm256_loadu_pd(g + i);
        __m256d mv = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)),
                                   _mm256_mul_pd(omb1, gv));
        __m256d g2 = _mm256_mul_pd(gv, gv);
        __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                   _mm256_mul_pd(omb2, g2));
        _mm256_storeu_pd(m + i, mv);
        _mm256_storeu_pd(v + i, vv);
        __m256d m_hat = _mm256_mul_pd(mv, bc1);
        __m256d v_hat = _mm256_mul_pd(vv, bc2);
        __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(v_hat), eps);
        __m256d step = _mm256_mul_pd(lr, _mm256_div_pd(m_hat, denom));
        _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), step));
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

const Kernels kAvx2Kernels = {
    "avx2",   dot_avx2, sum_avx2, axpy_avx2,        scale_avx2,
    add_avx2, sub_avx2, mul_avx2, adam_update_avx2,
};

}  // namespace stylealign::kern

#endif  // x86-64
