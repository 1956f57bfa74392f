#include <doctest.h>

#include <cmath>
#include <vector>

#include "stylealign/kernels.hpp"
#include "stylealign/rng.hpp"

using namespace stylealign;

namespace {

std::vector<double> random_array(Rng& rng, size_t n, double lo = -2.0,
                                 double hi = 2.0) {
    std::vector<double> v(n);
    for (double& x : v) {
        x = rng.next_double(lo, hi);
    }
    return v;
}

// Long-double reference, deliberately ignorant of the 4-partial contract.
long double dot_reference(const std::vector<double>& x,
                          const std::vector<double>& y) {
    long double acc = 0.0L;
    for (size_t i = 0; i < x.size(); ++i) {
        acc += static_cast<long double>(x[i]) * static_cast<long double>(y[i]);
    }
    return acc;
}

}  // namespace

TEST_CASE("scalar dot matches long-double reference") {
    Rng rng(11);
    for (size_t n : {1u, 3u, 4u, 7u, 33u, 256u, 1001u}) {
        auto x = random_array(rng, n);
        auto y = random_array(rng, n);
        double got = kern::kScalarKernels.dot(x.data(), y.data(), n);
        long double want = dot_reference(x, y);
        double scale = std::max(1.0, std::abs(static_cast<double>(want)));
        CHECK(std::abs(static_cast<double>(want) - got) / scale < 1e-13);
    }
}

TEST_CASE("every backend reproduces the scalar kernels bit-for-bit") {
    Rng rng(12);
    for (const auto& name : kern::available_backends()) {
        if (name == "scalar") {
            continue;
        }
        kern::select(name);
        const auto& kr = kern::active();
        const auto& ref = kern::kScalarKernels;
        INFO("backend ", name);
        // Sizes straddling vector widths and odd tails.
        for (size_t n : {0u, 1u, 2u, 3u, 4u, 5u, 7u, 8u, 15u, 64u, 129u, 1000u}) {
            auto x = random_array(rng, n);
            auto y = random_array(rng, n);

            CHECK(kr.dot(x.data(), y.data(), n) == ref.dot(x.data(), y.data(), n));
            CHECK(kr.sum(x.data(), n) == ref.sum(x.data(), n));

            auto y1 = y, y2 = y;
            kr.axpy(1.7, x.data(), y1.data(), n);
            ref.axpy(1.7, x.data(), y2.data(), n);
            CHECK(y1 == y2);

            auto s1 = x, s2 = x;
            kr.scale(-0.3, s1.data(), n);
            ref.scale(-0.3, s2.data(), n);
            CHECK(s1 == s2);

            std::vector<double> o1(n), o2(n);
            kr.add(x.data(), y.data(), o1.data(), n);
            ref.add(x.data(), y.data(), o2.data(), n);
            CHECK(o1 == o2);
            kr.sub(x.data(), y.data(), o1.data(), n);
            ref.sub(x.data(), y.data(), o2.data(), n);
            CHECK(o1 == o2);
            kr.mul(x.data(), y.data(), o1.data(), n);
            ref.mul(x.data(), y.data(), o2.data(), n);
            CHECK(o1 == o2);
        }
    }
    kern::select("auto");
}

TEST_CASE("adam update is bit-identical across backends") {
    Rng rng(13);
    kern::AdamUpdateArgs args{1e-3, 0.9, 0.999, 1e-8,
                              1.0 / (1.0 - 0.9), 1.0 / (1.0 - 0.999)};
    for (const auto& name : kern::available_backends()) {
        if (name == "scalar") {
            continue;
        }
        kern::select(name);
        for (size_t n : {1u, 5u, 64u, 257u}) {
            auto p = random_array(rng, n);
            auto g = random_array(rng, n);
            auto m = random_array(rng, n, 0.0, 0.1);
            auto v = random_array(rng, n, 0.0, 0.1);
            auto p2 = p, m2 = m, v2 = v;
            kern::active().adam_update(p.data(), g.data(), m.data(), v.data(), n,
                                       args);
            kern::kScalarKernels.adam_update(p2.data(), g.data(), m2.data(),
                                             v2.data(), n, args);
            CHECK(p == p2);
            CHECK(m == m2);
            CHECK(v == v2);
        }
    }
    kern::select("auto");
}

TEST_CASE("backend selection") {
    CHECK_THROWS(kern::select("no-such-backend"));
    kern::select("scalar");
    CHECK(std::string(kern::active().name) == "scalar");
    kern::select("auto");
    auto names = kern::available_backends();
    CHECK(!names.empty());
}
