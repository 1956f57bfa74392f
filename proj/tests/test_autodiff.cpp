#include <doctest.h>

#include <cmath>
#include <vector>

#include "stylealign/adam.hpp"
#include "stylealign/autodiff.hpp"
#include "stylealign/errors.hpp"
#include "stylealign/gradcheck.hpp"
#include "stylealign/rng.hpp"

using namespace stylealign;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int64_t> shape, double scale = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) {
        t.at(i) = scale * rng.next_gaussian();
    }
    return t;
}

}  // namespace

TEST_CASE("gelu values against the exact erf form") {
    Tape tape;
    ValueId x = tape.constant(Tensor::vector({0.0, 10.0, 1.0, -1.0}));
    const Tensor& y = tape.value(tape.gelu(x));
    CHECK(y.at(0) == 0.0);
    CHECK(y.at(1) == doctest::Approx(10.0).epsilon(1e-10));
    // Oracle: 1 * Phi(1) from the erf reference.
    const double phi1 = 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));
    CHECK(y.at(2) == doctest::Approx(0.841345).epsilon(1e-5));
    CHECK(y.at(2) == doctest::Approx(phi1).epsilon(1e-14));
    CHECK(y.at(3) == doctest::Approx(-1.0 + phi1).epsilon(1e-12));
}

TEST_CASE("gelu gradient at zero is one half") {
    Tape tape;
    ValueId x = tape.leaf(Tensor::scalar(0.0), true);
    ValueId y = tape.sum(tape.gelu(x));
    tape.backward(y);
    CHECK(tape.grad(x).item() == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("power rule via mul: d(x^2)/dx = 2x") {
    Tape tape;
    ValueId x = tape.leaf(Tensor::scalar(3.0), true);
    ValueId y = tape.mul(x, x);
    tape.backward(y);
    CHECK(tape.grad(x).item() == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("layer_norm basics") {
    Tape tape;
    ValueId gamma = tape.constant(Tensor::vector({1.0, 1.0}));
    ValueId beta = tape.constant(Tensor::vector({0.0, 0.0}));

    SUBCASE("constant input maps to zeros") {
        ValueId v = tape.constant(Tensor::vector({4.2, 4.2}));
        const Tensor& out = tape.value(tape.layer_norm_rows(v, gamma, beta, 1e-5));
        CHECK(out.at(0) == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(out.at(1) == doctest::Approx(0.0).epsilon(1e-12));
    }

    SUBCASE("hand-evaluated [1,-1] with eps") {
        ValueId v = tape.constant(Tensor::vector({1.0, -1.0}));
        const Tensor& out = tape.value(tape.layer_norm_rows(v, gamma, beta, 1e-5));
        const double want = 1.0 / std::sqrt(1.0 + 1e-5);
        CHECK(out.at(0) == doctest::Approx(want).epsilon(1e-14));
        CHECK(out.at(1) == doctest::Approx(-want).epsilon(1e-14));
    }

    SUBCASE("shift invariance and standardization") {
        Rng rng(5);
        for (int trial = 0; trial < 20; ++trial) {
            Tensor base = random_tensor(rng, {8});
            const double shift = rng.next_double(-10.0, 10.0);
            Tensor shifted = base;
            for (int64_t i = 0; i < shifted.size(); ++i) {
                shifted.at(i) += shift;
            }
            Tape t2;
            ValueId g2 = t2.constant(Tensor::full({8}, 1.0));
            ValueId b2 = t2.constant(Tensor::zeros({8}));
            Tensor a = t2.value(t2.layer_norm_rows(t2.constant(base), g2, b2, 1e-5));
            Tensor b = t2.value(
                t2.layer_norm_rows(t2.constant(shifted), g2, b2, 1e-5));
            double mean = 0.0, var = 0.0;
            for (int64_t i = 0; i < a.size(); ++i) {
                CHECK(a.at(i) == doctest::Approx(b.at(i)).epsilon(1e-9));
                mean += a.at(i);
            }
            mean /= a.size();
            for (int64_t i = 0; i < a.size(); ++i) {
                var += (a.at(i) - mean) * (a.at(i) - mean);
            }
            var /= a.size();
            CHECK(std::abs(mean) < 1e-6);
            CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
        }
    }

    SUBCASE("length mismatch is a shape error") {
        ValueId v = tape.constant(Tensor::vector({1.0, 2.0, 3.0}));
        CHECK_THROWS_AS(tape.layer_norm_rows(v, gamma, beta, 1e-5), ShapeError);
    }
}

TEST_CASE("masked mean pooling") {
    Tape tape;

    SUBCASE("single unmasked frame is returned verbatim") {
        ValueId m = tape.constant(Tensor::matrix(1, 2, {3.5, -1.25}));
        const Tensor& out = tape.value(tape.masked_mean_rows(m, {1}));
        CHECK(out.at(0) == 3.5);
        CHECK(out.at(1) == -1.25);
    }

    SUBCASE("two frames average") {
        ValueId m = tape.constant(Tensor::matrix(2, 2, {1, 3, 3, 1}));
        const Tensor& out = tape.value(tape.masked_mean_rows(m, {1, 1}));
        CHECK(out.at(0) == 2.0);
        CHECK(out.at(1) == 2.0);
    }

    SUBCASE("padding frames contribute nothing") {
        ValueId m = tape.constant(Tensor::matrix(2, 2, {5, 5, 0, 0}));
        const Tensor& out = tape.value(tape.masked_mean_rows(m, {1, 0}));
        CHECK(out.at(0) == 5.0);
        CHECK(out.at(1) == 5.0);
    }

    SUBCASE("all frames masked is a degenerate input") {
        ValueId m = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
        CHECK_THROWS_AS(tape.masked_mean_rows(m, {0, 0}), DegenerateInputError);
    }
}

TEST_CASE("backward runs each adjoint exactly once and in reverse") {
    Tape tape;
    ValueId x = tape.leaf(Tensor::scalar(1.5), true);
    // Diamond: y = x*x + gelu(x); both consumers feed one sum.
    ValueId sq = tape.mul(x, x);
    ValueId ge = tape.gelu(x);
    ValueId total = tape.add(sq, ge);
    ValueId loss = tape.sum(total);
    tape.backward(loss);
    // Adjoints: sum, add, gelu, mul — each exactly once.
    CHECK(tape.adjoint_invocations() == 4);
    const double phi = normal_cdf(1.5) + 1.5 * normal_pdf(1.5);
    CHECK(tape.grad(x).item() == doctest::Approx(3.0 + phi).epsilon(1e-12));
}

TEST_CASE("backward contract errors") {
    SUBCASE("non-scalar seed") {
        Tape tape;
        ValueId x = tape.leaf(Tensor::vector({1.0, 2.0}), true);
        CHECK_THROWS_AS(tape.backward(x), ContractError);
    }
    SUBCASE("second backward on the same record") {
        Tape tape;
        ValueId x = tape.leaf(Tensor::scalar(1.0), true);
        ValueId y = tape.sum(x);
        tape.backward(y);
        CHECK_THROWS_AS(tape.backward(y), ContractError);
    }
    SUBCASE("non-parameter leaves receive no gradient") {
        Tape tape;
        ValueId x = tape.leaf(Tensor::scalar(2.0), true);
        ValueId c = tape.constant(Tensor::scalar(4.0));
        ValueId y = tape.sum(tape.mul(x, c));
        tape.backward(y);
        CHECK(tape.grad(x).item() == 4.0);
        CHECK(!tape.has_grad(c));
    }
}

TEST_CASE("finite differences: quadratic objective is exact to roundoff") {
    Tensor w = Tensor::vector({1.0, -2.0, 0.5});
    std::vector<Tensor*> params = {&w};
    std::vector<std::string> names = {"w"};
    auto forward = [&]() {
        // f(w) = sum(w^2) + 3*w0
        return w.at(0) * w.at(0) + w.at(1) * w.at(1) + w.at(2) * w.at(2) +
               3.0 * w.at(0);
    };
    Tensor analytic = Tensor::vector({2.0 * w.at(0) + 3.0, 2.0 * w.at(1),
                                      2.0 * w.at(2)});
    std::vector<Tensor> grads = {analytic};
    auto result = finite_difference_check(params, names, grads, forward, 1e-4);
    CHECK(result.max_rel_error < 1e-9);
    CHECK(result.coordinates_checked == 3);
}

TEST_CASE("finite differences: corrupted adjoint is detected") {
    // gelu forward with a wrong derivative (missing the x*pdf term).
    Rng rng(21);
    Tensor x = random_tensor(rng, {6});
    std::vector<Tensor*> params = {&x};
    std::vector<std::string> names = {"x"};
    auto forward = [&]() {
        double acc = 0.0;
        for (int64_t i = 0; i < x.size(); ++i) {
            acc += x.at(i) * normal_cdf(x.at(i));
        }
        return acc;
    };
    Tensor corrupted = Tensor::zeros({6});
    for (int64_t i = 0; i < x.size(); ++i) {
        corrupted.at(i) = normal_cdf(x.at(i));  // deliberately incomplete
    }
    std::vector<Tensor> grads = {corrupted};
    auto result = finite_difference_check(params, names, grads, forward, 1e-5);
    CHECK(result.max_rel_error > 1e-2);
}

TEST_CASE("corrupted adjoint through the tape's unary hook") {
    Rng rng(22);
    Tensor x0 = random_tensor(rng, {4});
    Tensor x = x0;
    std::vector<Tensor*> params = {&x};
    std::vector<std::string> names = {"x"};
    auto run = [&](bool corrupt) {
        Tape tape;
        ValueId xd = tape.leaf(x, true);
        ValueId y = tape.unary(
            xd, [](double v) { return std::sin(v); },
            [corrupt](double v) { return corrupt ? std::cos(v) + 0.3 : std::cos(v); });
        ValueId loss = tape.sum(y);
        tape.backward(loss);
        return tape.grad(xd);
    };
    auto forward = [&]() {
        double acc = 0.0;
        for (int64_t i = 0; i < x.size(); ++i) {
            acc += std::sin(x.at(i));
        }
        return acc;
    };
    {
        std::vector<Tensor> good = {run(false)};
        auto res = finite_difference_check(params, names, good, forward, 1e-6);
        CHECK(res.max_rel_error < 1e-8);
    }
    {
        std::vector<Tensor> bad = {run(true)};
        auto res = finite_difference_check(params, names, bad, forward, 1e-6);
        CHECK(res.max_rel_error > 1e-2);
    }
}

TEST_CASE("matmul and friends agree with finite differences") {
    Rng rng(31);
    Tensor a = random_tensor(rng, {3, 4});
    Tensor b = random_tensor(rng, {4, 2});
    Tensor v = random_tensor(rng, {2});
    std::vector<Tensor*> params = {&a, &b, &v};
    std::vector<std::string> names = {"a", "b", "v"};
    auto build = [&](Tape& tape, ValueId& av, ValueId& bv, ValueId& vv) {
        av = tape.leaf(a, true);
        bv = tape.leaf(b, true);
        vv = tape.leaf(v, true);
        ValueId prod = tape.add_rowvec(tape.matmul(av, bv), vv);
        ValueId normed = tape.l2_normalize_rows(prod);
        ValueId lse = tape.logsumexp_rows(tape.matmul_nt(normed, normed));
        return tape.sum(lse);
    };
    auto forward = [&]() {
        Tape tape;
        ValueId av, bv, vv;
        return tape.value(build(tape, av, bv, vv)).item();
    };
    Tape tape;
    ValueId av, bv, vv;
    ValueId loss = build(tape, av, bv, vv);
    tape.backward(loss);
    std::vector<Tensor> grads = {tape.grad(av), tape.grad(bv), tape.grad(vv)};
    auto result = finite_difference_check(params, names, grads, forward, 1e-5);
    CHECK(result.max_rel_error < 1e-6);
}

TEST_CASE("forward ops are pure: identical inputs give identical outputs") {
    Rng rng(41);
    Tensor a = random_tensor(rng, {5, 3});
    auto eval = [&]() {
        Tape tape;
        ValueId x = tape.constant(a);
        ValueId y = tape.layer_norm_rows(
            tape.gelu(x), tape.constant(Tensor::full({3}, 1.0)),
            tape.constant(Tensor::zeros({3})), 1e-5);
        return tape.value(tape.sum(y)).item();
    };
    const double first = eval();
    for (int i = 0; i < 5; ++i) {
        CHECK(eval() == first);
    }
}

TEST_CASE("adam optimizer") {
    AdamConfig cfg;
    cfg.learning_rate = 0.01;

    SUBCASE("zero gradient on a fresh state leaves parameters unchanged") {
        Tensor p = Tensor::vector({1.0, -2.0});
        std::vector<const Tensor*> reg = {&p};
        AdamState state(cfg, reg);
        Tensor g = Tensor::zeros({2});
        std::vector<Tensor*> params = {&p};
        std::vector<Tensor> grads = {g};
        state.step(params, grads);
        CHECK(p.at(0) == 1.0);
        CHECK(p.at(1) == -2.0);
        CHECK(state.step_count() == 1);
    }

    SUBCASE("first step magnitude matches the hand-evaluated formula") {
        Tensor p = Tensor::vector({0.5, -0.5, 3.0});
        Tensor g = Tensor::vector({0.3, -40.0, 1e-3});
        std::vector<const Tensor*> reg = {&p};
        AdamState state(cfg, reg);
        Tensor p0 = p;
        std::vector<Tensor*> params = {&p};
        std::vector<Tensor> grads = {g};
        state.step(params, grads);
        for (int64_t i = 0; i < p.size(); ++i) {
            // Step 1: m_hat = g, v_hat = g^2, delta = lr*g/(|g|+eps).
            const double want =
                p0.at(i) - cfg.learning_rate * g.at(i) /
                               (std::sqrt(g.at(i) * g.at(i)) + cfg.epsilon);
            CHECK(p.at(i) == doctest::Approx(want).epsilon(1e-15));
        }
    }

    SUBCASE("identical steps are deterministic") {
        Tensor pa = Tensor::vector({1.0, 2.0});
        Tensor pb = Tensor::vector({1.0, 2.0});
        Tensor g = Tensor::vector({0.7, -0.1});
        std::vector<const Tensor*> rega = {&pa};
        std::vector<const Tensor*> regb = {&pb};
        AdamState sa(cfg, rega), sb(cfg, regb);
        std::vector<Tensor> grads = {g};
        for (int i = 0; i < 3; ++i) {
            std::vector<Tensor*> paramsa = {&pa};
            std::vector<Tensor*> paramsb = {&pb};
            sa.step(paramsa, grads);
            sb.step(paramsb, grads);
        }
        CHECK(pa.at(0) == pb.at(0));
        CHECK(pa.at(1) == pb.at(1));
    }

    SUBCASE("shape mismatch raises") {
        Tensor p = Tensor::vector({1.0, 2.0});
        std::vector<const Tensor*> reg = {&p};
        AdamState state(cfg, reg);
        Tensor g = Tensor::vector({1.0});
        std::vector<Tensor*> params = {&p};
        std::vector<Tensor> grads = {g};
        CHECK_THROWS_AS(state.step(params, grads), ShapeError);
    }
}

TEST_CASE("rng streams") {
    SUBCASE("derived streams are label-separated and reproducible") {
        Rng a = Rng::derive(42, "batch");
        Rng b = Rng::derive(42, "batch");
        Rng c = Rng::derive(42, "captions");
        CHECK(a.next_u64() == b.next_u64());
        CHECK(a.next_u64() != c.next_u64());
    }
    SUBCASE("state round trip") {
        Rng a = Rng::derive(7, "x");
        a.next_gaussian();
        std::string s = a.save_state();
        Rng b;
        b.restore_state(s);
        for (int i = 0; i < 10; ++i) {
            CHECK(a.next_gaussian() == b.next_gaussian());
            CHECK(a.next_below(1000) == b.next_below(1000));
        }
    }
}
