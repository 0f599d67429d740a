#include <doctest.h>

#include <cmath>

#include "tra/gradcheck.hpp"
#include "tra/ops.hpp"
#include "tra/rng.hpp"
#include "tra/verify.hpp"

using namespace tra;

namespace {

Tensor<double> randt(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t = Tensor<double>::zeros(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
    REQUIRE(a.shape() == b.shape());
    double worst = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a.values()[static_cast<std::size_t>(i)] -
                                         b.values()[static_cast<std::size_t>(i)]));
    }
    return worst;
}

} // namespace

TEST_CASE("tensor construction enforces the shape/length invariant") {
    CHECK_THROWS_AS(Tensor<double>::from({2, 3}, {1.0, 2.0}), ShapeError);
    Tensor<double> t = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
    CHECK(t.size() == 4);
    CHECK(t.at(1, 0) == 3.0);
    CHECK(t.all_finite());
}

TEST_CASE("conv2d: all-ones 3x3 sums to 9") {
    Tensor<double> x = Tensor<double>::full({1, 1, 3, 3}, 1.0);
    Tensor<double> w = Tensor<double>::full({1, 1, 3, 3}, 1.0);
    Tensor<double> b = Tensor<double>::zeros({1});
    Tensor<double> y = ops::conv2d<double>(nullptr, x, w, b, 1, 0);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.item() == doctest::Approx(9.0).epsilon(1e-15));
}

TEST_CASE("conv2d: identity kernel with padding 1 reproduces the input") {
    Rng rng(3);
    Tensor<double> x = randt({2, 2, 4, 5}, rng);
    Tensor<double> w = Tensor<double>::zeros({2, 2, 3, 3});
    // center tap 1 on the matching channel
    w.at(0, 0, 1, 1) = 1.0;
    w.at(1, 1, 1, 1) = 1.0;
    Tensor<double> y = ops::conv2d<double>(nullptr, x, w, Tensor<double>{}, 1, 1);
    CHECK(max_abs_diff(y, x) == 0.0);
}

TEST_CASE("conv2d matches the six-nested-loop oracle") {
    Rng rng(4);
    Tensor<double> x = randt({2, 3, 5, 5}, rng);
    Tensor<double> w = randt({4, 3, 3, 3}, rng);
    Tensor<double> b = randt({4}, rng);
    for (const auto& [stride, pad] : std::vector<std::pair<int, int>>{{1, 0}, {1, 1}, {2, 1}}) {
        Tensor<double> got = ops::conv2d<double>(nullptr, x, w, b, stride, pad);
        Tensor<double> want = verify::oracle::conv2d_direct(x, w, b, stride, pad);
        CHECK(max_abs_diff(got, want) < 1e-12);
    }
}

TEST_CASE("conv2d rejects mismatched shapes with a dimension diagnostic") {
    Tensor<double> x = Tensor<double>::zeros({1, 3, 5, 5});
    Tensor<double> w = Tensor<double>::zeros({2, 4, 3, 3});
    try {
        ops::conv2d<double>(nullptr, x, w, Tensor<double>{}, 1, 0);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("dim 1") != std::string::npos);
    }
    // window that cannot fit at all
    Tensor<double> w2 = Tensor<double>::zeros({2, 3, 7, 7});
    CHECK_THROWS_AS(ops::conv2d<double>(nullptr, x, w2, Tensor<double>{}, 1, 0), ShapeError);
    // floor semantics: a stride-2 7x7 stem over an even extent crops the tail
    Tensor<double> img = Tensor<double>::zeros({1, 3, 64, 64});
    Tensor<double> stem = Tensor<double>::zeros({2, 3, 7, 7});
    CHECK(ops::conv2d<double>(nullptr, img, stem, Tensor<double>{}, 2, 3).shape() ==
          Shape{1, 2, 32, 32});
}

TEST_CASE("fully_connected: identity and constant cases") {
    Tensor<double> x = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor<double> eye = Tensor<double>::zeros({3, 3});
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    Tensor<double> y = ops::fully_connected<double>(nullptr, x, eye, Tensor<double>{});
    CHECK(max_abs_diff(y, x) == 0.0);

    Tensor<double> zero_w = Tensor<double>::zeros({2, 3});
    Tensor<double> b = Tensor<double>::from({2}, {0.5, -1.5});
    Tensor<double> yb = ops::fully_connected<double>(nullptr, x, zero_w, b);
    for (int i = 0; i < 2; ++i) {
        CHECK(yb.at(i, 0) == 0.5);
        CHECK(yb.at(i, 1) == -1.5);
    }
}

TEST_CASE("fully_connected matches the dot-product oracle") {
    Rng rng(5);
    Tensor<double> x = randt({3, 4}, rng);
    Tensor<double> w = randt({5, 4}, rng);
    Tensor<double> b = randt({5}, rng);
    CHECK(max_abs_diff(ops::fully_connected<double>(nullptr, x, w, b),
                       verify::oracle::fully_connected_direct(x, w, b)) < 1e-12);
    Tensor<double> bad = Tensor<double>::zeros({5, 7});
    CHECK_THROWS_AS(ops::fully_connected<double>(nullptr, x, bad, Tensor<double>{}), ShapeError);
}

TEST_CASE("pointwise ops: sigmoid(0)=0.5, relu idempotent, chain vs scalar oracle") {
    Tensor<double> zero = Tensor<double>::zeros({1, 1, 1, 1});
    CHECK(ops::sigmoid<double>(nullptr, zero).item() == 0.5);

    Rng rng(6);
    Tensor<double> x = randt({2, 2, 3, 3}, rng, -2.0, 2.0);
    Tensor<double> r1 = ops::relu<double>(nullptr, x);
    Tensor<double> r2 = ops::relu<double>(nullptr, r1);
    CHECK(max_abs_diff(r1, r2) == 0.0);

    Tensor<double> a = randt({2, 2, 2, 2}, rng);
    Tensor<double> b = randt({2, 2, 2, 2}, rng);
    Tensor<double> got =
        ops::elementwise_add<double>(nullptr, ops::elementwise_mul<double>(nullptr, a, b), b);
    for (std::int64_t i = 0; i < got.size(); ++i) {
        const double want = a.values()[static_cast<std::size_t>(i)] *
                                b.values()[static_cast<std::size_t>(i)] +
                            b.values()[static_cast<std::size_t>(i)];
        CHECK(std::abs(got.values()[static_cast<std::size_t>(i)] - want) < 1e-15);
    }
}

TEST_CASE("broadcast expands size-1 channel and spatial dims only") {
    Rng rng(7);
    Tensor<double> f = randt({2, 3, 4, 4}, rng);
    Tensor<double> ch = randt({2, 3, 1, 1}, rng);
    Tensor<double> sp = randt({2, 1, 4, 4}, rng);
    Tensor<double> y = ops::elementwise_mul<double>(nullptr, f, ch);
    for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t c = 0; c < 3; ++c)
            for (std::int64_t i = 0; i < 4; ++i)
                for (std::int64_t j = 0; j < 4; ++j)
                    CHECK(y.at(n, c, i, j) == f.at(n, c, i, j) * ch.at(n, c, 0, 0));
    Tensor<double> z = ops::elementwise_add<double>(nullptr, f, sp);
    CHECK(z.at(1, 2, 3, 0) == f.at(1, 2, 3, 0) + sp.at(1, 0, 3, 0));

    // batch-dim broadcast is out of contract
    Tensor<double> badn = Tensor<double>::zeros({1, 3, 4, 4});
    CHECK_THROWS_AS(ops::elementwise_mul<double>(nullptr, f, badn), ShapeError);
}

TEST_CASE("global pools: arithmetic, constants, permutation invariance") {
    Tensor<double> x = Tensor<double>::from({1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK(ops::global_avg_pool<double>(nullptr, x).item() == doctest::Approx(2.5));
    CHECK(ops::global_max_pool<double>(nullptr, x).item() == 4.0);

    Tensor<double> k = Tensor<double>::full({2, 3, 4, 4}, 0.7);
    const Tensor<double> kavg = ops::global_avg_pool<double>(nullptr, k);
    for (double v : kavg.values()) {
        CHECK(v == doctest::Approx(0.7).epsilon(1e-15));
    }
    const Tensor<double> kmax = ops::global_max_pool<double>(nullptr, k);
    for (double v : kmax.values()) CHECK(v == 0.7);

    Tensor<double> p = Tensor<double>::from({1, 1, 2, 2}, {4, 3, 2, 1}); // spatial permutation
    CHECK(ops::global_avg_pool<double>(nullptr, p).item() ==
          doctest::Approx(ops::global_avg_pool<double>(nullptr, x).item()).epsilon(1e-15));
    CHECK(ops::global_max_pool<double>(nullptr, p).item() ==
          ops::global_max_pool<double>(nullptr, x).item());
}

TEST_CASE("windowed pools: arithmetic, constants, oracle, window validation") {
    Tensor<double> x = Tensor<double>::from({1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK(ops::max_pool2d<double>(nullptr, x, 2, 2).item() == 4.0);
    CHECK(ops::avg_pool2d<double>(nullptr, x, 2, 2).item() == doctest::Approx(2.5));

    Tensor<double> c = Tensor<double>::full({1, 2, 4, 4}, -0.3);
    const Tensor<double> cpool = ops::max_pool2d<double>(nullptr, c, 2, 2);
    for (double v : cpool.values()) CHECK(v == -0.3);

    Rng rng(8);
    Tensor<double> r = randt({1, 2, 6, 6}, rng);
    CHECK(max_abs_diff(ops::max_pool2d<double>(nullptr, r, 2, 2),
                       verify::oracle::max_pool2d_direct(r, 2, 2)) < 1e-12);
    CHECK(max_abs_diff(ops::avg_pool2d<double>(nullptr, r, 3, 3),
                       verify::oracle::avg_pool2d_direct(r, 3, 3)) < 1e-12);

    CHECK_THROWS_AS(ops::max_pool2d<double>(nullptr, x, 3, 1), ShapeError);
}

TEST_CASE("backward: sum gives ones, sum of squares gives 2x") {
    Rng rng(9);
    Tensor<double> x = randt({2, 3}, rng);
    x.set_requires_grad(true);

    {
        Graph<double> g;
        Tensor<double> loss = ops::reduce_sum(&g, x);
        g.backward(loss);
        for (double v : x.grad()) CHECK(v == 1.0);
    }
    x.zero_grad();
    {
        Graph<double> g;
        Tensor<double> loss = ops::reduce_sum(&g, ops::elementwise_mul(&g, x, x));
        g.backward(loss);
        for (std::int64_t i = 0; i < x.size(); ++i) {
            CHECK(x.grad()[static_cast<std::size_t>(i)] ==
                  doctest::Approx(2.0 * x.values()[static_cast<std::size_t>(i)]).epsilon(1e-15));
        }
    }
}

TEST_CASE("backward rejects a loss that was not recorded on the graph") {
    Graph<double> g;
    Tensor<double> loose = Tensor<double>::scalar(1.0);
    CHECK_THROWS_AS(g.backward(loose), ShapeError);
    Tensor<double> vec = Tensor<double>::zeros({3});
    CHECK_THROWS_AS(g.backward(vec), ShapeError);
}

TEST_CASE("max-pool ties route gradient to the first (row-major) element") {
    Tensor<double> x = Tensor<double>::full({1, 1, 2, 2}, 1.0);
    x.set_requires_grad(true);
    Graph<double> g;
    Tensor<double> y = ops::max_pool2d(&g, x, 2, 2);
    Tensor<double> loss = ops::reduce_sum(&g, y);
    g.backward(loss);
    CHECK(x.grad()[0] == 1.0);
    CHECK(x.grad()[1] == 0.0);
    CHECK(x.grad()[2] == 0.0);
    CHECK(x.grad()[3] == 0.0);
}

TEST_CASE("finite_diff_check: sigmoid-of-sum is accurate to 1e-8") {
    Tensor<double> p = Tensor<double>::from({1}, {0.3});
    p.set_requires_grad(true);
    const auto make_loss = [p](Graph<double>* g) {
        return ops::reduce_sum(g, ops::sigmoid(g, p));
    };
    GradCheckOptions opt;
    opt.total_probes = 4;
    const GradCheckReport rep = finite_diff_check(make_loss, {p}, opt);
    CHECK(rep.max_rel_err < 1e-8);
}

TEST_CASE("finite_diff_check flags a non-deterministic function") {
    Tensor<double> p = Tensor<double>::from({1}, {0.0});
    p.set_requires_grad(true);
    int calls = 0;
    const auto make_loss = [&calls, p](Graph<double>* g) {
        ++calls;
        Tensor<double> noise = Tensor<double>::scalar(0.001 * calls);
        return ops::reduce_sum(g, ops::elementwise_add<double>(g, p, noise));
    };
    CHECK_THROWS_AS(finite_diff_check(make_loss, {p}, {}), NumericError);
}

TEST_CASE("finite_diff_check exposes a deliberately corrupted backward") {
    Rng rng(10);
    Tensor<double> x = randt({4}, rng);
    x.set_requires_grad(true);
    // test-only op with a wrong backward: forward x^2, backward pretends 3x
    const auto broken_square = [](Graph<double>* g, const Tensor<double>& in) {
        Tensor<double> y = Tensor<double>::zeros(in.shape());
        for (std::int64_t i = 0; i < in.size(); ++i) {
            y.values()[static_cast<std::size_t>(i)] =
                in.values()[static_cast<std::size_t>(i)] * in.values()[static_cast<std::size_t>(i)];
        }
        if (g && in.requires_grad()) {
            y.set_requires_grad(true);
            Tensor<double> xc = in, yc = y;
            g->record("broken_square", {in}, y, [xc, yc]() mutable {
                for (std::int64_t i = 0; i < xc.size(); ++i) {
                    xc.grad_data()[i] += 3.0 * xc.values()[static_cast<std::size_t>(i)] *
                                         yc.grad()[static_cast<std::size_t>(i)];
                }
            });
        }
        return y;
    };
    const auto make_loss = [&](Graph<double>* g) { return ops::reduce_sum(g, broken_square(g, x)); };
    const GradCheckReport rep = finite_diff_check(make_loss, {x}, {});
    CHECK(rep.max_rel_err > 0.1);
}

TEST_CASE("primitive gradients match central finite differences over 50 seeds") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed * 7919 + 13);
        Tensor<double> x = randt({2, 4, 6, 6}, rng, -1.0, 1.0);
        Tensor<double> w = randt({3, 4, 3, 3}, rng, -0.7, 0.7);
        x.set_requires_grad(true);
        w.set_requires_grad(true);
        const auto make_loss = [x, w](Graph<double>* g) {
            Tensor<double> y = ops::conv2d(g, x, w, Tensor<double>{}, 2, 1);
            y = ops::sigmoid(g, y);
            y = ops::avg_pool2d(g, y, 2, 2);
            return ops::reduce_sum(g, ops::elementwise_mul(g, y, y));
        };
        GradCheckOptions opt;
        opt.total_probes = 8;
        opt.seed = seed;
        const GradCheckReport rep = finite_diff_check(make_loss, {x, w}, opt);
        CHECK_MESSAGE(rep.max_rel_err < 1e-6, "seed ", seed, " worst ", rep.max_rel_err);
    }
}
