#include <doctest.h>

#include <cmath>

#include "tra/attention.hpp"
#include "tra/gradcheck.hpp"
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

double sigmoid_scalar(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Hand-unrolled CBAM (channel then spatial, add-combined spatial squeeze),
// independent of the ops layer except for the direct-conv oracle.
Tensor<double> cbam_direct(const CBAMBlock<double>& b, const Tensor<double>& f) {
    const std::int64_t n = f.dim(0), c = f.dim(1), h = f.dim(2), w = f.dim(3);
    Tensor<double> cur = f.clone_values();
    if (b.enable_channel) {
        for (std::int64_t i = 0; i < n; ++i) {
            std::vector<double> avg(static_cast<std::size_t>(c), 0.0), mx(static_cast<std::size_t>(c));
            for (std::int64_t ch = 0; ch < c; ++ch) {
                double best = f.at(i, ch, 0, 0);
                for (std::int64_t y = 0; y < h; ++y)
                    for (std::int64_t x = 0; x < w; ++x) {
                        avg[static_cast<std::size_t>(ch)] += f.at(i, ch, y, x);
                        best = std::max(best, f.at(i, ch, y, x));
                    }
                avg[static_cast<std::size_t>(ch)] /= static_cast<double>(h * w);
                mx[static_cast<std::size_t>(ch)] = best;
            }
            const auto mlp = [&](const std::vector<double>& in) {
                const std::int64_t mid = b.ch_w1.dim(0);
                std::vector<double> hidden(static_cast<std::size_t>(mid), 0.0);
                for (std::int64_t m = 0; m < mid; ++m) {
                    for (std::int64_t ch = 0; ch < c; ++ch)
                        hidden[static_cast<std::size_t>(m)] += b.ch_w1.at(m, ch) * in[static_cast<std::size_t>(ch)];
                    hidden[static_cast<std::size_t>(m)] = std::max(0.0, hidden[static_cast<std::size_t>(m)]);
                }
                std::vector<double> out(static_cast<std::size_t>(c), 0.0);
                for (std::int64_t ch = 0; ch < c; ++ch)
                    for (std::int64_t m = 0; m < mid; ++m)
                        out[static_cast<std::size_t>(ch)] += b.ch_w2.at(ch, m) * hidden[static_cast<std::size_t>(m)];
                return out;
            };
            const auto wa = mlp(avg);
            const auto wm = mlp(mx);
            for (std::int64_t ch = 0; ch < c; ++ch) {
                const double s = sigmoid_scalar(wa[static_cast<std::size_t>(ch)] + wm[static_cast<std::size_t>(ch)]);
                for (std::int64_t y = 0; y < h; ++y)
                    for (std::int64_t x = 0; x < w; ++x) cur.at(i, ch, y, x) *= s;
            }
        }
    }
    if (b.enable_spatial) {
        Tensor<double> avg = Tensor<double>::zeros({n, 1, h, w});
        Tensor<double> mx = Tensor<double>::zeros({n, 1, h, w});
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t x = 0; x < w; ++x) {
                    double acc = 0.0, best = cur.at(i, 0, y, x);
                    for (std::int64_t ch = 0; ch < c; ++ch) {
                        acc += cur.at(i, ch, y, x);
                        best = std::max(best, cur.at(i, ch, y, x));
                    }
                    avg.at(i, 0, y, x) = acc / static_cast<double>(c);
                    mx.at(i, 0, y, x) = best;
                }
        const std::int64_t pad = b.spatial_kernel / 2;
        const Tensor<double> ca = verify::oracle::conv2d_direct(avg, b.sp_w, b.sp_b, 1, pad);
        const Tensor<double> cm = verify::oracle::conv2d_direct(mx, b.sp_w, b.sp_b, 1, pad);
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t x = 0; x < w; ++x) {
                    const double s = sigmoid_scalar(ca.at(i, 0, y, x) + cm.at(i, 0, y, x));
                    for (std::int64_t ch = 0; ch < c; ++ch) cur.at(i, ch, y, x) *= s;
                }
    }
    if (b.residual) {
        for (std::int64_t i = 0; i < cur.size(); ++i)
            cur.values()[static_cast<std::size_t>(i)] += f.values()[static_cast<std::size_t>(i)];
    }
    return cur;
}

} // namespace

TEST_CASE("se block: zero weights with residual give 1.5x the input") {
    SEBlock<double> se = SEBlock<double>::make(4, 2, true);
    Rng rng(20);
    Tensor<double> u = randt({2, 4, 3, 3}, rng);
    Tensor<double> out = se.forward(nullptr, u);
    for (std::int64_t i = 0; i < u.size(); ++i) {
        CHECK(out.values()[static_cast<std::size_t>(i)] ==
              doctest::Approx(1.5 * u.values()[static_cast<std::size_t>(i)]).epsilon(1e-15));
    }
}

TEST_CASE("se block: zero input without residual is exactly zero") {
    SEBlock<double> se = SEBlock<double>::make(4, 2, false);
    Rng rng(21);
    se.w1 = randt({2, 4}, rng);
    se.w2 = randt({4, 2}, rng);
    Tensor<double> zero = Tensor<double>::zeros({1, 4, 5, 5});
    const Tensor<double> z_out = se.forward(nullptr, zero);
    for (double v : z_out.values()) CHECK(v == 0.0);
}

TEST_CASE("se block matches the hand-unrolled oracle (C=4, r=2)") {
    Rng rng(22);
    for (bool residual : {false, true}) {
        SEBlock<double> se = SEBlock<double>::make(4, 2, residual);
        se.w1 = randt({2, 4}, rng);
        se.w2 = randt({4, 2}, rng);
        Tensor<double> u = randt({2, 4, 5, 3}, rng);
        CHECK(max_abs_diff(se.forward(nullptr, u),
                           verify::oracle::se_forward_direct(u, se.w1, se.w2, residual)) < 1e-12);
    }
}

TEST_CASE("se block rejects channel mismatch and bad reduction") {
    CHECK_THROWS_AS(SEBlock<double>::make(6, 4, true), ConfigError);
    SEBlock<double> se = SEBlock<double>::make(4, 2, true);
    Tensor<double> u = Tensor<double>::zeros({1, 6, 3, 3});
    CHECK_THROWS_AS(se.forward(nullptr, u), ShapeError);
}

TEST_CASE("cbam channel weights: zero MLP gives 0.5, spatial permutation invariant") {
    CBAMBlock<double> cb = CBAMBlock<double>::make(4, 2, true, true, false);
    Rng rng(23);
    Tensor<double> f = randt({1, 4, 4, 4}, rng);
    const Tensor<double> cw = cb.channel_weights(nullptr, f);
    for (double v : cw.values()) CHECK(v == 0.5);

    cb.ch_w1 = randt({2, 4}, rng);
    cb.ch_w2 = randt({4, 2}, rng);
    Tensor<double> fp = f.clone_values();
    // reverse every channel plane (a spatial permutation)
    for (std::int64_t ch = 0; ch < 4; ++ch) {
        double* plane = fp.data() + ch * 16;
        std::reverse(plane, plane + 16);
    }
    CHECK(max_abs_diff(cb.channel_weights(nullptr, f), cb.channel_weights(nullptr, fp)) < 1e-12);
}

TEST_CASE("cbam spatial weights: constant input gives spatially constant weights") {
    CBAMBlock<double> cb = CBAMBlock<double>::make(4, 2, true, true, false);
    Rng rng(24);
    cb.sp_w = randt({1, 1, 7, 7}, rng, -0.3, 0.3);
    cb.sp_b = randt({1}, rng);
    Tensor<double> f = Tensor<double>::full({1, 4, 9, 9}, 0.4);
    Tensor<double> w = cb.spatial_weights(nullptr, f);
    // interior positions (7x7 support fully inside) share one value
    const double ref = w.at(0, 0, 4, 4);
    CHECK(w.at(0, 0, 3, 3) == doctest::Approx(ref).epsilon(1e-12));
    CHECK(w.at(0, 0, 5, 4) == doctest::Approx(ref).epsilon(1e-12));

    // zero conv weights: 0.5 everywhere
    CBAMBlock<double> cz = CBAMBlock<double>::make(4, 2, true, true, false);
    const Tensor<double> sw = cz.spatial_weights(nullptr, f);
    for (double v : sw.values()) CHECK(v == 0.5);
}

TEST_CASE("cbam forward: pure-skip, zero-input and oracle equivalence") {
    Rng rng(25);
    Tensor<double> f = randt({2, 4, 5, 5}, rng);

    CBAMBlock<double> skip = CBAMBlock<double>::make(4, 2, false, false, true);
    CHECK(max_abs_diff(skip.forward(nullptr, f), f) == 0.0);

    CHECK_THROWS_AS(CBAMBlock<double>::make(4, 2, false, false, false), ConfigError);

    CBAMBlock<double> cb = CBAMBlock<double>::make(4, 2, true, true, false);
    cb.ch_w1 = randt({2, 4}, rng);
    cb.ch_w2 = randt({4, 2}, rng);
    cb.sp_w = randt({1, 1, 7, 7}, rng, -0.3, 0.3);
    cb.sp_b = randt({1}, rng);

    Tensor<double> zero = Tensor<double>::zeros({1, 4, 5, 5});
    const Tensor<double> cz_out = cb.forward(nullptr, zero);
    for (double v : cz_out.values()) CHECK(v == 0.0);

    CHECK(max_abs_diff(cb.forward(nullptr, f), cbam_direct(cb, f)) < 1e-12);

    // channel-only and spatial-only variants against the same oracle
    CBAMBlock<double> ch_only = cb;
    ch_only.enable_spatial = false;
    CHECK(max_abs_diff(ch_only.forward(nullptr, f), cbam_direct(ch_only, f)) < 1e-12);
    CBAMBlock<double> sp_only = cb;
    sp_only.enable_channel = false;
    CHECK(max_abs_diff(sp_only.forward(nullptr, f), cbam_direct(sp_only, f)) < 1e-12);

    // residual toggle differs by exactly the input
    CBAMBlock<double> res = cb;
    res.residual = true;
    Tensor<double> expect = ops::elementwise_add<double>(nullptr, cb.forward(nullptr, f), f);
    CHECK(max_abs_diff(res.forward(nullptr, f), expect) == 0.0);
}

TEST_CASE("se and cbam pass finite-difference checks on 1x4x5x5") {
    Rng rng(26);
    SEBlock<double> se = SEBlock<double>::make(4, 2, false);
    se.w1 = randt({2, 4}, rng);
    se.w2 = randt({4, 2}, rng);
    se.w1.set_requires_grad(true);
    se.w2.set_requires_grad(true);
    Tensor<double> u = randt({1, 4, 5, 5}, rng);
    u.set_requires_grad(true);
    const auto se_loss = [se, u](Graph<double>* g) {
        Tensor<double> y = se.forward(g, u);
        return ops::reduce_sum(g, ops::elementwise_mul(g, y, y));
    };
    GradCheckOptions opt;
    opt.total_probes = 60;
    CHECK(finite_diff_check(se_loss, {u, se.w1, se.w2}, opt).max_rel_err < 1e-6);

    CBAMBlock<double> cb = CBAMBlock<double>::make(4, 2, true, true, false);
    cb.ch_w1 = randt({2, 4}, rng);
    cb.ch_w2 = randt({4, 2}, rng);
    cb.sp_w = randt({1, 1, 7, 7}, rng, -0.3, 0.3);
    cb.sp_b = randt({1}, rng);
    for (auto* t : {&cb.ch_w1, &cb.ch_w2, &cb.sp_w, &cb.sp_b}) t->set_requires_grad(true);
    Tensor<double> f = randt({1, 4, 5, 5}, rng);
    f.set_requires_grad(true);
    const auto cb_loss = [cb, f](Graph<double>* g) {
        Tensor<double> y = cb.forward(g, f);
        return ops::reduce_sum(g, ops::elementwise_mul(g, y, y));
    };
    CHECK(finite_diff_check(cb_loss, {f, cb.ch_w1, cb.ch_w2, cb.sp_w, cb.sp_b}, opt).max_rel_err <
          1e-6);
}

TEST_CASE("cbam concat spatial combine matches a concat oracle") {
    Rng rng(27);
    CBAMBlock<double> cb = CBAMBlock<double>::make(4, 2, false, true, false,
                                                   SpatialCombine::Concat);
    cb.sp_w = randt({1, 2, 7, 7}, rng, -0.3, 0.3);
    cb.sp_b = randt({1}, rng);
    Tensor<double> f = randt({1, 4, 6, 6}, rng);
    // oracle: concat avg/max maps then one direct conv
    Tensor<double> avg = ops::channel_mean<double>(nullptr, f);
    Tensor<double> mx = ops::channel_max<double>(nullptr, f);
    Tensor<double> cat2 = ops::concat_channels<double>(nullptr, avg, mx);
    Tensor<double> pre = verify::oracle::conv2d_direct(cat2, cb.sp_w, cb.sp_b, 1, 3);
    Tensor<double> want = ops::sigmoid<double>(nullptr, pre);
    CHECK(max_abs_diff(cb.spatial_weights(nullptr, f), want) < 1e-12);
}
