#include "tra/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "tra/attention.hpp"
#include "tra/gradcheck.hpp"
#include "tra/ops.hpp"
#include "tra/region.hpp"
#include "tra/rng.hpp"
#include "tra/training.hpp"

namespace tra::verify {

// ---- oracles ---------------------------------------------------------------------

namespace oracle {

Tensor<double> conv2d_direct(const Tensor<double>& x, const Tensor<double>& w,
                             const Tensor<double>& b, std::int64_t stride, std::int64_t pad) {
    const std::int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::int64_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::int64_t oh = (h + 2 * pad - kh) / stride + 1;
    const std::int64_t ow = (wd + 2 * pad - kw) / stride + 1;
    Tensor<double> y = Tensor<double>::zeros({n, cout, oh, ow});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t co = 0; co < cout; ++co)
            for (std::int64_t oy = 0; oy < oh; ++oy)
                for (std::int64_t ox = 0; ox < ow; ++ox) {
                    double acc = b.defined() ? b.values()[static_cast<std::size_t>(co)] : 0.0;
                    for (std::int64_t ci = 0; ci < cin; ++ci)
                        for (std::int64_t r = 0; r < kh; ++r)
                            for (std::int64_t s = 0; s < kw; ++s) {
                                const std::int64_t yy = oy * stride + r - pad;
                                const std::int64_t xx = ox * stride + s - pad;
                                if (yy < 0 || yy >= h || xx < 0 || xx >= wd) continue;
                                acc += x.at(i, ci, yy, xx) * w.at(co, ci, r, s);
                            }
                    y.at(i, co, oy, ox) = acc;
                }
    return y;
}

Tensor<double> fully_connected_direct(const Tensor<double>& x, const Tensor<double>& w,
                                      const Tensor<double>& b) {
    const std::int64_t n = x.dim(0), din = x.dim(1), dout = w.dim(0);
    Tensor<double> y = Tensor<double>::zeros({n, dout});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t o = 0; o < dout; ++o) {
            double acc = b.defined() ? b.values()[static_cast<std::size_t>(o)] : 0.0;
            for (std::int64_t k = 0; k < din; ++k) acc += x.at(i, k) * w.at(o, k);
            y.at(i, o) = acc;
        }
    return y;
}

Tensor<double> max_pool2d_direct(const Tensor<double>& x, std::int64_t k, std::int64_t stride) {
    const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::int64_t oh = (h - k) / stride + 1, ow = (w - k) / stride + 1;
    Tensor<double> y = Tensor<double>::zeros({n, c, oh, ow});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t oy = 0; oy < oh; ++oy)
                for (std::int64_t ox = 0; ox < ow; ++ox) {
                    double best = x.at(i, ch, oy * stride, ox * stride);
                    for (std::int64_t r = 0; r < k; ++r)
                        for (std::int64_t s = 0; s < k; ++s)
                            best = std::max(best, x.at(i, ch, oy * stride + r, ox * stride + s));
                    y.at(i, ch, oy, ox) = best;
                }
    return y;
}

Tensor<double> avg_pool2d_direct(const Tensor<double>& x, std::int64_t k, std::int64_t stride) {
    const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::int64_t oh = (h - k) / stride + 1, ow = (w - k) / stride + 1;
    Tensor<double> y = Tensor<double>::zeros({n, c, oh, ow});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t oy = 0; oy < oh; ++oy)
                for (std::int64_t ox = 0; ox < ow; ++ox) {
                    double acc = 0.0;
                    for (std::int64_t r = 0; r < k; ++r)
                        for (std::int64_t s = 0; s < k; ++s)
                            acc += x.at(i, ch, oy * stride + r, ox * stride + s);
                    y.at(i, ch, oy, ox) = acc / static_cast<double>(k * k);
                }
    return y;
}

Tensor<double> global_avg_pool_direct(const Tensor<double>& x) {
    const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<double> y = Tensor<double>::zeros({n, c, 1, 1});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (std::int64_t yy = 0; yy < h; ++yy)
                for (std::int64_t xx = 0; xx < w; ++xx) acc += x.at(i, ch, yy, xx);
            y.at(i, ch, 0, 0) = acc / static_cast<double>(h * w);
        }
    return y;
}

Tensor<double> global_max_pool_direct(const Tensor<double>& x) {
    const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<double> y = Tensor<double>::zeros({n, c, 1, 1});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t ch = 0; ch < c; ++ch) {
            double best = x.at(i, ch, 0, 0);
            for (std::int64_t yy = 0; yy < h; ++yy)
                for (std::int64_t xx = 0; xx < w; ++xx) best = std::max(best, x.at(i, ch, yy, xx));
            y.at(i, ch, 0, 0) = best;
        }
    return y;
}

double bce_mean_direct(const Tensor<double>& logits, const Tensor<double>& labels) {
    long double acc = 0.0L;
    for (std::int64_t i = 0; i < logits.size(); ++i) {
        const long double z = logits.values()[static_cast<std::size_t>(i)];
        const long double y = labels.values()[static_cast<std::size_t>(i)];
        const long double s = 1.0L / (1.0L + std::exp(-z));
        acc += -(y * std::log(s) + (1.0L - y) * std::log(1.0L - s));
    }
    return static_cast<double>(acc / static_cast<long double>(logits.size()));
}

EvalReport f1_and_accuracy_direct(const std::vector<AuLabels>& preds,
                                  const std::vector<AuLabels>& labels) {
    EvalReport rep;
    for (std::size_t a = 0; a < 8; ++a) {
        std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            tp += (preds[i][a] && labels[i][a]) ? 1 : 0;
            fp += (preds[i][a] && !labels[i][a]) ? 1 : 0;
            fn += (!preds[i][a] && labels[i][a]) ? 1 : 0;
            tn += (!preds[i][a] && !labels[i][a]) ? 1 : 0;
        }
        double f1 = 0.0;
        if (tp + fp > 0 && tp + fn > 0) {
            const double prec = static_cast<double>(tp) / static_cast<double>(tp + fp);
            const double rec = static_cast<double>(tp) / static_cast<double>(tp + fn);
            if (prec + rec > 0.0) f1 = 2.0 * prec * rec / (prec + rec);
        }
        rep.f1[a] = 100.0 * f1;
        rep.accuracy[a] =
            100.0 * static_cast<double>(tp + tn) / static_cast<double>(labels.size());
        rep.mean_f1 += rep.f1[a] / 8.0;
        rep.mean_accuracy += rep.accuracy[a] / 8.0;
    }
    return rep;
}

Tensor<double> se_forward_direct(const Tensor<double>& u, const Tensor<double>& w1,
                                 const Tensor<double>& w2, bool residual) {
    const std::int64_t n = u.dim(0), c = u.dim(1), h = u.dim(2), w = u.dim(3);
    const std::int64_t mid = w1.dim(0);
    Tensor<double> out = Tensor<double>::zeros(u.shape());
    for (std::int64_t i = 0; i < n; ++i) {
        std::vector<double> z(static_cast<std::size_t>(c), 0.0);
        for (std::int64_t ch = 0; ch < c; ++ch) {
            for (std::int64_t yy = 0; yy < h; ++yy)
                for (std::int64_t xx = 0; xx < w; ++xx) z[static_cast<std::size_t>(ch)] += u.at(i, ch, yy, xx);
            z[static_cast<std::size_t>(ch)] /= static_cast<double>(h * w);
        }
        std::vector<double> hid(static_cast<std::size_t>(mid), 0.0);
        for (std::int64_t m = 0; m < mid; ++m) {
            for (std::int64_t ch = 0; ch < c; ++ch) hid[static_cast<std::size_t>(m)] += w1.at(m, ch) * z[static_cast<std::size_t>(ch)];
            hid[static_cast<std::size_t>(m)] = std::max(0.0, hid[static_cast<std::size_t>(m)]);
        }
        for (std::int64_t ch = 0; ch < c; ++ch) {
            double s = 0.0;
            for (std::int64_t m = 0; m < mid; ++m) s += w2.at(ch, m) * hid[static_cast<std::size_t>(m)];
            s = 1.0 / (1.0 + std::exp(-s));
            for (std::int64_t yy = 0; yy < h; ++yy)
                for (std::int64_t xx = 0; xx < w; ++xx) {
                    out.at(i, ch, yy, xx) =
                        s * u.at(i, ch, yy, xx) + (residual ? u.at(i, ch, yy, xx) : 0.0);
                }
        }
    }
    return out;
}

} // namespace oracle

// ---- helpers ----------------------------------------------------------------------

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                             bool needs_grad = true) {
    Tensor<double> t = Tensor<double>::zeros(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    t.set_requires_grad(needs_grad);
    return t;
}

// Values bounded away from zero, for kink-free relu probing.
Tensor<double> random_tensor_away_from_zero(Shape shape, Rng& rng) {
    Tensor<double> t = Tensor<double>::zeros(std::move(shape));
    for (auto& v : t.values()) {
        const double mag = rng.uniform(0.1, 1.0);
        v = rng.bernoulli(0.5) ? mag : -mag;
    }
    t.set_requires_grad(true);
    return t;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
    double worst = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a.values()[static_cast<std::size_t>(i)] -
                                         b.values()[static_cast<std::size_t>(i)]));
    }
    return worst;
}

bool bitwise_equal(const Tensor<double>& a, const Tensor<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

// loss = sum(y ⊙ y): quadratic scalarization so the upstream gradient that
// reaches the op under test is non-constant.
Tensor<double> squared_sum(Graph<double>* g, const Tensor<double>& y) {
    return ops::reduce_sum(g, ops::elementwise_mul(g, y, y));
}

CheckResult grad_block(const std::string& name,
                       const std::function<Tensor<double>(Graph<double>*)>& make_loss,
                       std::vector<Tensor<double>> params, int probes, double tol,
                       std::uint64_t seed) {
    CheckResult res;
    res.name = name;
    try {
        GradCheckOptions opt;
        opt.total_probes = probes;
        opt.seed = seed;
        const GradCheckReport rep = finite_diff_check(make_loss, params, opt);
        res.worst = rep.max_rel_err;
        res.pass = rep.max_rel_err < tol;
        res.detail = cat("probes=", rep.probes, " worst=", rep.max_rel_err, " at ",
                         rep.worst_location, " tol=", tol);
    } catch (const Error& e) {
        res.pass = false;
        res.detail = e.what();
    }
    return res;
}

using Clock = std::chrono::steady_clock;

} // namespace

void jitter_model_biases(Model<double>& model, std::uint64_t seed, double lo, double hi) {
    for (const auto& [name, t] : model.named_parameters()) {
        if (t.rank() != 1) continue;
        Tensor<double> handle = t;
        Rng rng = Rng::stream(seed, cat("jitter.", name));
        for (auto& v : handle.values()) {
            const double mag = rng.uniform(lo, hi);
            v = rng.bernoulli(0.5) ? mag : -mag;
        }
    }
}

// ---- grad suite -----------------------------------------------------------------------

SuiteResult grad_suite(int probes_per_block, int e2e_probes, std::uint64_t seed) {
    const auto t0 = Clock::now();
    SuiteResult suite;
    suite.suite = "grad";
    const double tol = 1e-6;
    Rng rng(Rng::mix(seed, "gradsuite"));

    {
        Tensor<double> x = random_tensor({2, 3, 6, 6}, rng);
        Tensor<double> w = random_tensor({4, 3, 3, 3}, rng);
        Tensor<double> b = random_tensor({4}, rng);
        suite.checks.push_back(grad_block(
            "conv2d(pad=1)",
            [=](Graph<double>* g) { return squared_sum(g, ops::conv2d(g, x, w, b, 1, 1)); },
            {x, w, b}, probes_per_block, tol, seed));
    }
    {
        Tensor<double> x = random_tensor({1, 2, 7, 7}, rng);
        Tensor<double> w = random_tensor({3, 2, 3, 3}, rng);
        Tensor<double> b = random_tensor({3}, rng);
        suite.checks.push_back(grad_block(
            "conv2d(stride=2)",
            [=](Graph<double>* g) { return squared_sum(g, ops::conv2d(g, x, w, b, 2, 0)); },
            {x, w, b}, probes_per_block, tol, seed));
    }
    {
        Tensor<double> x = random_tensor({3, 5}, rng);
        Tensor<double> w = random_tensor({4, 5}, rng);
        Tensor<double> b = random_tensor({4}, rng);
        suite.checks.push_back(grad_block(
            "fully_connected",
            [=](Graph<double>* g) { return squared_sum(g, ops::fully_connected(g, x, w, b)); },
            {x, w, b}, probes_per_block, tol, seed));
    }
    {
        Tensor<double> x = random_tensor_away_from_zero({2, 3, 4, 4}, rng);
        suite.checks.push_back(grad_block(
            "relu", [=](Graph<double>* g) { return squared_sum(g, ops::relu(g, x)); }, {x},
            probes_per_block, tol, seed));
    }
    {
        Tensor<double> x = random_tensor({2, 3, 4, 4}, rng, -3.0, 3.0);
        suite.checks.push_back(grad_block(
            "sigmoid", [=](Graph<double>* g) { return squared_sum(g, ops::sigmoid(g, x)); }, {x},
            probes_per_block, tol, seed));
    }
    {
        Tensor<double> a = random_tensor({2, 2, 3, 3}, rng);
        Tensor<double> b = random_tensor({2, 2, 3, 3}, rng);
        suite.checks.push_back(grad_block(
            "elementwise mul+add",
            [=](Graph<double>* g) {
                return squared_sum(
                    g, ops::elementwise_add(g, ops::elementwise_mul(g, a, b), a));
            },
            {a, b}, probes_per_block, tol, seed));
    }
    {
        Tensor<double> a = random_tensor({2, 4, 3, 3}, rng);
        Tensor<double> s = random_tensor({2, 4, 1, 1}, rng);
        Tensor<double> m = random_tensor({2, 1, 3, 3}, rng);
        suite.checks.push_back(grad_block(
            "broadcast mul (channel+spatial)",
            [=](Graph<double>* g) {
                return squared_sum(
                    g, ops::elementwise_mul(g, ops::elementwise_mul(g, a, s), m));
            },
            {a, s, m}, probes_per_block, tol, seed));
    }
    {
        Tensor<double> x = random_tensor({1, 2, 6, 6}, rng);
        suite.checks.push_back(grad_block(
            "max_pool2d", [=](Graph<double>* g) { return squared_sum(g, ops::max_pool2d(g, x, 2, 2)); },
            {x}, probes_per_block, tol, seed));
        suite.checks.push_back(grad_block(
            "avg_pool2d", [=](Graph<double>* g) { return squared_sum(g, ops::avg_pool2d(g, x, 2, 2)); },
            {x}, probes_per_block, tol, seed));
        suite.checks.push_back(grad_block(
            "global_avg_pool",
            [=](Graph<double>* g) { return squared_sum(g, ops::global_avg_pool(g, x)); }, {x},
            probes_per_block, tol, seed));
        suite.checks.push_back(grad_block(
            "global_max_pool",
            [=](Graph<double>* g) { return squared_sum(g, ops::global_max_pool(g, x)); }, {x},
            probes_per_block, tol, seed));
        suite.checks.push_back(grad_block(
            "upsample2x_nearest",
            [=](Graph<double>* g) { return squared_sum(g, ops::upsample2x_nearest(g, x)); }, {x},
            probes_per_block, tol, seed));
    }
    {
        Tensor<double> x = random_tensor({1, 3, 8, 6}, rng);
        suite.checks.push_back(grad_block(
            "keep_row_bands",
            [=](Graph<double>* g) { return squared_sum(g, ops::keep_row_bands(g, x, {2}, {6})); },
            {x}, probes_per_block, tol, seed));
    }
    {
        SEBlock<double> se = SEBlock<double>::make(4, 2, false);
        Rng wrng(Rng::mix(seed, "se"));
        se.w1 = random_tensor({2, 4}, wrng);
        se.w2 = random_tensor({4, 2}, wrng);
        Tensor<double> u = random_tensor({1, 4, 5, 5}, wrng);
        suite.checks.push_back(grad_block(
            "se block (no residual)",
            [=](Graph<double>* g) { return squared_sum(g, se.forward(g, u)); }, {u, se.w1, se.w2},
            probes_per_block, tol, seed));
        SEBlock<double> ser = se;
        ser.residual = true;
        suite.checks.push_back(grad_block(
            "se block (residual)",
            [=](Graph<double>* g) { return squared_sum(g, ser.forward(g, u)); },
            {u, ser.w1, ser.w2}, probes_per_block, tol, seed));
    }
    {
        CBAMBlock<double> cb = CBAMBlock<double>::make(4, 2, true, true, false);
        Rng wrng(Rng::mix(seed, "cbam"));
        cb.ch_w1 = random_tensor({2, 4}, wrng);
        cb.ch_w2 = random_tensor({4, 2}, wrng);
        cb.sp_w = random_tensor({1, 1, 7, 7}, wrng, -0.2, 0.2);
        cb.sp_b = random_tensor({1}, wrng);
        Tensor<double> f = random_tensor({1, 4, 5, 5}, wrng);
        suite.checks.push_back(grad_block(
            "cbam channel weights",
            [=](Graph<double>* g) { return squared_sum(g, cb.channel_weights(g, f)); },
            {f, cb.ch_w1, cb.ch_w2}, probes_per_block, tol, seed));
        suite.checks.push_back(grad_block(
            "cbam spatial weights",
            [=](Graph<double>* g) { return squared_sum(g, cb.spatial_weights(g, f)); },
            {f, cb.sp_w, cb.sp_b}, probes_per_block, tol, seed));
        suite.checks.push_back(grad_block(
            "cbam forward (no residual)",
            [=](Graph<double>* g) { return squared_sum(g, cb.forward(g, f)); },
            {f, cb.ch_w1, cb.ch_w2, cb.sp_w, cb.sp_b}, probes_per_block, tol, seed));
        CBAMBlock<double> cbc = CBAMBlock<double>::make(4, 2, true, true, true,
                                                        SpatialCombine::Concat);
        cbc.ch_w1 = cb.ch_w1;
        cbc.ch_w2 = cb.ch_w2;
        cbc.sp_w = random_tensor({1, 2, 7, 7}, wrng, -0.2, 0.2);
        cbc.sp_b = cb.sp_b;
        suite.checks.push_back(grad_block(
            "cbam forward (concat, residual)",
            [=](Graph<double>* g) { return squared_sum(g, cbc.forward(g, f)); },
            {f, cbc.ch_w1, cbc.ch_w2, cbc.sp_w, cbc.sp_b}, probes_per_block, tol, seed));
    }
    {
        Tensor<double> z = random_tensor({4, 3}, rng, -3.0, 3.0);
        Tensor<double> y = Tensor<double>::zeros({4, 3});
        Rng lrng(Rng::mix(seed, "bce"));
        for (auto& v : y.values()) v = lrng.bernoulli(0.5) ? 1.0 : 0.0;
        suite.checks.push_back(grad_block(
            "bce_with_logits",
            [=](Graph<double>* g) { return ops::bce_with_logits_mean(g, z, y); }, {z},
            probes_per_block, tol, seed));
    }

    // Full toy network end to end, tolerance 1e-4. Zero-init closing convs
    // would leave upstream paths with vacuous zero gradients, so the check
    // builds with live residual branches.
    {
        ModelConfig cfg = toy_model_config();
        cfg.residual_zero_init = false;
        Model<double> model = Model<double>::build(cfg, Rng::mix(seed, "e2e.model"));
        jitter_model_biases(model, Rng::mix(seed, "e2e.bias"));
        Rng drng(Rng::mix(seed, "e2e.data"));
        Tensor<double> batch = random_tensor({2, 3, 64, 64}, drng, 0.0, 1.0, false);
        std::vector<AuLabels> labels(2);
        for (auto& l : labels)
            for (auto& v : l) v = drng.bernoulli(0.5) ? 1 : 0;
        const std::vector<std::int64_t> rows{4, 5};
        const AUGrouping groups = cfg.groups;
        auto make_loss = [=, &model](Graph<double>* g) {
            const ForwardTrace<double> trace = model.forward(g, batch, rows);
            return multilabel_bce(g, trace, labels, groups);
        };
        suite.checks.push_back(grad_block("full toy network (tol 1e-4)", make_loss,
                                          model.parameters(), e2e_probes, 1e-4, seed));
    }

    suite.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return suite;
}

// ---- invariants suite -------------------------------------------------------------------

namespace {

Tensor<double> permute_spatial_per_channel(const Tensor<double>& x, Rng& rng) {
    const std::int64_t planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor<double> y = x.clone_values();
    for (std::int64_t p = 0; p < planes; ++p) {
        std::vector<std::int64_t> perm(static_cast<std::size_t>(hw));
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm.begin(), perm.end());
        for (std::int64_t i = 0; i < hw; ++i) {
            y.data()[p * hw + i] = x.data()[p * hw + perm[static_cast<std::size_t>(i)]];
        }
    }
    return y;
}

Tensor<double> permute_channels(const Tensor<double>& x, Rng& rng) {
    const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    std::vector<std::int64_t> perm(static_cast<std::size_t>(c));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    Tensor<double> y = x.clone_values();
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t ch = 0; ch < c; ++ch)
            std::copy_n(x.data() + (i * c + perm[static_cast<std::size_t>(ch)]) * hw, hw,
                        y.data() + (i * c + ch) * hw);
    return y;
}

CheckResult simple_check(const std::string& name, bool pass, double worst,
                         const std::string& detail = "") {
    return CheckResult{name, pass, worst, detail};
}

} // namespace

SuiteResult invariants_suite(std::uint64_t seed) {
    const auto t0 = Clock::now();
    SuiteResult suite;
    suite.suite = "invariants";
    Rng rng(Rng::mix(seed, "invariants"));

    // Pooling is invariant under per-channel spatial permutation (Eq. 1 sums
    // over positions): max is exact, avg up to summation-order rounding.
    {
        double worst = 0.0;
        bool max_exact = true;
        for (int it = 0; it < 20; ++it) {
            Tensor<double> x = random_tensor({2, 3, 5, 7}, rng, -2.0, 2.0, false);
            Tensor<double> xp = permute_spatial_per_channel(x, rng);
            worst = std::max(worst, max_abs_diff(ops::global_avg_pool<double>(nullptr, x),
                                                 ops::global_avg_pool<double>(nullptr, xp)));
            max_exact = max_exact && bitwise_equal(ops::global_max_pool<double>(nullptr, x),
                                                   ops::global_max_pool<double>(nullptr, xp));
        }
        suite.checks.push_back(simple_check("pool spatial-permutation invariance",
                                            worst < 1e-12 && max_exact, worst,
                                            "avg tol 1e-12, max bit-exact"));
    }

    // relu idempotence and sigmoid range.
    {
        Tensor<double> x = random_tensor({2, 3, 6, 6}, rng, -3.0, 3.0, false);
        Tensor<double> r1 = ops::relu<double>(nullptr, x);
        Tensor<double> r2 = ops::relu<double>(nullptr, r1);
        Tensor<double> s = ops::sigmoid<double>(nullptr, x);
        bool range_ok = true;
        for (double v : s.values()) range_ok = range_ok && v > 0.0 && v < 1.0;
        suite.checks.push_back(simple_check("relu idempotent, sigmoid in (0,1)",
                                            bitwise_equal(r1, r2) && range_ok, 0.0));
    }

    // Mask algebra, exhaustive over every valid (h <= 32, center row).
    {
        bool ok = true;
        std::string detail;
        int cases = 0;
        for (std::int64_t h = 4; h <= 32 && ok; h += 4) {
            const std::int64_t w = 6;
            for (std::int64_t y = 1; y < h && ok; ++y) {
                const HardMaskSet ms = make_hard_masks(h, w, y);
                ++cases;
                for (const HardMask* m : {&ms.upper, &ms.middle, &ms.lower}) {
                    for (auto v : m->grid) ok = ok && (v == 0 || v == 1);
                    // band contiguity: rows all-0 or all-1, 1-rows contiguous
                    std::int64_t first = -1, last = -1;
                    for (std::int64_t r = 0; r < h; ++r) {
                        const std::uint8_t v0 = m->grid[static_cast<std::size_t>(r * w)];
                        for (std::int64_t c = 0; c < w; ++c)
                            ok = ok && m->grid[static_cast<std::size_t>(r * w + c)] == v0;
                        if (v0) {
                            if (first < 0) first = r;
                            last = r;
                        }
                    }
                    if (first >= 0) {
                        for (std::int64_t r = first; r <= last; ++r)
                            ok = ok && m->grid[static_cast<std::size_t>(r * w)] == 1;
                    }
                }
                // upper/lower partition
                for (std::int64_t r = 0; r < h; ++r) {
                    const int u = ms.upper.grid[static_cast<std::size_t>(r * w)];
                    const int l = ms.lower.grid[static_cast<std::size_t>(r * w)];
                    ok = ok && (u + l == 1);
                }
                // middle band width h/2 when unclipped
                const std::int64_t expect_lo = std::max<std::int64_t>(0, y - h / 4);
                const std::int64_t expect_hi = std::min<std::int64_t>(h, y + h / 4);
                ok = ok && ms.middle.band_begin == expect_lo && ms.middle.band_end == expect_hi;
                if (y - h / 4 >= 0 && y + h / 4 <= h) {
                    ok = ok && (ms.middle.band_end - ms.middle.band_begin == h / 2);
                }
                // Eq.4 idempotence and linearity, bit-exact
                Tensor<double> a = random_tensor({1, 2, h, w}, rng, -2.0, 2.0, false);
                Tensor<double> b = random_tensor({1, 2, h, w}, rng, -2.0, 2.0, false);
                for (const HardMask* m : {&ms.upper, &ms.middle, &ms.lower}) {
                    Tensor<double> ma = apply_hard_mask(*m, a);
                    ok = ok && bitwise_equal(apply_hard_mask(*m, ma), ma);
                    Tensor<double> sum = ops::elementwise_add<double>(nullptr, a, b);
                    Tensor<double> lhs = apply_hard_mask(*m, sum);
                    Tensor<double> rhs = ops::elementwise_add<double>(
                        nullptr, ma, apply_hard_mask(*m, b));
                    ok = ok && bitwise_equal(lhs, rhs);
                }
                if (!ok) detail = cat("failed at h=", h, " y=", y);
            }
        }
        suite.checks.push_back(simple_check("mask algebra (exhaustive h<=32)", ok, 0.0,
                                            ok ? cat(cases, " (h,y) cases") : detail));
    }

    // Attention: zero input gives zero output without residual; the residual
    // toggle changes the output by exactly the input.
    {
        Rng wrng(Rng::mix(seed, "attw"));
        SEBlock<double> se = SEBlock<double>::make(4, 2, false);
        se.w1 = random_tensor({2, 4}, wrng);
        se.w2 = random_tensor({4, 2}, wrng);
        CBAMBlock<double> cb = CBAMBlock<double>::make(4, 2, true, true, false);
        cb.ch_w1 = random_tensor({2, 4}, wrng);
        cb.ch_w2 = random_tensor({4, 2}, wrng);
        cb.sp_w = random_tensor({1, 1, 7, 7}, wrng, -0.3, 0.3);
        cb.sp_b = random_tensor({1}, wrng);

        Tensor<double> zero = Tensor<double>::zeros({2, 4, 5, 5});
        bool zero_ok = true;
        const Tensor<double> se_zero = se.forward(nullptr, zero);
        const Tensor<double> cb_zero = cb.forward(nullptr, zero);
        for (double v : se_zero.values()) zero_ok = zero_ok && v == 0.0;
        for (double v : cb_zero.values()) zero_ok = zero_ok && v == 0.0;
        suite.checks.push_back(simple_check("zero input => zero output (no residual)", zero_ok, 0.0));

        Tensor<double> f = random_tensor({2, 4, 5, 5}, wrng, -1.0, 1.0, false);
        SEBlock<double> ser = se;
        ser.residual = true;
        CBAMBlock<double> cbr = cb;
        cbr.residual = true;
        const bool se_delta = bitwise_equal(
            ser.forward(nullptr, f),
            ops::elementwise_add<double>(nullptr, se.forward(nullptr, f), f));
        const bool cb_delta = bitwise_equal(
            cbr.forward(nullptr, f),
            ops::elementwise_add<double>(nullptr, cb.forward(nullptr, f), f));
        suite.checks.push_back(
            simple_check("residual toggle differs by exactly the input", se_delta && cb_delta, 0.0));

        // channel weights under spatial permutation; spatial weights under
        // channel permutation
        double worst = 0.0;
        for (int it = 0; it < 10; ++it) {
            Tensor<double> g = random_tensor({1, 4, 5, 5}, wrng, -1.0, 1.0, false);
            Tensor<double> gp = permute_spatial_per_channel(g, wrng);
            worst = std::max(worst, max_abs_diff(cb.channel_weights(nullptr, g),
                                                 cb.channel_weights(nullptr, gp)));
            Tensor<double> gc = permute_channels(g, wrng);
            worst = std::max(worst, max_abs_diff(cb.spatial_weights(nullptr, g),
                                                 cb.spatial_weights(nullptr, gc)));
            worst = std::max(worst, max_abs_diff(se.excitation(nullptr, g),
                                                 se.excitation(nullptr, gp)));
        }
        suite.checks.push_back(
            simple_check("attention weights permutation-invariant", worst < 1e-12, worst,
                         "channel w/ spatial perm, spatial w/ channel perm"));

        // |output| <= |input| elementwise when no residual (weights < 1)
        bool contract = true;
        Tensor<double> out = cb.forward(nullptr, f);
        for (std::int64_t i = 0; i < f.size(); ++i) {
            contract = contract && std::abs(out.values()[static_cast<std::size_t>(i)]) <=
                                       std::abs(f.values()[static_cast<std::size_t>(i)]);
        }
        suite.checks.push_back(simple_check("|cbam(f)| <= |f| without residual", contract, 0.0));
    }

    // Broadcasting beyond size-1 channel/spatial expansion is rejected.
    {
        bool rejected = false;
        try {
            Tensor<double> a = Tensor<double>::zeros({2, 3, 4, 4});
            Tensor<double> b = Tensor<double>::zeros({2, 4, 4, 3});
            ops::elementwise_add<double>(nullptr, a, b);
        } catch (const ShapeError&) {
            rejected = true;
        }
        bool rejected2 = false;
        try {
            Tensor<double> a = Tensor<double>::zeros({2, 3, 4, 4});
            Tensor<double> b = Tensor<double>::zeros({1, 3, 4, 4});
            ops::elementwise_mul<double>(nullptr, a, b);
        } catch (const ShapeError&) {
            rejected2 = true;
        }
        suite.checks.push_back(
            simple_check("general broadcasting rejected", rejected && rejected2, 0.0));
    }

    // Deterministic builds and forwards.
    {
        const ModelConfig cfg = toy_model_config();
        Model<double> m1 = Model<double>::build(cfg, 11);
        Model<double> m2 = Model<double>::build(cfg, 11);
        bool same_params = m1.parameter_count() == m2.parameter_count();
        const auto& p1 = m1.named_parameters();
        const auto& p2 = m2.named_parameters();
        for (std::size_t i = 0; same_params && i < p1.size(); ++i) {
            same_params = p1[i].first == p2[i].first && bitwise_equal(p1[i].second, p2[i].second);
        }
        Rng drng(Rng::mix(seed, "det"));
        Tensor<double> batch = random_tensor({2, 3, 64, 64}, drng, 0.0, 1.0, false);
        const std::vector<std::int64_t> rows{4, 5};
        const auto tr1 = m1.forward(nullptr, batch, rows);
        const auto tr2 = m1.forward(nullptr, batch, rows);
        const bool same_fwd = bitwise_equal(tr1.upper_logits, tr2.upper_logits) &&
                              bitwise_equal(tr1.middle_logits, tr2.middle_logits) &&
                              bitwise_equal(tr1.lower_logits, tr2.lower_logits);
        suite.checks.push_back(
            simple_check("deterministic build and forward", same_params && same_fwd, 0.0));
    }

    // Sampler: empirical draw frequencies against closed-form p_f (grouped by
    // label pattern), and rare-AU enrichment.
    {
        // Label distribution mirrors the synthetic generator's streams.
        SynthSpec spec;
        std::vector<AuLabels> labels;
        for (int subj = 0; subj < 6; ++subj) {
            for (int frame = 0; frame < 150; ++frame) {
                Rng lr = Rng::stream(spec.seed, "labels",
                                     static_cast<std::uint64_t>(subj) * 1000003u +
                                         static_cast<std::uint64_t>(frame));
                AuLabels lab{};
                for (int a = 0; a < 8; ++a)
                    lab[static_cast<std::size_t>(a)] =
                        lr.bernoulli(spec.activation_prob[static_cast<std::size_t>(a)]) ? 1 : 0;
                labels.push_back(lab);
            }
        }
        const SamplerState st = build_sampler(labels, 3);
        double psum = 0.0;
        for (double p : st.prob) psum += p;
        bool ok = std::abs(psum - 1.0) < 1e-12;

        const std::int64_t draws = 1000000;
        Rng drng(Rng::mix(seed, "sampler.mc"));
        std::map<AuLabels, double> class_prob;
        std::map<AuLabels, std::int64_t> class_count;
        for (std::size_t f = 0; f < labels.size(); ++f) class_prob[labels[f]] += st.prob[f];
        for (std::int64_t d = 0; d < draws; ++d) {
            ++class_count[labels[static_cast<std::size_t>(sampler_draw(st, drng))]];
        }
        double worst_sigma = 0.0;
        for (const auto& [pattern, p] : class_prob) {
            const double expect = p * static_cast<double>(draws);
            const double sd = std::sqrt(p * (1.0 - p) * static_cast<double>(draws));
            const double got = static_cast<double>(class_count[pattern]);
            if (sd > 0.0) worst_sigma = std::max(worst_sigma, std::abs(got - expect) / sd);
        }
        ok = ok && worst_sigma < 3.0;

        const auto expected = sampler_expected_rates(st, labels);
        std::array<double, 8> base{};
        for (const auto& lab : labels) {
            for (std::size_t a = 0; a < 8; ++a) base[a] += lab[a] / static_cast<double>(labels.size());
        }
        double mean_base = 0.0;
        for (double b : base) mean_base += b / 8.0;
        bool enriched = true;
        for (std::size_t a = 0; a < 8; ++a) {
            if (base[a] < mean_base) enriched = enriched && expected[a] > base[a];
        }
        suite.checks.push_back(simple_check("sampler MC within 3 sigma + rare-AU enrichment",
                                            ok && enriched, worst_sigma,
                                            cat("worst |z|=", worst_sigma, " over ",
                                                class_prob.size(), " label classes")));
    }

    suite.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return suite;
}

// ---- oracle suite ------------------------------------------------------------------------

SuiteResult oracles_suite(int instances, std::uint64_t seed) {
    const auto t0 = Clock::now();
    SuiteResult suite;
    suite.suite = "oracles";
    Rng rng(Rng::mix(seed, "oracles"));
    const double tol = 1e-12;

    {
        double worst = 0.0;
        for (int it = 0; it < instances; ++it) {
            const std::int64_t n = 1 + rng.uniform_int(2), cin = 1 + rng.uniform_int(3);
            const std::int64_t cout = 1 + rng.uniform_int(4), k = 1 + rng.uniform_int(3);
            const std::int64_t stride = 1 + rng.uniform_int(2), pad = rng.uniform_int(2);
            std::int64_t h = k + rng.uniform_int(6), w = k + rng.uniform_int(6);
            h += (h + 2 * pad - k) % stride;
            w += (w + 2 * pad - k) % stride;
            Tensor<double> x = random_tensor({n, cin, h, w}, rng, -1, 1, false);
            Tensor<double> wt = random_tensor({cout, cin, k, k}, rng, -1, 1, false);
            Tensor<double> b = random_tensor({cout}, rng, -1, 1, false);
            worst = std::max(worst,
                             max_abs_diff(ops::conv2d<double>(nullptr, x, wt, b, stride, pad),
                                          oracle::conv2d_direct(x, wt, b, stride, pad)));
        }
        suite.checks.push_back(simple_check("conv2d vs direct six-loop oracle", worst < tol, worst,
                                            cat(instances, " random instances")));
    }
    {
        double worst = 0.0;
        for (int it = 0; it < instances; ++it) {
            const std::int64_t n = 1 + rng.uniform_int(6), din = 1 + rng.uniform_int(9),
                               dout = 1 + rng.uniform_int(7);
            Tensor<double> x = random_tensor({n, din}, rng, -1, 1, false);
            Tensor<double> w = random_tensor({dout, din}, rng, -1, 1, false);
            Tensor<double> b = random_tensor({dout}, rng, -1, 1, false);
            worst = std::max(worst, max_abs_diff(ops::fully_connected<double>(nullptr, x, w, b),
                                                 oracle::fully_connected_direct(x, w, b)));
        }
        suite.checks.push_back(simple_check("fully_connected vs dot-product oracle", worst < tol,
                                            worst, cat(instances, " random instances")));
    }
    {
        double worst = 0.0;
        for (int it = 0; it < instances; ++it) {
            const std::int64_t k = 1 + rng.uniform_int(3), stride = 1 + rng.uniform_int(2);
            std::int64_t h = k + rng.uniform_int(7), w = k + rng.uniform_int(7);
            h += (h - k) % stride;
            w += (w - k) % stride;
            Tensor<double> x = random_tensor({1 + rng.uniform_int(2), 1 + rng.uniform_int(3), h, w},
                                             rng, -1, 1, false);
            worst = std::max(worst, max_abs_diff(ops::max_pool2d<double>(nullptr, x, k, stride),
                                                 oracle::max_pool2d_direct(x, k, stride)));
            worst = std::max(worst, max_abs_diff(ops::avg_pool2d<double>(nullptr, x, k, stride),
                                                 oracle::avg_pool2d_direct(x, k, stride)));
            worst = std::max(worst, max_abs_diff(ops::global_avg_pool<double>(nullptr, x),
                                                 oracle::global_avg_pool_direct(x)));
            worst = std::max(worst, max_abs_diff(ops::global_max_pool<double>(nullptr, x),
                                                 oracle::global_max_pool_direct(x)));
        }
        suite.checks.push_back(simple_check("pooling vs sliding-window oracle", worst < tol, worst,
                                            cat(instances, " random instances")));
    }
    {
        double worst = 0.0;
        for (int it = 0; it < instances; ++it) {
            const std::int64_t n = 1 + rng.uniform_int(8), d = 1 + rng.uniform_int(8);
            Tensor<double> z = random_tensor({n, d}, rng, -10.0, 10.0, false);
            Tensor<double> y = Tensor<double>::zeros({n, d});
            for (auto& v : y.values()) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
            const double impl = ops::bce_with_logits_mean<double>(nullptr, z, y).item();
            worst = std::max(worst, std::abs(impl - oracle::bce_mean_direct(z, y)));
        }
        suite.checks.push_back(simple_check("bce vs high-precision direct formula", worst < tol,
                                            worst, cat(instances, " random instances")));
    }
    {
        double worst = 0.0;
        bool exact = true;
        for (int it = 0; it < instances; ++it) {
            const std::size_t n = 50 + static_cast<std::size_t>(rng.uniform_int(950));
            std::vector<AuLabels> preds(n), labels(n);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t a = 0; a < 8; ++a) {
                    preds[i][a] = rng.bernoulli(0.3) ? 1 : 0;
                    labels[i][a] = rng.bernoulli(0.3) ? 1 : 0;
                }
            }
            const EvalReport impl = f1_and_accuracy(preds, labels);
            const EvalReport want = oracle::f1_and_accuracy_direct(preds, labels);
            for (std::size_t a = 0; a < 8; ++a) {
                exact = exact && impl.f1[a] == want.f1[a] && impl.accuracy[a] == want.accuracy[a];
                worst = std::max({worst, std::abs(impl.f1[a] - want.f1[a]),
                                  std::abs(impl.accuracy[a] - want.accuracy[a])});
            }
        }
        suite.checks.push_back(simple_check("f1/accuracy vs confusion-count oracle (exact)", exact,
                                            worst, cat(instances, " random instances")));
    }
    {
        double worst = 0.0;
        for (int it = 0; it < instances; ++it) {
            Tensor<double> a = random_tensor({2, 2, 2, 2}, rng, -1, 1, false);
            Tensor<double> b = random_tensor({2, 2, 2, 2}, rng, -1, 1, false);
            Tensor<double> got = ops::elementwise_add<double>(
                nullptr, ops::elementwise_mul<double>(nullptr, a, b), a);
            for (std::int64_t i = 0; i < got.size(); ++i) {
                const double want = a.values()[static_cast<std::size_t>(i)] *
                                        b.values()[static_cast<std::size_t>(i)] +
                                    a.values()[static_cast<std::size_t>(i)];
                worst = std::max(worst, std::abs(got.values()[static_cast<std::size_t>(i)] - want));
            }
        }
        suite.checks.push_back(
            simple_check("mul/add chain vs scalar oracle", worst < 1e-15, worst, "tol 1e-15"));
    }
    {
        double worst = 0.0;
        for (int it = 0; it < std::max(1, instances / 10); ++it) {
            Rng wrng(Rng::mix(seed, "seoracle", static_cast<std::uint64_t>(it)));
            Tensor<double> u = random_tensor({2, 4, 3, 5}, wrng, -1, 1, false);
            Tensor<double> w1 = random_tensor({2, 4}, wrng, -1, 1, false);
            Tensor<double> w2 = random_tensor({4, 2}, wrng, -1, 1, false);
            for (bool residual : {false, true}) {
                SEBlock<double> se = SEBlock<double>::make(4, 2, residual);
                se.w1 = w1;
                se.w2 = w2;
                worst = std::max(worst, max_abs_diff(se.forward(nullptr, u),
                                                     oracle::se_forward_direct(u, w1, w2, residual)));
            }
        }
        suite.checks.push_back(
            simple_check("se block vs hand-unrolled oracle", worst < tol, worst, ""));
    }

    suite.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return suite;
}

// ---- linear probe ---------------------------------------------------------------------------

ProbeResult linear_probe(const Dataset& ds, int binarize_threshold, double holdout_fraction,
                         std::uint64_t seed) {
    require<DataError>(!ds.samples.empty(), "linear_probe: empty dataset");
    const std::int64_t s = ds.image_size;

    std::vector<std::string> subjects = distinct_subjects(ds);
    Rng rng = Rng::stream(seed, "probe.split");
    rng.shuffle(subjects.begin(), subjects.end());
    const std::size_t holdout =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(
                                     static_cast<double>(subjects.size()) * holdout_fraction)));
    std::set<std::string> test_subjects(subjects.end() - static_cast<std::ptrdiff_t>(holdout),
                                        subjects.end());

    ProbeResult res;
    res.min_f1 = 100.0;
    const std::int64_t block = 4;

    for (int a = 0; a < 8; ++a) {
        const FaceRegion region = a < 3 ? FaceRegion::Upper : (a < 5 ? FaceRegion::Middle : FaceRegion::Lower);
        const auto band = region_band(region, s, s / 2);
        const std::int64_t rows = (band[1] - band[0]) / block, cols = s / block;
        const std::int64_t dim = rows * cols;

        const auto features = [&](const LabeledSample& smp) {
            std::vector<double> f(static_cast<std::size_t>(dim), 0.0);
            for (std::int64_t by = 0; by < rows; ++by)
                for (std::int64_t bx = 0; bx < cols; ++bx) {
                    double acc = 0.0;
                    for (std::int64_t dy = 0; dy < block; ++dy)
                        for (std::int64_t dx = 0; dx < block; ++dx) {
                            const std::int64_t y = band[0] + by * block + dy;
                            const std::int64_t x = bx * block + dx;
                            acc += smp.image[static_cast<std::size_t>(y * s + x)];
                        }
                    f[static_cast<std::size_t>(by * cols + bx)] =
                        acc / static_cast<double>(block * block);
                }
            return f;
        };

        std::vector<std::vector<double>> xs_train, xs_test;
        std::vector<int> y_train, y_test;
        for (const auto& smp : ds.samples) {
            const int label = binarize(smp.intensities, binarize_threshold)[static_cast<std::size_t>(a)];
            if (test_subjects.count(smp.subject)) {
                xs_test.push_back(features(smp));
                y_test.push_back(label);
            } else {
                xs_train.push_back(features(smp));
                y_train.push_back(label);
            }
        }

        // full-batch logistic regression, plain gradient descent
        std::vector<double> wgt(static_cast<std::size_t>(dim) + 1, 0.0);
        const double lr = 4.0;
        for (int iter = 0; iter < 1200; ++iter) {
            std::vector<double> grad(wgt.size(), 0.0);
            for (std::size_t i = 0; i < xs_train.size(); ++i) {
                double z = wgt.back();
                for (std::int64_t j = 0; j < dim; ++j) z += wgt[static_cast<std::size_t>(j)] * xs_train[i][static_cast<std::size_t>(j)];
                const double p = 1.0 / (1.0 + std::exp(-z));
                const double d = (p - static_cast<double>(y_train[i])) / static_cast<double>(xs_train.size());
                for (std::int64_t j = 0; j < dim; ++j) grad[static_cast<std::size_t>(j)] += d * xs_train[i][static_cast<std::size_t>(j)];
                grad.back() += d;
            }
            for (std::size_t j = 0; j < wgt.size(); ++j) wgt[j] -= lr * grad[j];
        }

        std::int64_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < xs_test.size(); ++i) {
            double z = wgt.back();
            for (std::int64_t j = 0; j < dim; ++j) z += wgt[static_cast<std::size_t>(j)] * xs_test[i][static_cast<std::size_t>(j)];
            const int pred = z > 0.0 ? 1 : 0;
            tp += (pred && y_test[i]) ? 1 : 0;
            fp += (pred && !y_test[i]) ? 1 : 0;
            fn += (!pred && y_test[i]) ? 1 : 0;
        }
        double f1 = 0.0;
        if (tp + fp > 0 && tp + fn > 0) {
            const double prec = static_cast<double>(tp) / static_cast<double>(tp + fp);
            const double rec = static_cast<double>(tp) / static_cast<double>(tp + fn);
            if (prec + rec > 0) f1 = 200.0 * prec * rec / (prec + rec);
        }
        res.f1[static_cast<std::size_t>(a)] = f1;
        res.min_f1 = std::min(res.min_f1, f1);
    }
    return res;
}

std::string format_suite(const SuiteResult& result) {
    std::string out = cat("suite '", result.suite, "' (", result.seconds, "s)\n");
    for (const auto& c : result.checks) {
        out += cat(c.pass ? "  [PASS] " : "  [FAIL] ", c.name,
                   c.worst != 0.0 ? cat("  worst=", c.worst) : std::string(),
                   c.detail.empty() ? "" : cat("  (", c.detail, ")"), "\n");
    }
    out += cat("  ", result.checks.size() - static_cast<std::size_t>(result.failures()), "/",
               result.checks.size(), " checks passed\n");
    return out;
}

} // namespace tra::verify
