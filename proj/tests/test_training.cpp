#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "tra/training.hpp"
#include "tra/verify.hpp"

using namespace tra;

namespace {

std::vector<AuLabels> single_positive_labels(const std::vector<int>& au_of_frame) {
    std::vector<AuLabels> labels;
    for (int a : au_of_frame) {
        AuLabels l{};
        l[static_cast<std::size_t>(a)] = 1;
        labels.push_back(l);
    }
    return labels;
}

Dataset tiny_synth_dataset(int subjects, int frames, std::uint64_t seed) {
    SynthSpec spec;
    spec.num_subjects = subjects;
    spec.frames_per_subject = frames;
    spec.seed = seed;
    const std::string dir =
        (std::filesystem::temp_directory_path() /
         cat("tra_test_synth_", subjects, "_", frames, "_", seed))
            .string();
    const std::string manifest = generate_synthetic(spec, dir);
    return load_dataset(manifest, spec.image_size);
}

} // namespace

TEST_CASE("binarize: zeros negative, threshold inclusive, top level only at 5") {
    std::array<int, 8> zeros{};
    for (auto v : binarize(zeros, 2)) CHECK(v == 0);
    std::array<int, 8> at{2, 1, 2, 3, 0, 5, 2, 1};
    const AuLabels lab = binarize(at, 2);
    CHECK(lab == AuLabels{1, 0, 1, 1, 0, 1, 1, 0});
    const AuLabels top = binarize(at, 5);
    CHECK(top == AuLabels{0, 0, 0, 0, 0, 1, 0, 0});
    CHECK_THROWS_AS(binarize(at, 0), ConfigError);
}

TEST_CASE("build_sampler: symmetric single-positive frames sample uniformly") {
    // 8 frames, one per AU: all AUs equally frequent
    std::vector<int> aus{0, 1, 2, 3, 4, 5, 6, 7};
    const SamplerState st = build_sampler(single_positive_labels(aus));
    for (double p : st.prob) CHECK(p == doctest::Approx(1.0 / 8.0).epsilon(1e-12));
    double sum = 0.0;
    for (double p : st.prob) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("build_sampler: a 10x rarer AU is sampled 10x more often per frame") {
    // AU0 in 1 frame, AU1 in 10 frames, single-positive frames only
    std::vector<int> aus(11, 1);
    aus[0] = 0;
    const SamplerState st = build_sampler(single_positive_labels(aus));
    CHECK(st.prob[0] / st.prob[1] == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("build_sampler: all-negative frames get the positive-score floor") {
    std::vector<AuLabels> labels(4);
    labels[0][0] = 1;
    labels[1][0] = 1;
    labels[1][1] = 1; // no positives in frames 2,3
    const SamplerState st = build_sampler(labels);
    CHECK(st.prob[2] == st.prob[3]);
    CHECK(st.prob[2] > 0.0);
    // the floor is the smallest positive raw score (frame 0's single weight)
    CHECK(st.prob[2] == doctest::Approx(st.prob[0]).epsilon(1e-12));
    CHECK_THROWS_AS(build_sampler({}), DataError);
}

TEST_CASE("sampler empirical frequencies track p_f") {
    Rng lr(91);
    std::vector<AuLabels> labels(200);
    for (auto& l : labels)
        for (std::size_t a = 0; a < 8; ++a) l[a] = lr.bernoulli(0.1 + 0.05 * static_cast<double>(a)) ? 1 : 0;
    const SamplerState st = build_sampler(labels);
    Rng rng(17);
    std::vector<std::int64_t> counts(labels.size(), 0);
    const std::int64_t draws = 200000;
    for (std::int64_t i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(sampler_draw(st, rng))];
    for (std::size_t f = 0; f < labels.size(); ++f) {
        const double expect = st.prob[f] * static_cast<double>(draws);
        const double sd = std::sqrt(st.prob[f] * (1 - st.prob[f]) * static_cast<double>(draws));
        CHECK(std::abs(static_cast<double>(counts[f]) - expect) < 5.0 * sd + 1.0);
    }
}

TEST_CASE("horizontal flip is an involution and flip_prob=0 leaves images alone") {
    Dataset ds = tiny_synth_dataset(2, 4, 99);
    std::vector<float> px = ds.samples[0].image;
    mirror_image_columns(px, 3, ds.image_size);
    mirror_image_columns(px, 3, ds.image_size);
    CHECK(px == ds.samples[0].image);

    const SamplerState st =
        build_sampler({binarize(ds.samples[0].intensities), binarize(ds.samples[1].intensities)});
    Dataset two;
    two.image_size = ds.image_size;
    two.samples = {ds.samples[0], ds.samples[1]};
    Rng s1(1), f1(2);
    const Batch<double> batch = next_batch<double>(two, st, s1, f1, 6, 0.0, 2, 8);
    for (std::int64_t i = 0; i < 6; ++i) {
        const auto& smp = two.samples[static_cast<std::size_t>(batch.indices[static_cast<std::size_t>(i)])];
        for (std::int64_t j = 0; j < 32; ++j) {
            CHECK(batch.images.data()[i * 3 * 64 * 64 + j] == static_cast<double>(smp.image[static_cast<std::size_t>(j)]));
        }
        CHECK(batch.labels[static_cast<std::size_t>(i)] == binarize(smp.intensities));
    }
}

TEST_CASE("multilabel_bce: zero logits give 3*ln2, saturation stays finite") {
    ForwardTrace<double> tr;
    tr.upper_logits = Tensor<double>::zeros({2, 3});
    tr.middle_logits = Tensor<double>::zeros({2, 2});
    tr.lower_logits = Tensor<double>::zeros({2, 3});
    std::vector<AuLabels> labels(2);
    labels[0] = AuLabels{1, 0, 1, 0, 1, 0, 1, 0};
    labels[1] = AuLabels{0, 1, 0, 1, 0, 1, 0, 1};
    const double loss = multilabel_bce<double>(nullptr, tr, labels, AUGrouping{}).item();
    CHECK(loss == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-12));

    Tensor<double> z = Tensor<double>::full({1, 1}, 20.0);
    Tensor<double> y = Tensor<double>::full({1, 1}, 1.0);
    const double sat = ops::bce_with_logits_mean<double>(nullptr, z, y).item();
    CHECK(sat < 1e-8);
    CHECK(std::isfinite(sat));

    Tensor<double> bad = Tensor<double>::full({1, 1}, 0.5);
    CHECK_THROWS_AS(ops::bce_with_logits_mean<double>(nullptr, z, bad), ShapeError);
}

TEST_CASE("bce matches the high-precision oracle on random batches") {
    Rng rng(92);
    for (int it = 0; it < 20; ++it) {
        Tensor<double> z = Tensor<double>::zeros({4, 6});
        Tensor<double> y = Tensor<double>::zeros({4, 6});
        for (auto& v : z.values()) v = rng.uniform(-8.0, 8.0);
        for (auto& v : y.values()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
        const double impl = ops::bce_with_logits_mean<double>(nullptr, z, y).item();
        CHECK(std::abs(impl - verify::oracle::bce_mean_direct(z, y)) < 1e-10);
    }
}

TEST_CASE("sgd_step: no-op without gradient signal, hand-checked scalar step") {
    Tensor<double> p = Tensor<double>::from({1}, {0.7});
    p.set_requires_grad(true);
    std::vector<double> v(1, 0.0);
    p.grad(); // zero gradient
    sgd_step(p, v, 0.1, 0.9, 0.0);
    CHECK(p.values()[0] == 0.7);

    // v = g + wd*p = 0.5 + 0.001*0.7; p' = p - lr*v
    p.grad()[0] = 0.5;
    sgd_step(p, v, 0.001, 0.9, 0.001);
    const double vel = 0.5 + 0.001 * 0.7;
    CHECK(p.values()[0] == doctest::Approx(0.7 - 0.001 * vel).epsilon(1e-15));
}

TEST_CASE("sgd converges on a quadratic bowl in under 500 steps") {
    Tensor<double> p = Tensor<double>::from({2}, {2.0, -1.5});
    p.set_requires_grad(true);
    Sgd<double> opt({p});
    double loss = 0.0;
    int steps = 0;
    for (; steps < 500; ++steps) {
        p.zero_grad();
        Graph<double> g;
        Tensor<double> l = ops::reduce_sum(&g, ops::elementwise_mul(&g, p, p));
        loss = l.item();
        if (loss < 1e-6) break;
        g.backward(l);
        opt.step(0.05, 0.9, 0.0);
    }
    CHECK(loss < 1e-6);
    CHECK(steps < 500);
}

TEST_CASE("run_fold rejects subject overlap between splits") {
    Dataset ds = tiny_synth_dataset(2, 3, 101);
    ModelConfig cfg = toy_model_config();
    Model<double> m = Model<double>::build(cfg, 1);
    TrainConfig tc;
    tc.epoch_cap = 0;
    CHECK_THROWS_AS(run_fold(m, ds, {0, 1, 2}, {2, 3}, tc, 0), DataError);
}

TEST_CASE("epoch cap 0 returns an untrained evaluation without error") {
    Dataset ds = tiny_synth_dataset(2, 3, 102);
    Model<double> m = Model<double>::build(toy_model_config(), 1);
    TrainConfig tc;
    tc.epoch_cap = 0;
    const FoldOutcome<double> out = run_fold(m, ds, {0, 1, 2}, {3, 4, 5}, tc, 0);
    CHECK(out.stats.epochs_run == 0);
    CHECK(out.report.mean_accuracy >= 0.0);
    CHECK(out.report.mean_accuracy <= 100.0);
}

TEST_CASE("early stopping fires after exactly 10 non-improving epochs on a frozen model") {
    Dataset ds = tiny_synth_dataset(2, 4, 103);
    Model<double> m = Model<double>::build(toy_model_config(), 1);
    const std::vector<double> stem_before(m.stem_.w.values().begin(), m.stem_.w.values().end());

    TrainConfig tc;
    tc.epoch_cap = 50;
    tc.patience = 10;
    tc.batch_size = 2;
    tc.batches_per_epoch = 1;
    tc.freeze = {"all"};
    const FoldOutcome<double> out = run_fold(m, ds, {0, 1, 2, 3}, {4, 5, 6, 7}, tc, 0);
    CHECK(out.stats.best_epoch == 1);
    CHECK(out.stats.stopped_early);
    CHECK(out.stats.epochs_run == 11); // 1 improving + exactly 10 non-improving

    const std::vector<double> stem_after(m.stem_.w.values().begin(), m.stem_.w.values().end());
    CHECK(stem_before == stem_after); // frozen across the entire fold
}

TEST_CASE("run_fold is bit-deterministic for a fixed seed (double mode)") {
    Dataset ds = tiny_synth_dataset(2, 6, 104);
    TrainConfig tc;
    tc.epoch_cap = 2;
    tc.batch_size = 4;
    tc.batches_per_epoch = 2;
    tc.seed = 77;

    std::vector<std::int64_t> train{0, 1, 2, 3, 4, 5}, test{6, 7, 8, 9, 10, 11};
    Model<double> m1 = Model<double>::build(toy_model_config(), Rng::mix(tc.seed, "init", 0));
    const FoldOutcome<double> o1 = run_fold(m1, ds, train, test, tc, 0);
    Model<double> m2 = Model<double>::build(toy_model_config(), Rng::mix(tc.seed, "init", 0));
    const FoldOutcome<double> o2 = run_fold(m2, ds, train, test, tc, 0);
    CHECK(o1.report.mean_f1 == o2.report.mean_f1);
    CHECK(o1.report.mean_accuracy == o2.report.mean_accuracy);
    CHECK(o1.stats.epoch_train_loss == o2.stats.epoch_train_loss);
}

TEST_CASE("overfit check: 300 steps drive a fixed 8-sample batch below 0.05") {
    Dataset ds = tiny_synth_dataset(2, 4, 105);
    REQUIRE(ds.samples.size() == 8);
    const ModelConfig cfg = toy_model_config();
    Model<double> m = Model<double>::build(cfg, 3);

    Tensor<double> images = Tensor<double>::zeros({8, 3, 64, 64});
    std::vector<AuLabels> labels;
    std::vector<std::int64_t> rows;
    for (std::size_t i = 0; i < 8; ++i) {
        const auto& s = ds.samples[i];
        for (std::size_t j = 0; j < s.image.size(); ++j)
            images.data()[static_cast<std::int64_t>(i * s.image.size() + j)] = s.image[j];
        labels.push_back(binarize(s.intensities));
        rows.push_back(feature_center_row(s.landmarks, 8, 64));
    }

    Sgd<double> opt(m.parameters());
    double loss = 0.0;
    for (int step = 0; step < 300; ++step) {
        m.zero_grad();
        Graph<double> g;
        const ForwardTrace<double> tr = m.forward(&g, images, rows);
        Tensor<double> l = multilabel_bce(&g, tr, labels, cfg.groups);
        loss = l.item();
        if (loss < 0.04) break;
        g.backward(l);
        opt.step(0.1, 0.0, 0.0);
    }
    CHECK(loss < 0.05);
}

TEST_CASE("split_subject_folds: 27 subjects in 3 folds of 9, each tested once") {
    std::vector<std::string> subjects;
    for (int i = 0; i < 27; ++i) subjects.push_back(cat("s", i));
    const auto groups = split_subject_folds(subjects, 3, 5);
    CHECK(groups.size() == 3);
    std::set<std::string> seen;
    for (const auto& g : groups) {
        CHECK(g.size() == 9);
        for (const auto& s : g) CHECK(seen.insert(s).second);
    }
    CHECK(seen.size() == 27);

    const auto again = split_subject_folds(subjects, 3, 5);
    CHECK(groups == again); // deterministic under a fixed seed

    const auto loo = split_subject_folds({"a", "b", "c"}, 3, 1);
    for (const auto& g : loo) CHECK(g.size() == 1);

    CHECK_THROWS_AS(split_subject_folds({"a", "b"}, 3, 1), ConfigError);
}

TEST_CASE("cross_validate runs each subject group once and aggregates") {
    Dataset ds = tiny_synth_dataset(3, 4, 106);
    TrainConfig tc;
    tc.epoch_cap = 1;
    tc.batch_size = 2;
    tc.batches_per_epoch = 1;
    const CrossValOutcome out = cross_validate<double>(ds, 3, toy_model_config(), tc);
    CHECK(out.fold_reports.size() == 3);
    CHECK(out.mean.mean_f1 ==
          doctest::Approx((out.fold_reports[0].mean_f1 + out.fold_reports[1].mean_f1 +
                           out.fold_reports[2].mean_f1) /
                          3.0)
              .epsilon(1e-12));

    // parallel folds are isolated instances: bit-identical metrics
    const CrossValOutcome par = cross_validate<double>(ds, 3, toy_model_config(), tc, 3);
    for (std::size_t f = 0; f < 3; ++f) {
        CHECK(par.fold_reports[f].mean_f1 == out.fold_reports[f].mean_f1);
        CHECK(par.fold_reports[f].mean_accuracy == out.fold_reports[f].mean_accuracy);
    }
}
