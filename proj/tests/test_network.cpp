#include <doctest.h>

#include <cmath>
#include <cstring>

#include "tra/gradcheck.hpp"
#include "tra/network.hpp"
#include "tra/training.hpp"
#include "tra/verify.hpp"

using namespace tra;

namespace {

template <class T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data(), b.data(), sizeof(T) * static_cast<std::size_t>(a.size())) == 0;
}

Tensor<double> random_batch(std::int64_t n, std::int64_t s, Rng& rng) {
    Tensor<double> t = Tensor<double>::zeros({n, 3, s, s});
    for (auto& v : t.values()) v = rng.uniform(0.0, 1.0);
    return t;
}

// Closed-form parameter count, mirroring the config arithmetic only.
std::int64_t expected_param_count(const ModelConfig& cfg) {
    const auto se_params = [&](std::int64_t c) { return 2 * (c / cfg.reduction_ratio) * c; };
    std::int64_t total = cfg.stem_channels * 3 * cfg.stem_kernel * cfg.stem_kernel +
                         cfg.stem_channels;
    std::int64_t in = cfg.stem_channels;
    for (const auto& st : cfg.stages) {
        const std::int64_t mid = std::max<std::int64_t>(1, st.channels / cfg.bottleneck_ratio);
        for (std::int64_t u = 0; u < st.units; ++u) {
            const std::int64_t stride = u == 0 ? st.stride : 1;
            total += mid * in + mid;                    // conv1 1x1
            total += mid * mid * 9 + mid;               // conv2 3x3
            total += st.channels * mid + st.channels;   // conv3 1x1
            if (stride != 1 || in != st.channels) total += st.channels * in + st.channels;
            total += se_params(st.channels);
            in = st.channels;
        }
    }
    const auto dec = cfg.effective_decoder_channels();
    std::int64_t dec_in = cfg.stages[3].channels;
    for (const auto c : dec) {
        total += c * dec_in * 9 + c + se_params(c);
        dec_in = c;
    }
    const std::int64_t sq = cfg.cbam_spatial_combine == "concat" ? 2 : 1;
    for (FaceRegion r : {FaceRegion::Upper, FaceRegion::Middle, FaceRegion::Lower}) {
        std::int64_t ch = dec.back();
        for (std::size_t k = 0; k < 3; ++k) {
            if (cfg.enable_cbam) {
                total += se_params(ch); // shared channel MLP
                total += sq * cfg.cbam_spatial_kernel * cfg.cbam_spatial_kernel + 1;
            }
            const std::int64_t out = cfg.branch_channels[k];
            total += out * ch * 9 + out + out * out * 9 + out;
            if (cfg.tail_residual && out != ch) total += out * ch + out;
            ch = out;
        }
        total += cfg.fc_hidden * ch + cfg.fc_hidden;
        const std::int64_t n_out = static_cast<std::int64_t>(cfg.groups.of(r).size());
        total += n_out * cfg.fc_hidden + n_out;
    }
    return total;
}

} // namespace

TEST_CASE("toy model: parameter count matches the closed-form sum") {
    const ModelConfig cfg = toy_model_config();
    Model<double> m = Model<double>::build(cfg, 7);
    CHECK(m.parameter_count() == expected_param_count(cfg));

    ModelConfig no_cbam = cfg;
    no_cbam.enable_cbam = false;
    Model<double> m2 = Model<double>::build(no_cbam, 7);
    CHECK(m2.parameter_count() == expected_param_count(no_cbam));
}

TEST_CASE("same seed builds bit-identical parameters; different seed differs") {
    const ModelConfig cfg = toy_model_config();
    Model<double> a = Model<double>::build(cfg, 12345);
    Model<double> b = Model<double>::build(cfg, 12345);
    Model<double> c = Model<double>::build(cfg, 54321);
    REQUIRE(a.named_parameters().size() == b.named_parameters().size());
    bool all_same = true, any_diff = false;
    for (std::size_t i = 0; i < a.named_parameters().size(); ++i) {
        all_same = all_same &&
                   bitwise_equal(a.named_parameters()[i].second, b.named_parameters()[i].second);
        any_diff = any_diff ||
                   !bitwise_equal(a.named_parameters()[i].second, c.named_parameters()[i].second);
    }
    CHECK(all_same);
    CHECK(any_diff);
}

TEST_CASE("paper preset reproduces the SENet-50 stage shape") {
    const ModelConfig cfg = paper224_model_config();
    cfg.validate();
    CHECK(cfg.stages[0].units == 3);
    CHECK(cfg.stages[1].units == 4);
    CHECK(cfg.stages[2].units == 6);
    CHECK(cfg.stages[3].units == 3);
    CHECK(cfg.stages[0].channels == 256);
    CHECK(cfg.stages[3].channels == 2048);
    CHECK(cfg.decoder_resolution() == 28);

    Model<float> m = Model<float>::build(cfg, 3);
    CHECK(m.parameter_count() == expected_param_count(cfg));
    CHECK(m.stem_.w.shape() == Shape{64, 3, 7, 7});
    CHECK(m.stages_[3].size() == 3);
    CHECK(m.decoder_[0].conv.w.shape() == Shape{1024, 2048, 3, 3});
}

TEST_CASE("decoder output is input/8: forward shape audit at 224 with thin widths") {
    ModelConfig cfg = toy_model_config();
    cfg.input_size = 224;
    Model<double> m = Model<double>::build(cfg, 5);
    Rng rng(40);
    Tensor<double> batch = random_batch(1, 224, rng);
    const ForwardTrace<double> tr = m.forward(nullptr, batch, {14});
    CHECK(tr.decoder_out.shape() == Shape{1, 16, 28, 28});
    CHECK(tr.upper_logits.shape() == Shape{1, 3});
}

TEST_CASE("toy forward: logits shapes (N,3),(N,2),(N,3)") {
    const ModelConfig cfg = toy_model_config();
    Model<double> m = Model<double>::build(cfg, 1);
    Rng rng(41);
    Tensor<double> batch = random_batch(2, 64, rng);
    const ForwardTrace<double> tr = m.forward(nullptr, batch, {4, 5});
    CHECK(tr.upper_logits.shape() == Shape{2, 3});
    CHECK(tr.middle_logits.shape() == Shape{2, 2});
    CHECK(tr.lower_logits.shape() == Shape{2, 3});
    CHECK(tr.decoder_out.shape() == Shape{2, 16, 8, 8});
    CHECK(tr.branch_features[0].shape() == Shape{2, 64});

    CHECK_THROWS_AS(m.forward(nullptr, batch, {4, 9}), ShapeError); // center row out of range
    CHECK_THROWS_AS(m.forward(nullptr, batch, {4}), ShapeError);
}

TEST_CASE("masked branch input equals hand-zeroed decoder feature (Eq-placement splice)") {
    const ModelConfig cfg = toy_model_config();
    Model<double> m = Model<double>::build(cfg, 2);
    Rng rng(42);
    Tensor<double> batch = random_batch(2, 64, rng);
    const std::vector<std::int64_t> rows{4, 6};
    const ForwardTrace<double> tr = m.forward(nullptr, batch, rows);

    const std::int64_t h = 8, w = 8, c = 16;
    for (std::size_t br = 0; br < 3; ++br) {
        const FaceRegion region = m.branches_[br].region;
        Tensor<double> hand = tr.decoder_out.clone_values();
        for (std::int64_t n = 0; n < 2; ++n) {
            const auto band = region_band(region, h, rows[static_cast<std::size_t>(n)]);
            for (std::int64_t ch = 0; ch < c; ++ch)
                for (std::int64_t r = 0; r < h; ++r) {
                    if (r >= band[0] && r < band[1]) continue;
                    for (std::int64_t x = 0; x < w; ++x) hand.at(n, ch, r, x) = 0.0;
                }
        }
        CHECK(bitwise_equal(hand, tr.branch_inputs[br]));
    }
}

TEST_CASE("perturbing the lower band leaves the upper CBAM input unchanged") {
    const ModelConfig cfg = toy_model_config();
    Model<double> m = Model<double>::build(cfg, 9);
    Rng rng(43);
    Tensor<double> batch = random_batch(1, 64, rng);
    const ForwardTrace<double> tr = m.forward(nullptr, batch, {4});

    Tensor<double> perturbed = tr.decoder_out.clone_values();
    for (std::int64_t ch = 0; ch < 16; ++ch)
        for (std::int64_t r = 4; r < 8; ++r)
            for (std::int64_t x = 0; x < 8; ++x) perturbed.at(0, ch, r, x) += rng.uniform(-1, 1);

    Tensor<double> a = ops::keep_row_bands<double>(nullptr, tr.decoder_out, {0}, {4});
    Tensor<double> b = ops::keep_row_bands<double>(nullptr, perturbed, {0}, {4});
    CHECK(bitwise_equal(a, b));
    CHECK(bitwise_equal(a, tr.branch_inputs[0]));
}

TEST_CASE("decoder wiring: zero decoder convs reduce the output to the skip tensor") {
    const ModelConfig cfg = toy_model_config();
    Model<double> m = Model<double>::build(cfg, 4);
    for (auto& stage : m.decoder_) {
        Tensor<double> w = stage.conv.w, b = stage.conv.b;
        std::fill(w.values().begin(), w.values().end(), 0.0);
        std::fill(b.values().begin(), b.values().end(), 0.0);
    }
    Rng rng(44);
    Tensor<double> batch = random_batch(1, 64, rng);
    const ForwardTrace<double> tr = m.forward(nullptr, batch, {4});
    CHECK(bitwise_equal(tr.decoder_out, tr.encoder_outputs[1]));
}

TEST_CASE("no hard mask + tied branch init makes the three branch features coincide") {
    ModelConfig cfg = toy_model_config();
    cfg.enable_hard_mask = false;
    cfg.tie_branch_init = true;
    Model<double> m = Model<double>::build(cfg, 6);
    Rng rng(45);
    Tensor<double> batch = random_batch(2, 64, rng);
    const ForwardTrace<double> tr = m.forward(nullptr, batch, {4, 4});
    CHECK(bitwise_equal(tr.branch_inputs[0], tr.branch_inputs[1]));
    CHECK(bitwise_equal(tr.branch_features[0], tr.branch_features[1]));
    CHECK(bitwise_equal(tr.branch_features[0], tr.branch_features[2]));
}

TEST_CASE("ablation configs: backbone variant keeps logits shapes") {
    ModelConfig cfg = toy_model_config();
    cfg.enable_hard_mask = false;
    cfg.enable_cbam = false;
    Model<double> m = Model<double>::build(cfg, 8);
    Rng rng(46);
    Tensor<double> batch = random_batch(2, 64, rng);
    const ForwardTrace<double> tr = m.forward(nullptr, batch, {4, 4});
    CHECK(tr.upper_logits.shape() == Shape{2, 3});
    CHECK(tr.middle_logits.shape() == Shape{2, 2});
    CHECK(tr.lower_logits.shape() == Shape{2, 3});
}

TEST_CASE("freeze: frozen stages stay bit-identical through an SGD step") {
    const ModelConfig cfg = toy_model_config();
    Model<double> m = Model<double>::build(cfg, 10);
    CHECK_THROWS_AS(m.freeze({"stage9"}), ConfigError);
    m.freeze({"stem", "stage2"});

    std::vector<std::pair<std::string, Tensor<double>>> frozen_before;
    for (const auto& [name, t] : m.named_parameters()) {
        std::string plain = name.rfind("att.", 0) == 0 ? name.substr(4) : name;
        if (plain.rfind("enc.stem.", 0) == 0 || plain.rfind("enc.s2.", 0) == 0) {
            frozen_before.emplace_back(name, t.clone_values());
        }
    }
    REQUIRE(!frozen_before.empty());

    Rng rng(47);
    Tensor<double> batch = random_batch(2, 64, rng);
    std::vector<AuLabels> labels(2);
    for (auto& l : labels)
        for (auto& v : l) v = rng.bernoulli(0.5) ? 1 : 0;

    Sgd<double> opt(m.parameters());
    m.zero_grad();
    Graph<double> g;
    const ForwardTrace<double> tr = m.forward(&g, batch, {4, 4});
    Tensor<double> loss = multilabel_bce(&g, tr, labels, cfg.groups);
    g.backward(loss);
    opt.step(0.01, 0.9, 0.001);

    for (const auto& [name, before] : frozen_before) {
        for (const auto& [n2, now] : m.named_parameters()) {
            if (n2 == name) CHECK(bitwise_equal(before, now));
        }
    }
    // and something else did move
    bool moved = false;
    Model<double> fresh = Model<double>::build(cfg, 10);
    for (std::size_t i = 0; i < m.named_parameters().size(); ++i) {
        if (!bitwise_equal(m.named_parameters()[i].second, fresh.named_parameters()[i].second))
            moved = true;
    }
    CHECK(moved);
}

TEST_CASE("freeze all: loss is unchanged across steps on a fixed batch") {
    const ModelConfig cfg = toy_model_config();
    Model<double> m = Model<double>::build(cfg, 13);
    m.freeze({"all"});
    Rng rng(48);
    Tensor<double> batch = random_batch(2, 64, rng);
    std::vector<AuLabels> labels(2);
    for (auto& l : labels)
        for (auto& v : l) v = rng.bernoulli(0.5) ? 1 : 0;

    Sgd<double> opt(m.parameters());
    double first = 0.0;
    for (int step = 0; step < 3; ++step) {
        m.zero_grad();
        Graph<double> g;
        const ForwardTrace<double> tr = m.forward(&g, batch, {4, 4});
        Tensor<double> loss = multilabel_bce(&g, tr, labels, cfg.groups);
        if (step == 0) first = loss.item();
        CHECK(loss.item() == first);
        CHECK(!loss.requires_grad()); // nothing trainable: no tape was recorded
        CHECK(g.num_nodes() == 0);
        opt.step(0.01, 0.9, 0.001);
    }
}

TEST_CASE("end-to-end finite-difference check on the toy preset (tol 1e-4)") {
    ModelConfig cfg = toy_model_config();
    cfg.residual_zero_init = false; // keep every path live for the check
    Model<double> m = Model<double>::build(cfg, Rng::mix(14, "e2e.model"));
    verify::jitter_model_biases(m, Rng::mix(14, "e2e.bias"));
    Rng rng(Rng::mix(14, "e2e.data"));
    Tensor<double> batch = random_batch(2, 64, rng);
    std::vector<AuLabels> labels(2);
    for (auto& l : labels)
        for (auto& v : l) v = rng.bernoulli(0.5) ? 1 : 0;
    const AUGrouping groups = cfg.groups;
    const auto make_loss = [&m, batch, labels, groups](Graph<double>* g) {
        const ForwardTrace<double> tr = m.forward(g, batch, {4, 5});
        return multilabel_bce(g, tr, labels, groups);
    };
    GradCheckOptions opt;
    opt.total_probes = 160;
    opt.seed = 14;
    const GradCheckReport rep = finite_diff_check(make_loss, m.parameters(), opt);
    CHECK_MESSAGE(rep.max_rel_err < 1e-4, "worst at ", rep.worst_location, ": ", rep.max_rel_err);
}

TEST_CASE("model config validation lists the violated invariant") {
    ModelConfig cfg = toy_model_config();
    cfg.input_size = 48;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = toy_model_config();
    cfg.stages[1].stride = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = toy_model_config();
    cfg.branch_channels = {16, 32};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = toy_model_config();
    cfg.groups.upper = {1, 2};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("shipped config presets parse and validate") {
    const ModelConfig toy = model_config_from_file(TRA_REPO_ROOT "/configs/toy.json");
    CHECK(toy.input_size == 64);
    CHECK(toy.stages[3].channels == 64);
    const ModelConfig paper = model_config_from_file(TRA_REPO_ROOT "/configs/paper224.json");
    CHECK(paper.input_size == 224);
    CHECK(paper.stages[2].units == 6);
    const TrainConfig deflt = train_config_from_file(TRA_REPO_ROOT "/configs/train_default.json");
    CHECK(deflt.lr == 0.001);
    CHECK(deflt.momentum == 0.9);
    const TrainConfig synth = train_config_from_file(TRA_REPO_ROOT "/configs/train_synth.json");
    CHECK(synth.lr == 0.1);
    const SynthSpec spec = synth_spec_from_file(TRA_REPO_ROOT "/configs/synth_default.json");
    CHECK(spec.num_subjects == 9);
    CHECK(spec.frames_per_subject == 200);
}

TEST_CASE("model config JSON round trip preserves the configuration") {
    ModelConfig cfg = toy_model_config();
    cfg.cbam_residual = true;
    cfg.branch_channels = {16, 16, 32};
    const std::string text = model_config_to_json_text(cfg);
    const ModelConfig back = model_config_from_json_text(text);
    CHECK(back.cbam_residual == true);
    CHECK(back.branch_channels == std::vector<std::int64_t>{16, 16, 32});
    CHECK(back.input_size == cfg.input_size);
    CHECK(model_config_to_json_text(back) == text);
}
