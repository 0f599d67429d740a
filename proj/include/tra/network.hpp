#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tra/attention.hpp"
#include "tra/ops.hpp"
#include "tra/region.hpp"
#include "tra/rng.hpp"
#include "tra/serialize.hpp"

namespace tra {

struct StageSpec {
    std::int64_t units = 1;
    std::int64_t channels = 8;
    std::int64_t stride = 1;
};

// Scalable architecture description. The "toy" preset is the desk-scale
// default; "paper224" reproduces the SENet-50 stage shape (3/4/6/3 units,
// 256/512/1024/2048 channels) at 224 input.
struct ModelConfig {
    std::int64_t input_size = 64;
    std::int64_t stem_channels = 8;
    std::int64_t stem_kernel = 7;
    std::int64_t stem_stride = 2;
    std::int64_t stem_pool = 2;
    std::vector<StageSpec> stages{{1, 8, 1}, {1, 16, 2}, {1, 32, 2}, {1, 64, 2}};
    std::int64_t reduction_ratio = 4;
    std::int64_t bottleneck_ratio = 4;
    std::vector<std::int64_t> decoder_channels; // empty: mirror stages 4 and 3
    // Backbone SE blocks scale only; the residual add is the unit's own skip.
    bool se_residual = false;
    // Close every residual branch (bottleneck conv3, tail c2) and the decoder
    // convs with zero weights so the net starts near identity. Without any
    // normalization layers this is what keeps SGD stable.
    bool residual_zero_init = true;
    // Initial bias of the CBAM spatial gate convolution. Positive values start
    // the gates mostly open; with no normalization layers, three stacked
    // half-closed gates would shrink branch features by ~an order of magnitude.
    double spatial_gate_bias = 2.0;
    bool cbam_residual = false;
    std::string cbam_spatial_combine = "add";
    std::int64_t cbam_spatial_kernel = 7;
    bool enable_channel_att = true;
    bool enable_spatial_att = true;
    bool enable_hard_mask = true;
    bool enable_cbam = true;
    bool tail_residual = true;
    std::vector<std::int64_t> branch_channels{16, 32, 64};
    std::int64_t fc_hidden = 64;
    AUGrouping groups;
    bool tie_branch_init = false;

    std::int64_t encoder_stride() const {
        std::int64_t s = stem_stride * stem_pool;
        for (const auto& st : stages) s *= st.stride;
        return s;
    }
    std::int64_t decoder_resolution() const { return input_size / 8; }
    std::vector<std::int64_t> effective_decoder_channels() const {
        if (!decoder_channels.empty()) return decoder_channels;
        return {stages[2].channels, stages[1].channels};
    }

    void validate() const;
};

ModelConfig toy_model_config();
ModelConfig paper224_model_config();
ModelConfig model_config_from_json_text(const std::string& text);
// Accepts a JSON file path or a preset name ("toy", "paper224").
ModelConfig model_config_from_file(const std::string& path_or_preset);
std::string model_config_to_json_text(const ModelConfig& cfg);

// ---- layers ---------------------------------------------------------------------

template <class T>
struct ConvLayer {
    Tensor<T> w;
    Tensor<T> b;
    std::int64_t stride = 1;
    std::int64_t pad = 0;

    Tensor<T> forward(Graph<T>* g, const Tensor<T>& x) const {
        return ops::conv2d(g, x, w, b, stride, pad);
    }
};

template <class T>
struct FcLayer {
    Tensor<T> w;
    Tensor<T> b;

    Tensor<T> forward(Graph<T>* g, const Tensor<T>& x) const {
        return ops::fully_connected(g, x, w, b);
    }
};

// SENet bottleneck unit: 1x1 reduce, 3x3 (carries the stride), 1x1 expand,
// SE on the residual branch, projection shortcut when shape changes.
template <class T>
struct BottleneckUnit {
    ConvLayer<T> conv1, conv2, conv3;
    std::optional<ConvLayer<T>> proj;
    SEBlock<T> se;

    Tensor<T> forward(Graph<T>* g, const Tensor<T>& x) const {
        Tensor<T> y = ops::relu(g, conv1.forward(g, x));
        y = ops::relu(g, conv2.forward(g, y));
        y = conv3.forward(g, y);
        y = se.forward(g, y);
        const Tensor<T> skip = proj ? proj->forward(g, x) : x;
        return ops::relu(g, ops::elementwise_add(g, y, skip));
    }
};

// One decoder block: nearest-neighbor 2x upsample, a single conv, SE, then
// the additive skip connection from the matching encoder stage.
template <class T>
struct DecoderStage {
    ConvLayer<T> conv;
    SEBlock<T> se;

    Tensor<T> forward(Graph<T>* g, const Tensor<T>& x, const Tensor<T>& skip) const {
        Tensor<T> y = ops::relu(g, conv.forward(g, ops::upsample2x_nearest(g, x)));
        y = se.forward(g, y);
        return ops::elementwise_add(g, y, skip);
    }
};

// Two convolutions, optionally wrapped in a residual connection.
template <class T>
struct TailBlock {
    ConvLayer<T> c1, c2;
    std::optional<ConvLayer<T>> proj;
    bool residual = true;

    Tensor<T> forward(Graph<T>* g, const Tensor<T>& x) const {
        Tensor<T> y = ops::relu(g, c1.forward(g, x));
        y = c2.forward(g, y);
        if (residual) {
            const Tensor<T> skip = proj ? proj->forward(g, x) : x;
            y = ops::elementwise_add(g, y, skip);
        }
        return ops::relu(g, y);
    }
};

template <class T>
struct Branch {
    FaceRegion region = FaceRegion::Upper;
    std::vector<CBAMBlock<T>> cbam; // empty when enable_cbam is off
    std::array<TailBlock<T>, 3> tails;
    FcLayer<T> fc1, fc2;
};

template <class T>
struct ForwardTrace {
    std::vector<std::pair<std::string, Shape>> stage_shapes;
    std::array<Tensor<T>, 4> encoder_outputs; // stages 2..5
    Tensor<T> decoder_out;
    std::array<Tensor<T>, 3> branch_inputs;   // after hard masking
    std::array<Tensor<T>, 3> branch_features; // pre-FC pooled features [N, width]
    Tensor<T> upper_logits, middle_logits, lower_logits;

    const Tensor<T>& logits(FaceRegion r) const {
        switch (r) {
            case FaceRegion::Upper: return upper_logits;
            case FaceRegion::Middle: return middle_logits;
            default: return lower_logits;
        }
    }
};

namespace detail {

// Initialization is keyed on (seed, tensor name): insensitive to build order.
template <class T>
class ParamBuilder {
public:
    ParamBuilder(std::uint64_t seed, bool tie_branches,
                 std::vector<std::pair<std::string, Tensor<T>>>* registry)
        : seed_(seed), tie_branches_(tie_branches), registry_(registry) {}

    Tensor<T> he_conv(const std::string& name, Shape shape) {
        const std::int64_t fan_in = shape[1] * shape[2] * shape[3];
        return uniform(name, std::move(shape), std::sqrt(6.0 / static_cast<double>(fan_in)));
    }

    Tensor<T> xavier_fc(const std::string& name, Shape shape) {
        const std::int64_t fan_out = shape[0], fan_in = shape[1];
        return uniform(name, std::move(shape),
                       std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
    }

    Tensor<T> zeros(const std::string& name, Shape shape) {
        Tensor<T> t = Tensor<T>::zeros(std::move(shape));
        adopt(name, t);
        return t;
    }

    Tensor<T> constant(const std::string& name, Shape shape, T value) {
        Tensor<T> t = Tensor<T>::full(std::move(shape), value);
        adopt(name, t);
        return t;
    }

private:
    Tensor<T> uniform(const std::string& name, Shape shape, double limit) {
        Tensor<T> t = Tensor<T>::zeros(std::move(shape));
        Rng rng = Rng::stream(seed_, stream_name(name));
        for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-limit, limit));
        adopt(name, t);
        return t;
    }

    std::string stream_name(const std::string& name) const {
        if (!tie_branches_) return name;
        std::string s = name;
        for (const char* prefix : {"br.up.", "br.mid.", "br.low.", "att.br.up.", "att.br.mid.",
                                   "att.br.low."}) {
            const std::size_t len = std::string(prefix).size();
            if (s.rfind(prefix, 0) == 0) {
                const bool att = s.rfind("att.", 0) == 0;
                s = (att ? std::string("att.br.*.") : std::string("br.*.")) + s.substr(len);
                break;
            }
        }
        return s;
    }

    void adopt(const std::string& name, Tensor<T>& t) {
        t.set_name(name);
        t.set_requires_grad(true);
        registry_->emplace_back(name, t);
    }

    std::uint64_t seed_;
    bool tie_branches_;
    std::vector<std::pair<std::string, Tensor<T>>>* registry_;
};

} // namespace detail

// The assembled three-region attention network.
template <class T>
class Model {
public:
    static Model build(const ModelConfig& cfg, std::uint64_t seed);

    ForwardTrace<T> forward(Graph<T>* g, const Tensor<T>& batch,
                            const std::vector<std::int64_t>& center_rows) const;

    // Marks parameters of the named stages as non-trainable: their grads are
    // not accumulated and the optimizer skips them. Valid names: stem,
    // stage2..stage5, decoder, branches, all.
    void freeze(const std::set<std::string>& stage_names);

    const std::vector<std::pair<std::string, Tensor<T>>>& named_parameters() const {
        return params_;
    }
    std::vector<Tensor<T>> parameters() const {
        std::vector<Tensor<T>> out;
        for (const auto& [_, t] : params_) out.push_back(t);
        return out;
    }
    std::int64_t parameter_count() const {
        std::int64_t n = 0;
        for (const auto& [_, t] : params_) n += t.size();
        return n;
    }
    void zero_grad() {
        for (auto& [_, t] : params_) t.zero_grad();
    }

    const ModelConfig& config() const { return cfg_; }

    std::vector<WeightRecord> to_records() const;
    void load_records(const std::vector<WeightRecord>& records);

    // exposed for tests and wiring checks
    ConvLayer<T> stem_;
    std::vector<std::vector<BottleneckUnit<T>>> stages_;
    std::array<DecoderStage<T>, 2> decoder_;
    std::array<Branch<T>, 3> branches_;

private:
    ModelConfig cfg_;
    std::vector<std::pair<std::string, Tensor<T>>> params_;
};

// ---- implementation ---------------------------------------------------------

template <class T>
Model<T> Model<T>::build(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model<T> m;
    m.cfg_ = cfg;
    detail::ParamBuilder<T> pb(seed, cfg.tie_branch_init, &m.params_);

    const std::int64_t stem_pad = cfg.stem_kernel / 2;
    m.stem_ = ConvLayer<T>{pb.he_conv("enc.stem.conv.w",
                                      {cfg.stem_channels, 3, cfg.stem_kernel, cfg.stem_kernel}),
                           pb.zeros("enc.stem.conv.b", {cfg.stem_channels}), cfg.stem_stride,
                           stem_pad};

    std::int64_t in_ch = cfg.stem_channels;
    for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
        const StageSpec& spec = cfg.stages[s];
        std::vector<BottleneckUnit<T>> units;
        for (std::int64_t u = 0; u < spec.units; ++u) {
            const std::string base = cat("enc.s", s + 2, ".u", u, ".");
            const std::int64_t stride = u == 0 ? spec.stride : 1;
            const std::int64_t mid = std::max<std::int64_t>(1, spec.channels / cfg.bottleneck_ratio);
            BottleneckUnit<T> unit;
            unit.conv1 = ConvLayer<T>{pb.he_conv(base + "conv1.w", {mid, in_ch, 1, 1}),
                                      pb.zeros(base + "conv1.b", {mid}), 1, 0};
            unit.conv2 = ConvLayer<T>{pb.he_conv(base + "conv2.w", {mid, mid, 3, 3}),
                                      pb.zeros(base + "conv2.b", {mid}), stride, 1};
            unit.conv3 =
                ConvLayer<T>{cfg.residual_zero_init
                                 ? pb.zeros(base + "conv3.w", {spec.channels, mid, 1, 1})
                                 : pb.he_conv(base + "conv3.w", {spec.channels, mid, 1, 1}),
                             pb.zeros(base + "conv3.b", {spec.channels}), 1, 0};
            if (stride != 1 || in_ch != spec.channels) {
                unit.proj = ConvLayer<T>{pb.he_conv(base + "proj.w", {spec.channels, in_ch, 1, 1}),
                                         pb.zeros(base + "proj.b", {spec.channels}), stride, 0};
            }
            unit.se = SEBlock<T>::make(spec.channels, cfg.reduction_ratio, cfg.se_residual);
            unit.se.w1 = pb.xavier_fc(cat("att.", base, "se.w1"),
                                      {spec.channels / cfg.reduction_ratio, spec.channels});
            unit.se.w2 = pb.xavier_fc(cat("att.", base, "se.w2"),
                                      {spec.channels, spec.channels / cfg.reduction_ratio});
            units.push_back(std::move(unit));
            in_ch = spec.channels;
        }
        m.stages_.push_back(std::move(units));
    }

    const auto dec_ch = cfg.effective_decoder_channels();
    std::int64_t dec_in = cfg.stages[3].channels;
    for (std::size_t d = 0; d < 2; ++d) {
        const std::string base = cat("dec.d", 4 - d, ".");
        DecoderStage<T> stage;
        stage.conv = ConvLayer<T>{cfg.residual_zero_init
                                      ? pb.zeros(base + "conv.w", {dec_ch[d], dec_in, 3, 3})
                                      : pb.he_conv(base + "conv.w", {dec_ch[d], dec_in, 3, 3}),
                                  pb.zeros(base + "conv.b", {dec_ch[d]}), 1, 1};
        stage.se = SEBlock<T>::make(dec_ch[d], cfg.reduction_ratio, cfg.se_residual);
        stage.se.w1 = pb.xavier_fc(cat("att.", base, "se.w1"),
                                   {dec_ch[d] / cfg.reduction_ratio, dec_ch[d]});
        stage.se.w2 = pb.xavier_fc(cat("att.", base, "se.w2"),
                                   {dec_ch[d], dec_ch[d] / cfg.reduction_ratio});
        m.decoder_[d] = std::move(stage);
        dec_in = dec_ch[d];
    }

    const SpatialCombine combine = spatial_combine_from_string(cfg.cbam_spatial_combine);
    const std::array<FaceRegion, 3> regions{FaceRegion::Upper, FaceRegion::Middle,
                                            FaceRegion::Lower};
    const std::array<const char*, 3> tags{"up", "mid", "low"};
    for (std::size_t r = 0; r < 3; ++r) {
        Branch<T>& br = m.branches_[r];
        br.region = regions[r];
        std::int64_t ch = dec_ch.back();
        for (std::size_t k = 0; k < 3; ++k) {
            const std::string base = cat("br.", tags[r], ".");
            if (cfg.enable_cbam) {
                CBAMBlock<T> cb = CBAMBlock<T>::make(ch, cfg.reduction_ratio,
                                                     cfg.enable_channel_att, cfg.enable_spatial_att,
                                                     cfg.cbam_residual, combine,
                                                     cfg.cbam_spatial_kernel);
                const std::string ab = cat("att.", base, "cbam", k + 1, ".");
                cb.ch_w1 = pb.xavier_fc(ab + "ch.w1", {ch / cfg.reduction_ratio, ch});
                cb.ch_w2 = pb.xavier_fc(ab + "ch.w2", {ch, ch / cfg.reduction_ratio});
                const std::int64_t sq = combine == SpatialCombine::Concat ? 2 : 1;
                cb.sp_w = pb.he_conv(ab + "sp.w",
                                     {1, sq, cfg.cbam_spatial_kernel, cfg.cbam_spatial_kernel});
                cb.sp_b = pb.constant(ab + "sp.b", {1}, static_cast<T>(cfg.spatial_gate_bias));
                br.cbam.push_back(std::move(cb));
            }
            const std::int64_t out_ch = cfg.branch_channels[k];
            const std::string tb = cat(base, "t", k + 1, ".");
            TailBlock<T>& tail = br.tails[k];
            tail.residual = cfg.tail_residual;
            tail.c1 = ConvLayer<T>{pb.he_conv(tb + "c1.w", {out_ch, ch, 3, 3}),
                                   pb.zeros(tb + "c1.b", {out_ch}), 1, 1};
            tail.c2 = ConvLayer<T>{(cfg.residual_zero_init && cfg.tail_residual)
                                       ? pb.zeros(tb + "c2.w", {out_ch, out_ch, 3, 3})
                                       : pb.he_conv(tb + "c2.w", {out_ch, out_ch, 3, 3}),
                                   pb.zeros(tb + "c2.b", {out_ch}), 1, 1};
            if (cfg.tail_residual && out_ch != ch) {
                tail.proj = ConvLayer<T>{pb.he_conv(tb + "proj.w", {out_ch, ch, 1, 1}),
                                         pb.zeros(tb + "proj.b", {out_ch}), 1, 0};
            }
            ch = out_ch;
        }
        const std::string base = cat("br.", tags[r], ".");
        const std::int64_t out_dim = static_cast<std::int64_t>(cfg.groups.of(br.region).size());
        br.fc1 = FcLayer<T>{pb.xavier_fc(base + "fc1.w", {cfg.fc_hidden, ch}),
                            pb.zeros(base + "fc1.b", {cfg.fc_hidden})};
        br.fc2 = FcLayer<T>{pb.xavier_fc(base + "fc2.w", {out_dim, cfg.fc_hidden}),
                            pb.zeros(base + "fc2.b", {out_dim})};
    }
    return m;
}

template <class T>
ForwardTrace<T> Model<T>::forward(Graph<T>* g, const Tensor<T>& batch,
                                  const std::vector<std::int64_t>& center_rows) const {
    ops::check_rank(batch, 4, "model forward", "batch");
    require<ShapeError>(batch.dim(1) == 3 && batch.dim(2) == cfg_.input_size &&
                            batch.dim(3) == cfg_.input_size,
                        "model forward: batch ", shape_str(batch.shape()), " does not match 3x",
                        cfg_.input_size, "x", cfg_.input_size);
    const std::int64_t n = batch.dim(0);
    const std::int64_t dec_h = cfg_.decoder_resolution();
    require<ShapeError>(static_cast<std::int64_t>(center_rows.size()) == n,
                        "model forward: need one center row per sample");
    for (auto y : center_rows) {
        require<ShapeError>(y >= 1 && y <= dec_h - 1, "center row ", y, " outside [1,", dec_h - 1,
                            "]");
    }

    ForwardTrace<T> trace;
    Tensor<T> x = ops::relu(g, stem_.forward(g, batch));
    if (cfg_.stem_pool > 1) x = ops::max_pool2d(g, x, cfg_.stem_pool, cfg_.stem_pool);
    trace.stage_shapes.emplace_back("stem", x.shape());

    std::vector<Tensor<T>> stage_outs;
    for (std::size_t s = 0; s < stages_.size(); ++s) {
        for (const auto& unit : stages_[s]) x = unit.forward(g, x);
        stage_outs.push_back(x);
        trace.encoder_outputs[s] = x;
        trace.stage_shapes.emplace_back(cat("stage", s + 2), x.shape());
    }

    Tensor<T> d = stage_outs[3];
    d = decoder_[0].forward(g, d, stage_outs[2]);
    trace.stage_shapes.emplace_back("decoder.d4", d.shape());
    d = decoder_[1].forward(g, d, stage_outs[1]);
    trace.stage_shapes.emplace_back("decoder.d3", d.shape());
    trace.decoder_out = d;

    for (std::size_t r = 0; r < 3; ++r) {
        const Branch<T>& br = branches_[r];
        Tensor<T> f = d;
        if (cfg_.enable_hard_mask) {
            std::vector<std::int64_t> begin(static_cast<std::size_t>(n)),
                end(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) {
                const auto band = region_band(br.region, dec_h, center_rows[static_cast<std::size_t>(i)]);
                begin[static_cast<std::size_t>(i)] = band[0];
                end[static_cast<std::size_t>(i)] = band[1];
            }
            f = ops::keep_row_bands(g, f, std::move(begin), std::move(end));
        }
        trace.branch_inputs[r] = f;

        for (std::size_t k = 0; k < 3; ++k) {
            if (cfg_.enable_cbam) f = br.cbam[k].forward(g, f);
            f = br.tails[k].forward(g, f);
            if (k < 2) {
                f = ops::max_pool2d(g, f, 2, 2);
            } else {
                f = ops::global_avg_pool(g, f);
            }
        }
        Tensor<T> feat = ops::reshape(g, f, {n, f.dim(1)});
        trace.branch_features[r] = feat;
        Tensor<T> hidden = ops::relu(g, br.fc1.forward(g, feat));
        Tensor<T> logits = br.fc2.forward(g, hidden);
        trace.stage_shapes.emplace_back(cat("branch.", region_name(br.region), ".logits"),
                                        logits.shape());
        if (br.region == FaceRegion::Upper)
            trace.upper_logits = logits;
        else if (br.region == FaceRegion::Middle)
            trace.middle_logits = logits;
        else
            trace.lower_logits = logits;
    }
    return trace;
}

template <class T>
void Model<T>::freeze(const std::set<std::string>& stage_names) {
    const std::vector<std::pair<std::string, std::string>> known{
        {"stem", "enc.stem."},    {"stage2", "enc.s2."}, {"stage3", "enc.s3."},
        {"stage4", "enc.s4."},    {"stage5", "enc.s5."}, {"decoder", "dec."},
        {"branches", "br."},      {"all", ""}};
    std::vector<std::string> prefixes;
    for (const auto& name : stage_names) {
        bool found = false;
        for (const auto& [key, prefix] : known) {
            if (name == key) {
                prefixes.push_back(prefix);
                found = true;
                break;
            }
        }
        if (!found) {
            std::string valid;
            for (const auto& [key, _] : known) valid += key + std::string(" ");
            throw ConfigError(cat("unknown freeze stage '", name, "'; valid: ", valid));
        }
    }
    for (auto& [name, t] : params_) {
        std::string plain = name;
        if (plain.rfind("att.", 0) == 0) plain = plain.substr(4);
        for (const auto& prefix : prefixes) {
            if (plain.rfind(prefix, 0) == 0) {
                t.set_requires_grad(false);
                break;
            }
        }
    }
}

template <class T>
std::vector<WeightRecord> Model<T>::to_records() const {
    std::vector<WeightRecord> recs;
    for (const auto& [name, t] : params_) {
        WeightRecord r;
        r.name = name;
        r.shape = t.shape();
        r.values.reserve(static_cast<std::size_t>(t.size()));
        for (T v : t.values()) r.values.push_back(static_cast<float>(v));
        recs.push_back(std::move(r));
    }
    return recs;
}

template <class T>
void Model<T>::load_records(const std::vector<WeightRecord>& records) {
    std::size_t used = 0;
    for (auto& [name, t] : params_) {
        const WeightRecord* found = nullptr;
        for (const auto& r : records) {
            if (r.name == name) {
                found = &r;
                break;
            }
        }
        require<DataError>(found != nullptr, "weight file is missing tensor '", name, "'");
        require<DataError>(found->shape == t.shape(), "weight tensor '", name, "' has shape ",
                           shape_str(found->shape), ", model expects ", shape_str(t.shape()));
        for (std::int64_t i = 0; i < t.size(); ++i)
            t.values()[i] = static_cast<T>(found->values[static_cast<std::size_t>(i)]);
        ++used;
    }
    require<DataError>(used == records.size(), "weight file carries ", records.size(),
                       " tensors, model has ", used);
}

} // namespace tra
