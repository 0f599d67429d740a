#pragma once

#include <cstdint>
#include <string>

#include "tra/ops.hpp"

namespace tra {

// Squeeze-and-excitation channel attention: squeeze by global average
// pooling, excite through a two-layer bottleneck (no biases), then scale the
// input per channel. With `residual` the scaled map is added back onto the
// input.
template <class T>
struct SEBlock {
    std::int64_t channels = 0;
    std::int64_t reduction = 0;
    bool residual = true;
    Tensor<T> w1; // [C/r, C]
    Tensor<T> w2; // [C, C/r]

    static SEBlock make(std::int64_t channels, std::int64_t reduction, bool residual) {
        require<ConfigError>(reduction >= 1, "se: reduction ratio must be >= 1, got ", reduction);
        require<ConfigError>(channels % reduction == 0, "se: channels ", channels,
                             " not divisible by reduction ratio ", reduction);
        SEBlock b;
        b.channels = channels;
        b.reduction = reduction;
        b.residual = residual;
        b.w1 = Tensor<T>::zeros({channels / reduction, channels});
        b.w2 = Tensor<T>::zeros({channels, channels / reduction});
        return b;
    }

    Tensor<T> excitation(Graph<T>* g, const Tensor<T>& u) const {
        ops::check_rank(u, 4, "se_forward", "input");
        require<ShapeError>(u.dim(1) == channels, "se_forward: input has ", u.dim(1),
                            " channels, block expects ", channels);
        Tensor<T> z = ops::reshape(g, ops::global_avg_pool(g, u), {u.dim(0), channels});
        Tensor<T> hidden = ops::relu(g, ops::fully_connected(g, z, w1, Tensor<T>{}));
        Tensor<T> s = ops::sigmoid(g, ops::fully_connected(g, hidden, w2, Tensor<T>{}));
        return ops::reshape(g, s, {u.dim(0), channels, 1, 1});
    }

    Tensor<T> forward(Graph<T>* g, const Tensor<T>& u) const {
        Tensor<T> scaled = ops::elementwise_mul(g, u, excitation(g, u));
        return residual ? ops::elementwise_add(g, scaled, u) : scaled;
    }
};

template <class T>
Tensor<T> se_forward(Graph<T>* g, const SEBlock<T>& block, const Tensor<T>& u) {
    return block.forward(g, u);
}

enum class SpatialCombine { Add, Concat };

inline SpatialCombine spatial_combine_from_string(const std::string& s) {
    if (s == "add") return SpatialCombine::Add;
    if (s == "concat") return SpatialCombine::Concat;
    throw ConfigError(cat("unknown spatial_combine '", s, "' (add|concat)"));
}

// CBAM block: channel attention from avg- and max-pooled descriptors through
// a shared bottleneck, then spatial attention from channel-avg and
// channel-max maps through a 7x7 convolution. Both squeezed parts are
// combined by addition at the final step (a concat variant is kept as a
// config escape hatch). Residual defaults to off: attention output is a pure
// product with the input.
template <class T>
struct CBAMBlock {
    std::int64_t channels = 0;
    std::int64_t reduction = 0;
    bool enable_channel = true;
    bool enable_spatial = true;
    bool residual = false;
    SpatialCombine combine = SpatialCombine::Add;
    std::int64_t spatial_kernel = 7;
    Tensor<T> ch_w1;   // [C/r, C], shared between avg and max descriptors
    Tensor<T> ch_w2;   // [C, C/r]
    Tensor<T> sp_w;    // [1, 1 or 2, k, k]
    Tensor<T> sp_b;    // [1]

    static CBAMBlock make(std::int64_t channels, std::int64_t reduction, bool enable_channel,
                          bool enable_spatial, bool residual,
                          SpatialCombine combine = SpatialCombine::Add,
                          std::int64_t spatial_kernel = 7) {
        require<ConfigError>(enable_channel || enable_spatial || residual,
                             "cbam: both attention paths disabled and no residual; the block "
                             "would compute nothing");
        require<ConfigError>(reduction >= 1 && channels % reduction == 0, "cbam: channels ",
                             channels, " not divisible by reduction ratio ", reduction);
        require<ConfigError>(spatial_kernel % 2 == 1, "cbam: spatial kernel must be odd, got ",
                             spatial_kernel);
        CBAMBlock b;
        b.channels = channels;
        b.reduction = reduction;
        b.enable_channel = enable_channel;
        b.enable_spatial = enable_spatial;
        b.residual = residual;
        b.combine = combine;
        b.spatial_kernel = spatial_kernel;
        b.ch_w1 = Tensor<T>::zeros({channels / reduction, channels});
        b.ch_w2 = Tensor<T>::zeros({channels, channels / reduction});
        const std::int64_t sq = combine == SpatialCombine::Concat ? 2 : 1;
        b.sp_w = Tensor<T>::zeros({1, sq, spatial_kernel, spatial_kernel});
        b.sp_b = Tensor<T>::zeros({1});
        return b;
    }

    // sigma( MLP(avgpool(f)) + MLP(maxpool(f)) ), shape [N,C,1,1]
    Tensor<T> channel_weights(Graph<T>* g, const Tensor<T>& f) const {
        ops::check_rank(f, 4, "cbam_channel", "input");
        require<ShapeError>(f.dim(1) == channels, "cbam_channel: input has ", f.dim(1),
                            " channels, block expects ", channels);
        const auto mlp = [&](const Tensor<T>& pooled) {
            Tensor<T> v = ops::reshape(g, pooled, {f.dim(0), channels});
            v = ops::relu(g, ops::fully_connected(g, v, ch_w1, Tensor<T>{}));
            return ops::fully_connected(g, v, ch_w2, Tensor<T>{});
        };
        Tensor<T> a = mlp(ops::global_avg_pool(g, f));
        Tensor<T> m = mlp(ops::global_max_pool(g, f));
        Tensor<T> s = ops::sigmoid(g, ops::elementwise_add(g, a, m));
        return ops::reshape(g, s, {f.dim(0), channels, 1, 1});
    }

    // Channel dimension squeezed to 1 by avg and max, each passed through the
    // (shared, in add mode) 7x7 convolution; shape [N,1,H,W].
    Tensor<T> spatial_weights(Graph<T>* g, const Tensor<T>& f) const {
        ops::check_rank(f, 4, "cbam_spatial", "input");
        const std::int64_t pad = spatial_kernel / 2;
        Tensor<T> avg = ops::channel_mean(g, f);
        Tensor<T> mx = ops::channel_max(g, f);
        Tensor<T> pre;
        if (combine == SpatialCombine::Add) {
            Tensor<T> ca = ops::conv2d(g, avg, sp_w, sp_b, 1, pad);
            Tensor<T> cm = ops::conv2d(g, mx, sp_w, sp_b, 1, pad);
            pre = ops::elementwise_add(g, ca, cm);
        } else {
            pre = ops::conv2d(g, ops::concat_channels(g, avg, mx), sp_w, sp_b, 1, pad);
        }
        return ops::sigmoid(g, pre);
    }

    Tensor<T> forward(Graph<T>* g, const Tensor<T>& f) const {
        require<ConfigError>(enable_channel || enable_spatial || residual,
                             "cbam_forward: both attention paths disabled and no residual");
        if (!enable_channel && !enable_spatial) return f; // pure skip
        Tensor<T> h = f;
        if (enable_channel) h = ops::elementwise_mul(g, h, channel_weights(g, f));
        if (enable_spatial) h = ops::elementwise_mul(g, h, spatial_weights(g, h));
        return residual ? ops::elementwise_add(g, h, f) : h;
    }
};

template <class T>
Tensor<T> cbam_forward(Graph<T>* g, const CBAMBlock<T>& block, const Tensor<T>& f) {
    return block.forward(g, f);
}

} // namespace tra
